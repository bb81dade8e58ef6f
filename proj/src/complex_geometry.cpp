#include "nlevel/complex_geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "nlevel/errors.hpp"

namespace nlevel {

ComplexVector characteristic_polynomial(const ComplexMatrix& A) {
    const Eigen::Index n = A.rows();
    ComplexVector c = ComplexVector::Zero(n + 1);
    c(n) = 1.0;
    ComplexMatrix M = ComplexMatrix::Zero(n, n);
    const ComplexMatrix I = ComplexMatrix::Identity(n, n);
    for (Eigen::Index k = 1; k <= n; ++k) {
        M = A * M + c(n - k + 1) * I;
        c(n - k) = -(A * M).trace() / static_cast<double>(k);
    }
    return c;
}

Complex discriminant(const ComplexMatrix& A) {
    const ComplexVector p = characteristic_polynomial(A);
    const Eigen::Index n = p.size() - 1;
    ComplexVector dp(n);
    for (Eigen::Index i = 1; i <= n; ++i) dp(i - 1) = static_cast<double>(i) * p(i);
    // Sylvester matrix of p (degree n) and p' (degree n - 1), coefficients from highest degree.
    const Eigen::Index m = 2 * n - 1;
    ComplexMatrix S = ComplexMatrix::Zero(m, m);
    for (Eigen::Index r = 0; r < n - 1; ++r)
        for (Eigen::Index i = 0; i <= n; ++i) S(r, r + i) = p(n - i);
    for (Eigen::Index r = 0; r < n; ++r)
        for (Eigen::Index i = 0; i < n; ++i) S(n - 1 + r, r + i) = dp(n - 1 - i);
    return S.partialPivLu().determinant();
}

namespace {

double arg_change(const std::function<Complex(Complex)>& f, Complex a, Complex b, Complex fa, Complex fb, int depth) {
    if (fa == 0.0 || fb == 0.0) return std::numeric_limits<double>::quiet_NaN();
    const double d = std::arg(fb / fa);
    if (std::abs(d) > 0.6 && depth < 14) {
        const Complex m = 0.5 * (a + b);
        const Complex fm = f(m);
        return arg_change(f, a, m, fa, fm, depth + 1) + arg_change(f, m, b, fm, fb, depth + 1);
    }
    return d;
}

int winding(const std::function<Complex(Complex)>& f, Complex lo, Complex hi, int per_edge) {
    const Complex corners[4] = {lo, {hi.real(), lo.imag()}, hi, {lo.real(), hi.imag()}};
    double total = 0.0;
    for (int e = 0; e < 4; ++e) {
        const Complex a = corners[e], b = corners[(e + 1) % 4];
        Complex prev = a, fprev = f(a);
        for (int i = 1; i <= per_edge; ++i) {
            const Complex z = a + (b - a) * (double(i) / per_edge);
            const Complex fz = f(z);
            total += arg_change(f, prev, z, fprev, fz, 0);
            prev = z;
            fprev = fz;
        }
    }
    if (!std::isfinite(total)) return 0;
    return static_cast<int>(std::lround(total / (2.0 * std::numbers::pi)));
}

struct NewtonOutcome {
    bool ok = false;
    Complex z{};
    double residual = 0.0;
};

NewtonOutcome newton_discriminant(const std::function<Complex(Complex)>& f, Complex z, int mult, double cell,
                                  double tol) {
    const Complex centre = z;
    NewtonOutcome out;
    double best_step = std::numeric_limits<double>::infinity();
    Complex best_z = z;
    for (int it = 0; it < 200; ++it) {
        const Complex fz = f(z);
        if (fz == 0.0) {
            out = {true, z, 0.0};
            return out;
        }
        const double h = 1e-7 * std::max(cell, 1e-3);
        const Complex df = (f(z + h) - f(z - h)) / (2.0 * h);
        if (df == 0.0) break;
        const Complex step = static_cast<double>(std::max(1, mult)) * fz / df;
        z -= step;
        if (std::abs(z - centre) > 3.0 * cell) return out;
        const double s = std::abs(step);
        if (s < best_step) {
            best_step = s;
            best_z = z;
        }
        if (s < tol * std::max(1.0, std::abs(z))) {
            out = {true, z, std::abs(f(z))};
            return out;
        }
    }
    // Repeated roots stall at the rounding floor; accept a small final step.
    if (best_step < 1e-6 * std::max(1.0, std::abs(best_z))) out = {true, best_z, std::abs(f(best_z))};
    return out;
}

}  // namespace

ComplexVector labels_from_real_axis(const GeneratorModel& model, Complex z, const TransportOptions& opt) {
    const Complex base(z.real(), 0.0);
    if (z.imag() == 0.0) return eig_simple(model.eval(base), 0.0).eigenvalues;
    const FramePath fp = transport_frame(model, PathSpec::segment(base, z), opt);
    return fp.back().frame.eigenvalues;
}

namespace {

std::pair<int, int> classify(const GeneratorModel& model, const DegeneracyPoint& p,
                             const std::vector<DegeneracyPoint>& all) {
    const Complex z0 = p.z0;
    if (z0.imag() == 0.0) {
        const ComplexVector e = sorted_eigenvalues(model.eval(z0.real() - 1e-3));
        int best = 0;
        for (int a = 1; a + 1 < e.size(); ++a)
            if (std::abs(e(a + 1) - e(a)) < std::abs(e(best + 1) - e(best))) best = a;
        return {best, best + 1};
    }
    const double sgn = z0.imag() > 0 ? 1.0 : -1.0;
    double dmin = std::numeric_limits<double>::infinity();
    for (const auto& q : all)
        if (q.z0 != z0) dmin = std::min(dmin, std::abs(q.z0 - z0));
    const double rho = std::min(0.5 * std::abs(z0.imag()), 0.4 * dmin);
    const Complex base = z0 - kI * sgn * rho;
    const ComplexVector labels = labels_from_real_axis(model, base);
    const PathSpec loop = PathSpec::loop({base, base + rho, base + rho + 2.0 * kI * sgn * rho,
                                          base - rho + 2.0 * kI * sgn * rho, base - rho});
    try {
        TransportOptions o;
        o.tol = 1e-10;
        const FramePath fp = transport_frame(model, loop, o, &labels);
        std::vector<int> moved;
        for (int j = 0; j < model.dim; ++j)
            if (fp.label_map[static_cast<std::size_t>(j)] != j) moved.push_back(j);
        if (moved.size() == 2) return {moved[0], moved[1]};
    } catch (const Error&) {
    }
    int bj = 0, bk = 1;
    for (int j = 0; j < model.dim; ++j)
        for (int k = j + 1; k < model.dim; ++k)
            if (std::abs(labels(j) - labels(k)) < std::abs(labels(bj) - labels(bk))) {
                bj = j;
                bk = k;
            }
    return {bj, bk};
}

}  // namespace

DegeneracySearch find_degeneracies(const GeneratorModel& model, const Region& region, double grid_step,
                                   double newton_tol) {
    const std::function<Complex(Complex)> f = [&model](Complex z) { return discriminant(model.eval(z)); };
    // Offset the grid by an irrational fraction so no grid line sits on the real axis.
    const double shift = 0.3819660112501051 * grid_step;
    const int nx = static_cast<int>(std::ceil((region.re_hi - region.re_lo) / grid_step)) + 1;
    const int ny = static_cast<int>(std::ceil((region.im_hi - region.im_lo) / grid_step)) + 1;
    DegeneracySearch out;
    std::vector<DegeneracyPoint> raw;
    for (int ix = 0; ix < nx; ++ix) {
        for (int iy = 0; iy < ny; ++iy) {
            const Complex lo(region.re_lo - shift + ix * grid_step, region.im_lo - shift + iy * grid_step);
            const Complex hi = lo + Complex(grid_step, grid_step);
            const int w = winding(f, lo, hi, 2);
            if (w <= 0) continue;
            const Complex centre = 0.5 * (lo + hi);
            const NewtonOutcome r = newton_discriminant(f, centre, w, grid_step, newton_tol);
            if (!r.ok) {
                out.failed_cells.push_back(centre);
                continue;
            }
            DegeneracyPoint p;
            p.z0 = r.z;
            p.multiplicity = w;
            p.discriminant_residual = r.residual;
            raw.push_back(p);
        }
    }
    const double merge_tol = std::max(1e3 * newton_tol, 1e-6);
    for (auto& p : raw) {
        if (model.real_on_real && std::abs(p.z0.imag()) < merge_tol) p.z0 = p.z0.real();
        bool dup = false;
        for (auto& q : out.points) {
            if (std::abs(q.z0 - p.z0) < merge_tol) {
                dup = true;
                if (p.discriminant_residual < q.discriminant_residual) q = p;
                break;
            }
        }
        if (!dup && p.z0.real() >= region.re_lo && p.z0.real() <= region.re_hi && p.z0.imag() >= region.im_lo &&
            p.z0.imag() <= region.im_hi)
            out.points.push_back(p);
    }
    std::sort(out.points.begin(), out.points.end(), [](const DegeneracyPoint& a, const DegeneracyPoint& b) {
        if (a.z0.real() != b.z0.real()) return a.z0.real() < b.z0.real();
        return a.z0.imag() < b.z0.imag();
    });
    for (auto& p : out.points) {
        for (const auto& q : out.points)
            if (std::abs(q.z0 - std::conj(p.z0)) < merge_tol) p.conjugate_partner = q.z0;
        const auto [j, k] = classify(model, p, out.points);
        p.j = j;
        p.k = k;
    }
    return out;
}

Complex loop_eigenvalue_integral(const GeneratorModel& model, const PathSpec& loop, int j, const TransportOptions& opt) {
    const FramePath fp = transport_frame(model, loop, opt);
    return fp.back().integrals(j);
}

double decay_rate(const GeneratorModel& model, const PathSpec& loop, int j, const TransportOptions& opt) {
    return std::abs(loop_eigenvalue_integral(model, loop, j, opt).imag());
}

bool DissipativeReport::pass() const {
    return std::all_of(pairs.begin(), pairs.end(), [](const PairMargin& p) { return p.pass; });
}

DissipativeReport check_dissipative(const GeneratorModel& model, const PathSpec& path, int j, double slack,
                                    const TransportOptions& opt) {
    DissipativeReport rep;
    rep.path = path;
    rep.j = j;
    rep.slack = slack < 0.0 ? 1e-9 * path.length() : slack;
    const ComplexVector labels = labels_from_real_axis(model, path.start(), opt);
    TransportOptions o = opt;
    o.h_max = std::min(opt.h_max, 0.05);
    const FramePath fp = transport_frame(model, path, o, &labels);
    for (int k = 0; k < model.dim; ++k) {
        if (k == j) continue;
        PairMargin pm;
        pm.k = k;
        pm.forward_margin = std::numeric_limits<double>::infinity();
        pm.differential_margin = std::numeric_limits<double>::infinity();
        for (std::size_t m = 0; m + 1 < fp.samples.size(); ++m) {
            const auto& a = fp.samples[m];
            const auto& b = fp.samples[m + 1];
            const Complex step = b.z - a.z;
            if (std::abs(step) == 0.0) continue;
            const double fwd = (b.integrals(j) - b.integrals(k)).imag() - (a.integrals(j) - a.integrals(k)).imag();
            pm.forward_margin = std::min(pm.forward_margin, fwd);
            const Complex dir = step / std::abs(step);
            const Complex d = a.frame.eigenvalues(j) - a.frame.eigenvalues(k);
            pm.differential_margin = std::min(pm.differential_margin, d.real() * dir.imag() + d.imag() * dir.real());
        }
        pm.pass = pm.forward_margin >= -rep.slack && pm.differential_margin >= -rep.slack;
        rep.pairs.push_back(pm);
    }
    return rep;
}

int required_side(const GeneratorModel& model, int j) {
    if (!model.has_diagram()) throw NotApplicable("model has no crossing diagram");
    const int s = model.sigma.at(static_cast<std::size_t>(j));
    return s > j ? 1 : (s < j ? -1 : 0);
}

const DegeneracyPoint& degeneracy_for_crossing(const std::vector<DegeneracyPoint>& degs, double t, int side) {
    const DegeneracyPoint* best = nullptr;
    for (const auto& d : degs) {
        if (side * d.z0.imag() <= 0.0) continue;
        if (!best || std::abs(d.z0.real() - t) < std::abs(best->z0.real() - t)) best = &d;
    }
    if (!best) throw ConstructionFailure("no located degeneracy on the requested side near t = " + std::to_string(t));
    return *best;
}

namespace {

struct Box {
    double lo, hi, clear;  // abscissa range and required |height|
};

std::vector<Box> relevant_boxes(const GeneratorModel& model, int j, const std::vector<DegeneracyPoint>& degs, int side) {
    std::vector<Box> boxes;
    for (const auto& c : model.crossing_points) {
        if (c.j != j && c.k != j) continue;
        const auto& d = degeneracy_for_crossing(degs, c.t, side);
        const double L = 2.0 * std::abs(d.z0.imag());
        boxes.push_back({d.z0.real() - L, d.z0.real() + L, 1.5 * std::abs(d.z0.imag())});
    }
    std::sort(boxes.begin(), boxes.end(), [](const Box& a, const Box& b) { return a.lo < b.lo; });
    return boxes;
}

// Real parts of eigenvalue derivatives, unlabelled, at z.
double max_pair_re_derivative(const GeneratorModel& model, Complex z) {
    const SpectralFrame f = decompose(model.eval(z));
    const ComplexMatrix d = model.deriv(z);
    std::vector<double> re(static_cast<std::size_t>(f.dim()));
    for (Eigen::Index i = 0; i < f.dim(); ++i) re[static_cast<std::size_t>(i)] = (f.left.row(i) * d * f.right.col(i))(0, 0).real();
    const auto [mn, mx] = std::minmax_element(re.begin(), re.end());
    return *mx - *mn;
}

PathSpec polyline_from_heights(const std::vector<double>& u, const std::vector<double>& y) {
    std::vector<Complex> v;
    v.reserve(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) v.emplace_back(u[i], y[i]);
    return PathSpec::polyline(std::move(v));
}

std::optional<PathSpec> detour_candidate(const GeneratorModel& model, const std::vector<Box>& boxes, int side, double T,
                                        double du) {
    double ul = boxes.front().lo, ur = boxes.front().hi, clear = 0.0;
    for (const auto& b : boxes) {
        ul = std::min(ul, b.lo);
        ur = std::max(ur, b.hi);
        clear = std::max(clear, b.clear);
    }
    // b: a quarter of the smallest real-axis gap outside the boxes.
    double gap = std::numeric_limits<double>::infinity();
    for (double t = -T; t <= T + 1e-12; t += du) {
        bool inside = false;
        for (const auto& bx : boxes) inside = inside || (t >= bx.lo && t <= bx.hi);
        if (inside) continue;
        const ComplexVector e = sorted_eigenvalues(model.eval(t));
        for (Eigen::Index a = 0; a + 1 < e.size(); ++a) gap = std::min(gap, std::abs(e(a + 1) - e(a)));
    }
    const double bconst = 0.25 * gap;
    auto afun = [&](double u) {
        double m = 0.0;
        for (int i = 0; i <= 4; ++i) m = std::max(m, max_pair_re_derivative(model, Complex(u, side * clear * i / 4.0)));
        return 2.5 * m;
    };
    const int n = static_cast<int>(std::lround(2.0 * T / du));
    std::vector<double> us(static_cast<std::size_t>(n + 1)), ys(us.size());
    for (int i = 0; i <= n; ++i) us[static_cast<std::size_t>(i)] = -T + 2.0 * T * i / n;
    for (std::size_t i = 0; i < us.size(); ++i) ys[i] = side * clear;
    // Left wing: y(u) = y_flat exp(int_u^{ul} a/b); right wing symmetric.
    double acc = 0.0;
    for (int i = n; i >= 0; --i) {
        const double u = us[static_cast<std::size_t>(i)];
        if (u >= ul) continue;
        const double u_next = std::min(ul, u + 2.0 * T / n);
        acc += 0.5 * (afun(u) + afun(u_next)) * (u_next - u) / bconst;
        ys[static_cast<std::size_t>(i)] = side * clear * std::exp(acc);
        if (std::abs(ys[static_cast<std::size_t>(i)]) > 0.98 * model.strip_alpha) return std::nullopt;
    }
    acc = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double u = us[static_cast<std::size_t>(i)];
        if (u <= ur) continue;
        const double u_prev = std::max(ur, u - 2.0 * T / n);
        acc += 0.5 * (afun(u) + afun(u_prev)) * (u - u_prev) / bconst;
        ys[static_cast<std::size_t>(i)] = side * clear * std::exp(acc);
        if (std::abs(ys[static_cast<std::size_t>(i)]) > 0.98 * model.strip_alpha) return std::nullopt;
    }
    return polyline_from_heights(us, ys);
}

// Slope inside the dissipative cone {g : Re(e_j - e_k) g + Im(e_j - e_k) >= 0 for all k}, closest to 0.
std::optional<double> cone_slope(const ComplexVector& e, int j) {
    double lo = -std::numeric_limits<double>::infinity(), hi = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < e.size(); ++k) {
        if (k == j) continue;
        const Complex d = e(j) - e(k);
        if (d.real() > 0.0)
            lo = std::max(lo, -d.imag() / d.real());
        else if (d.real() < 0.0)
            hi = std::min(hi, d.imag() / -d.real());
        else if (d.imag() < 0.0)
            return std::nullopt;
    }
    if (lo > hi) return std::nullopt;
    double a = std::isfinite(lo) ? lo + 0.05 * std::abs(lo) + 1e-4 : lo;
    double b = std::isfinite(hi) ? hi - 0.05 * std::abs(hi) - 1e-4 : hi;
    if (a > b) a = b = 0.5 * (lo + hi);
    return std::clamp(0.0, a, b);
}

std::optional<PathSpec> cone_candidate(const GeneratorModel& model, int j, const std::vector<Box>& boxes, int side,
                                       double T, double du, double anchor_height) {
    const int n = static_cast<int>(std::lround(2.0 * T / du));
    std::vector<double> us(static_cast<std::size_t>(n + 1)), ys(us.size(), 0.0);
    for (int i = 0; i <= n; ++i) us[static_cast<std::size_t>(i)] = -T + 2.0 * T * i / n;
    int ia = 0;
    while (ia < n && us[static_cast<std::size_t>(ia + 1)] <= boxes.front().lo) ++ia;
    ys[static_cast<std::size_t>(ia)] = side * anchor_height;

    ComplexVector start_labels;
    try {
        start_labels = labels_from_real_axis(model, Complex(us[static_cast<std::size_t>(ia)], ys[static_cast<std::size_t>(ia)]));
    } catch (const Error&) {
        return std::nullopt;
    }
    auto march = [&](int dir) -> bool {
        ComplexVector labels = start_labels;
        for (int i = ia; dir > 0 ? i < n : i > 0; i += dir) {
            const double u = us[static_cast<std::size_t>(i)], y = ys[static_cast<std::size_t>(i)];
            const SpectralFrame f = decompose(model.eval(Complex(u, y)));
            const auto m = match_labels(labels, f.eigenvalues);
            ComplexVector e(model.dim);
            for (int k = 0; k < model.dim; ++k) e(k) = f.eigenvalues(m[static_cast<std::size_t>(k)]);
            labels = e;
            const auto g = cone_slope(e, j);
            if (!g) return false;
            const double ynext = y + dir * (*g) * du;
            if (std::abs(ynext) > 0.98 * model.strip_alpha || side * ynext <= 0.0) return false;
            ys[static_cast<std::size_t>(i + dir)] = ynext;
        }
        return true;
    };
    if (!march(+1) || !march(-1)) return std::nullopt;
    for (const auto& b : boxes)
        for (std::size_t i = 0; i < us.size(); ++i)
            if (us[i] >= b.lo && us[i] <= b.hi && side * ys[i] < 0.999 * b.clear) return std::nullopt;
    return polyline_from_heights(us, ys);
}

}  // namespace

CandidatePath construct_candidate_path(const GeneratorModel& model, int j, const std::vector<DegeneracyPoint>& degs,
                                       int side, double T) {
    if (side == 0) side = required_side(model, j);
    if (side == 0) throw NotApplicable("sigma(j) = j: no crossing to pass");
    const std::vector<Box> boxes = relevant_boxes(model, j, degs, side);
    if (boxes.empty()) throw ConstructionFailure("no crossing involves this index");
    const double du = 0.02;
    CandidatePath out;
    out.side = side;

    if (auto p = detour_candidate(model, boxes, side, T, du)) {
        try {
            DissipativeReport rep = check_dissipative(model, *p, j);
            if (rep.pass()) {
                out.path = *p;
                out.method = "detour";
                out.terminal_height = p->end().imag();
                out.report = std::move(rep);
                return out;
            }
        } catch (const Error&) {
        }
    }

    double clear = 0.0;
    for (const auto& b : boxes) clear = std::max(clear, b.clear);
    for (double h = clear; h < 0.98 * model.strip_alpha; h *= 1.15) {
        auto p = cone_candidate(model, j, boxes, side, T, du, h);
        if (!p) continue;
        try {
            DissipativeReport rep = check_dissipative(model, *p, j);
            if (rep.pass()) {
                out.path = *p;
                out.method = "cone";
                out.terminal_height = p->end().imag();
                out.report = std::move(rep);
                return out;
            }
        } catch (const Error&) {
        }
    }
    throw ConstructionFailure("no dissipative candidate clears the degeneracy boxes inside the strip");
}

std::vector<LevelSample> level_lines(const GeneratorModel& model, int j, int k, const Region& region, int nx, int ny) {
    std::vector<LevelSample> out;
    if (nx < 2 || ny < 2) throw DomainError("level-line grid needs at least 2 x 2 points");
    std::vector<double> xs(static_cast<std::size_t>(nx)), ys(static_cast<std::size_t>(ny));
    for (int i = 0; i < nx; ++i) xs[static_cast<std::size_t>(i)] = region.re_lo + (region.re_hi - region.re_lo) * i / (nx - 1);
    for (int i = 0; i < ny; ++i) ys[static_cast<std::size_t>(i)] = region.im_lo + (region.im_hi - region.im_lo) * i / (ny - 1);
    TransportOptions o;
    o.tol = 1e-10;
    for (double x : xs) {
        // Real-axis part from 0 to x.
        Complex base_delta = 0.0;
        ComplexVector base_labels;
        if (x != 0.0) {
            const FramePath fr = transport_frame(model, PathSpec::segment(0.0, x), o);
            base_delta = delta_phase(fr, j, k);
        }
        auto column = [&](const std::vector<double>& hs) {
            std::vector<Complex> v{Complex(x, 0.0)};
            for (double h : hs)
                if (h != 0.0) v.emplace_back(x, h);
            std::vector<double> vals(hs.size(), std::numeric_limits<double>::quiet_NaN());
            try {
                if (v.size() > 1) {
                    const FramePath fv = transport_frame(model, PathSpec::polyline(v), o);
                    std::size_t vi = 1;
                    for (std::size_t i = 0; i < hs.size(); ++i) {
                        if (hs[i] == 0.0) {
                            vals[i] = base_delta.imag();
                            continue;
                        }
                        vals[i] = (base_delta + delta_phase(fv, j, k, fv.vertex_samples[vi])).imag();
                        ++vi;
                    }
                } else {
                    for (auto& val : vals) val = base_delta.imag();
                }
            } catch (const Error&) {
            }
            return vals;
        };
        std::vector<double> up, down;
        for (double y : ys) (y >= 0.0 ? up : down).push_back(y);
        std::sort(up.begin(), up.end());
        std::sort(down.begin(), down.end(), std::greater<>());
        const auto vu = column(up);
        const auto vd = column(down);
        for (std::size_t i = 0; i < down.size(); ++i) out.push_back({x, down[i], vd[i]});
        for (std::size_t i = 0; i < up.size(); ++i) out.push_back({x, up[i], vu[i]});
    }
    std::sort(out.begin(), out.end(), [](const LevelSample& a, const LevelSample& b) {
        if (a.re != b.re) return a.re < b.re;
        return a.im < b.im;
    });
    return out;
}

}  // namespace nlevel
