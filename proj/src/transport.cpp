#include "nlevel/transport.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nlevel/errors.hpp"

namespace nlevel {

PathSpec PathSpec::segment(Complex a, Complex b) { return polyline({a, b}); }

PathSpec PathSpec::polyline(std::vector<Complex> v) {
    PathSpec p;
    p.vertices = std::move(v);
    p.closed = false;
    p.orientation = 0;
    return p;
}

PathSpec PathSpec::loop(std::vector<Complex> v) {
    PathSpec p;
    p.vertices = std::move(v);
    if (p.vertices.front() != p.vertices.back()) p.vertices.push_back(p.vertices.front());
    p.closed = true;
    const double area = p.signed_area();
    p.orientation = area > 0.0 ? 1 : (area < 0.0 ? -1 : 0);
    return p;
}

double PathSpec::length() const {
    double L = 0.0;
    for (std::size_t i = 1; i < vertices.size(); ++i) L += std::abs(vertices[i] - vertices[i - 1]);
    return L;
}

double PathSpec::signed_area() const {
    double a = 0.0;
    for (std::size_t i = 1; i < vertices.size(); ++i) {
        const Complex p = vertices[i - 1], q = vertices[i];
        a += p.real() * q.imag() - q.real() * p.imag();
    }
    if (!vertices.empty() && vertices.front() != vertices.back()) {
        const Complex p = vertices.back(), q = vertices.front();
        a += p.real() * q.imag() - q.real() * p.imag();
    }
    return 0.5 * a;
}

PathSpec PathSpec::reversed() const {
    PathSpec p = *this;
    std::reverse(p.vertices.begin(), p.vertices.end());
    p.orientation = -orientation;
    return p;
}

PathSpec PathSpec::conjugated() const {
    PathSpec p = *this;
    for (auto& v : p.vertices) v = std::conj(v);
    p.orientation = -orientation;
    return p;
}

void check_path(const PathSpec& path, double strip_alpha) {
    if (path.vertices.size() < 2) throw DomainError("path needs at least two vertices");
    for (std::size_t i = 0; i < path.vertices.size(); ++i) {
        if (std::abs(path.vertices[i].imag()) > strip_alpha + 1e-12)
            throw DomainError("path leaves the analyticity strip");
        if (i > 0 && path.vertices[i] == path.vertices[i - 1]) throw DomainError("consecutive vertices coincide");
    }
    if (path.closed && path.vertices.front() != path.vertices.back())
        throw DomainError("closed path must end at its first vertex");
}

PathSpec rectangle_loop(Complex base, double a, double b, double h, int orientation) {
    const double y0 = base.imag();
    std::vector<Complex> v{base};
    auto push = [&v](Complex z) {
        if (v.back() != z) v.push_back(z);
    };
    push({a, y0});
    push({a, y0 + h});
    push({b, y0 + h});
    push({b, y0});
    push(base);
    PathSpec p = PathSpec::loop(v);
    if (orientation != 0 && p.orientation != orientation) p = p.reversed();
    return p;
}

std::vector<int> match_labels(const ComplexVector& targets, const ComplexVector& values) {
    const Eigen::Index n = targets.size();
    struct Cand {
        double d;
        int j, k;
    };
    std::vector<Cand> c;
    c.reserve(static_cast<std::size_t>(n * n));
    for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) c.push_back({std::abs(targets(j) - values(k)), j, k});
    std::stable_sort(c.begin(), c.end(), [](const Cand& x, const Cand& y) { return x.d < y.d; });
    std::vector<int> out(static_cast<std::size_t>(n), -1);
    std::vector<char> used(static_cast<std::size_t>(n), 0);
    int assigned = 0;
    for (const auto& x : c) {
        if (out[static_cast<std::size_t>(x.j)] >= 0 || used[static_cast<std::size_t>(x.k)]) continue;
        out[static_cast<std::size_t>(x.j)] = x.k;
        used[static_cast<std::size_t>(x.k)] = 1;
        if (++assigned == n) break;
    }
    return out;
}

namespace {

double labelled_min_gap(const ComplexVector& e) {
    double g = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < e.size(); ++j)
        for (Eigen::Index k = j + 1; k < e.size(); ++k) g = std::min(g, std::abs(e(j) - e(k)));
    return g;
}

}  // namespace

FramePath transport_frame(const GeneratorModel& model, const PathSpec& path, const TransportOptions& opt,
                          const ComplexVector* initial_labels) {
    check_path(path, model.strip_alpha + 1e-9);
    const int n = model.dim;
    const Eigen::Index nn = static_cast<Eigen::Index>(n) * n;

    FramePath fp;
    fp.path = path;

    const Complex z0 = path.start();
    SpectralFrame f0 = eig_simple(model.eval(z0), 0.0);
    if (f0.min_gap < opt.gap_tol) throw PathThroughDegeneracy("path starts at a degeneracy");
    if (initial_labels) {
        const auto m = match_labels(*initial_labels, f0.eigenvalues);
        f0 = reorder(f0, m);
    }
    f0.point = z0;
    fp.start_frame = f0;

    ComplexVector anchor = f0.eigenvalues;
    double anchor_gap = f0.min_gap;

    // Most recent labelled evaluation, reused by the acceptance hook.
    double cache_s = std::numeric_limits<double>::quiet_NaN();
    SpectralFrame cache_frame;
    ComplexMatrix cache_K;

    Complex za, u;
    double s_offset = 0.0;

    auto labelled_frame = [&](double s, SpectralFrame& out, ComplexMatrix& K) -> bool {
        const Complex z = za + s * u;
        const ComplexMatrix H = model.eval(z);
        SpectralFrame f = decompose(H);
        if (f.min_gap < opt.gap_tol)
            throw PathThroughDegeneracy("gap " + std::to_string(f.min_gap) + " near z = (" +
                                        std::to_string(z.real()) + ", " + std::to_string(z.imag()) + ")");
        const auto m = match_labels(anchor, f.eigenvalues);
        for (int j = 0; j < n; ++j) {
            if (std::abs(anchor(j) - f.eigenvalues(m[static_cast<std::size_t>(j)])) >= 0.5 * anchor_gap) return false;
        }
        out = reorder(f, m);
        out.point = z;
        K = k_matrix_direct(out, model.deriv(z));
        return true;
    };

    auto rhs = [&](double s, const ComplexVector& y, ComplexVector& dy) -> bool {
        SpectralFrame f;
        ComplexMatrix K;
        if (!labelled_frame(s, f, K)) return false;
        cache_s = s;
        cache_frame = f;
        cache_K = K;
        dy.resize(y.size());
        Eigen::Map<const ComplexMatrix> W(y.data(), n, n);
        Eigen::Map<ComplexMatrix> dW(dy.data(), n, n);
        dW.noalias() = (K * u) * W;
        dy.tail(n) = f.eigenvalues * u;
        return true;
    };

    auto record = [&](double s, const ComplexVector& y, const SpectralFrame& f, const ComplexMatrix& K) {
        FrameSample smp;
        smp.z = za + s * u;
        smp.s = s_offset + s;
        smp.frame = f;
        smp.K = K;
        smp.W = Eigen::Map<const ComplexMatrix>(y.data(), n, n);
        smp.integrals = y.tail(n);
        fp.samples.push_back(std::move(smp));
    };

    auto accept = [&](double s, const ComplexVector& y) -> bool {
        SpectralFrame f;
        ComplexMatrix K;
        if (cache_s == s) {
            f = cache_frame;
            K = cache_K;
        } else if (!labelled_frame(s, f, K)) {
            return false;
        }
        anchor = f.eigenvalues;
        anchor_gap = labelled_min_gap(anchor);
        record(s, y, f, K);
        return true;
    };

    ComplexVector y = ComplexVector::Zero(nn + n);
    Eigen::Map<ComplexMatrix>(y.data(), n, n).setIdentity();

    OdeOptions oo;
    oo.rtol = opt.tol;
    oo.atol = opt.tol;
    oo.h_max = opt.h_max;

    {
        za = z0;
        u = 1.0;
        SpectralFrame f = f0;
        ComplexMatrix K = k_matrix_direct(f0, model.deriv(z0));
        record(0.0, y, f, K);
        fp.vertex_samples.push_back(0);
    }
    for (int seg = 0; seg < path.segments(); ++seg) {
        const Complex a = path.vertices[static_cast<std::size_t>(seg)];
        const Complex b = path.vertices[static_cast<std::size_t>(seg + 1)];
        const double len = std::abs(b - a);
        za = a;
        u = (b - a) / len;
        cache_s = std::numeric_limits<double>::quiet_NaN();
        const OdeStats st = integrate_dop853(rhs, 0.0, len, y, oo, accept);
        fp.stats.accepted += st.accepted;
        fp.stats.rejected += st.rejected;
        fp.stats.rhs_calls += st.rhs_calls;
        s_offset += len;
        fp.vertex_samples.push_back(fp.samples.size() - 1);
    }

    if (path.closed) {
        fp.label_map = match_labels(fp.back().frame.eigenvalues, fp.start_frame.eigenvalues);
    } else {
        const SpectralFrame fend = eig_simple(model.eval(path.end()), 0.0);
        fp.label_map = match_labels(fp.back().frame.eigenvalues, fend.eigenvalues);
    }
    return fp;
}

ComplexMatrix couplings(const FramePath& fp, std::size_t at_index) {
    const FrameSample& smp = fp.samples.at(at_index);
    Eigen::PartialPivLU<ComplexMatrix> lu(smp.W);
    if (!(lu.rcond() > 1e-14)) throw SingularW("transport matrix is numerically singular");
    ComplexMatrix a = -fp.start_frame.left * lu.solve(smp.K * smp.W) * fp.start_frame.right;
    a.diagonal().setZero();
    return a;
}

Complex delta_phase(const FramePath& fp, int j, int k, std::size_t at_index) {
    if (j == k) return 0.0;
    const FrameSample& smp = at_index == static_cast<std::size_t>(-1) ? fp.back() : fp.samples.at(at_index);
    return smp.integrals(j) - smp.integrals(k);
}

double intertwining_residual(const FramePath& fp) {
    double r = 0.0;
    const auto P0 = fp.start_frame.projectors();
    for (const auto& smp : fp.samples) {
        for (Eigen::Index j = 0; j < smp.frame.dim(); ++j) {
            const ComplexMatrix d = smp.W * P0[static_cast<std::size_t>(j)] - smp.frame.projector(j) * smp.W;
            r = std::max(r, d.cwiseAbs().maxCoeff());
        }
    }
    return r;
}

MonodromyResult monodromy(const GeneratorModel& model, const PathSpec& loop, const TransportOptions& opt, double tol,
                          const ComplexVector* initial_labels) {
    if (!loop.closed) throw DomainError("monodromy needs a closed loop");
    const FramePath fp = transport_frame(model, loop, opt, initial_labels);
    MonodromyResult res;
    res.loop = loop;
    res.sigma0 = fp.label_map;
    res.W_loop = fp.back().W;
    res.integrals = fp.back().integrals;
    const int n = model.dim;
    res.thetas.resize(n);
    const auto& R0 = fp.start_frame.right;
    const auto& L0 = fp.start_frame.left;
    for (int j = 0; j < n; ++j) {
        const int sj = res.sigma0[static_cast<std::size_t>(j)];
        const ComplexVector v = res.W_loop * R0.col(j);
        const Complex lambda = (L0.row(sj) * v)(0, 0);
        const double resid = (v - lambda * R0.col(sj)).norm() / std::max(1e-300, v.norm());
        res.proportionality_residual = std::max(res.proportionality_residual, resid);
        res.thetas(j) = kI * std::log(lambda);
    }
    if (res.proportionality_residual > tol)
        throw NonProportional("loop image not proportional to a frame vector, residual " +
                              std::to_string(res.proportionality_residual));
    return res;
}

}  // namespace nlevel
