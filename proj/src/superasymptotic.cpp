#include "nlevel/superasymptotic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "nlevel/chebyshev.hpp"
#include "nlevel/errors.hpp"
#include "nlevel/ode.hpp"

namespace nlevel {

PathGrid PathGrid::make(const PathSpec& path, double panel_length, int nodes_per_panel) {
    if (path.vertices.size() < 2) throw DomainError("path grid needs at least one segment");
    if (!(panel_length > 0.0) || nodes_per_panel < 3) throw DomainError("invalid panel parameters");
    PathGrid g;
    g.path = path;
    g.nodes_per_panel = nodes_per_panel;
    g.x = lobatto_nodes(nodes_per_panel);
    g.bary = lobatto_bary_weights(nodes_per_panel);
    g.cc = clenshaw_curtis_weights(nodes_per_panel);
    g.D = lobatto_diff_matrix(nodes_per_panel);
    for (int s = 0; s < path.segments(); ++s) {
        const Complex a = path.vertices[static_cast<std::size_t>(s)];
        const Complex b = path.vertices[static_cast<std::size_t>(s + 1)];
        const double len = std::abs(b - a);
        if (len == 0.0) continue;
        const Complex dir = (b - a) / len;
        const int np = std::max(1, static_cast<int>(std::ceil(len / panel_length - 1e-12)));
        for (int p = 0; p < np; ++p) {
            Panel pn;
            pn.za = a + dir * (len * p / np);
            pn.dir = dir;
            pn.length = len / np;
            pn.first = g.z.size();
            for (int k = 0; k < nodes_per_panel; ++k) {
                if (k == nodes_per_panel - 1) {
                    g.z.push_back(p + 1 == np ? b : a + dir * (len * (p + 1) / np));
                } else {
                    g.z.push_back(pn.za + dir * (0.5 * pn.length * (1.0 + g.x(k))));
                }
            }
            g.panels.push_back(pn);
        }
    }
    return g;
}

Complex path_integral(const PathGrid& grid, const std::vector<Complex>& f) {
    if (f.size() != grid.size()) throw DimensionMismatch("samples do not match the grid");
    Complex sum = 0.0;
    for (const auto& p : grid.panels) {
        Complex s = 0.0;
        for (int k = 0; k < grid.nodes_per_panel; ++k) s += grid.cc(k) * f[p.first + static_cast<std::size_t>(k)];
        sum += 0.5 * p.length * p.dir * s;
    }
    return sum;
}

namespace {

void bary_weights(const PathGrid& g, double u, Eigen::VectorXd& w) {
    const int n = g.nodes_per_panel;
    w.resize(n);
    for (int k = 0; k < n; ++k) {
        if (u == g.x(k)) {
            w.setZero();
            w(k) = 1.0;
            return;
        }
    }
    double total = 0.0;
    for (int k = 0; k < n; ++k) {
        w(k) = g.bary(k) / (u - g.x(k));
        total += w(k);
    }
    w /= total;
}

}  // namespace

ComplexMatrix path_transport(const PathGrid& grid, const std::vector<ComplexMatrix>& A, double tol) {
    if (A.size() != grid.size()) throw DimensionMismatch("samples do not match the grid");
    const Eigen::Index n = A.front().rows();
    ComplexVector y(n * n);
    Eigen::Map<ComplexMatrix>(y.data(), n, n).setIdentity();
    OdeOptions oo;
    oo.rtol = tol;
    oo.atol = tol;
    Eigen::VectorXd w;
    ComplexMatrix Ai(n, n);
    for (const auto& p : grid.panels) {
        auto rhs = [&](double s, const ComplexVector& yy, ComplexVector& dy) -> bool {
            bary_weights(grid, 2.0 * s / p.length - 1.0, w);
            Ai.setZero();
            for (int k = 0; k < grid.nodes_per_panel; ++k) Ai += w(k) * A[p.first + static_cast<std::size_t>(k)];
            dy.resize(yy.size());
            Eigen::Map<const ComplexMatrix> W(yy.data(), n, n);
            Eigen::Map<ComplexMatrix>(dy.data(), n, n).noalias() = (p.dir * Ai) * W;
            return true;
        };
        integrate_dop853(rhs, 0.0, p.length, y, oo);
    }
    return Eigen::Map<ComplexMatrix>(y.data(), n, n);
}

int optimal_truncation(double fitted_c, double epsilon) {
    if (!(fitted_c > 0.0) || !(epsilon > 0.0)) throw DomainError("optimal_truncation needs c > 0 and eps > 0");
    return static_cast<int>(std::floor(1.0 / (std::numbers::e * fitted_c * epsilon)));
}

RenormSequence renorm_sequence(const GeneratorModel& model, double epsilon, std::shared_ptr<const PathGrid> grid,
                               int q_max, int threads, const ComplexVector* start_labels) {
    if (!(epsilon > 0.0)) throw DomainError("epsilon must be positive");
    if (q_max < 1) throw DomainError("q_max must be at least 1");
    const PathGrid& g = *grid;
    const std::size_t N = g.size();
    const int n = model.dim;
    RenormSequence rs;
    rs.epsilon = epsilon;
    rs.q_max = q_max;
    rs.grid = grid;
    rs.levels.resize(static_cast<std::size_t>(q_max + 1));
    rs.diffs.assign(static_cast<std::size_t>(q_max + 1), 0.0);
    rs.e_deviation.assign(static_cast<std::size_t>(q_max + 1), 0.0);

    std::vector<ComplexMatrix> H(N), Hp(N);
    std::vector<ComplexVector> raw(N);
    RenormLevel& L0 = rs.levels[0];
    L0.K.resize(N);
    L0.e.resize(N);
    parallel_for(N, threads, [&](std::size_t i) {
        H[i] = model.eval(g.z[i]);
        Hp[i] = model.deriv(g.z[i]);
        const SpectralFrame f = decompose(H[i]);
        if (f.min_gap < 1e-10 * std::max(1.0, H[i].norm())) throw GapCollapse("grid passes through a degeneracy");
        L0.K[i] = k_matrix_direct(f, Hp[i]);
        raw[i] = f.eigenvalues;
    });
    ComplexVector prev = start_labels ? *start_labels : sorted_eigenvalues(H[0]);
    for (std::size_t i = 0; i < N; ++i) {
        const auto m = match_labels(prev, raw[i]);
        ComplexVector e(n);
        for (int j = 0; j < n; ++j) e(j) = raw[i](m[static_cast<std::size_t>(j)]);
        L0.e[i] = e;
        prev = e;
    }

    std::vector<ComplexMatrix> dK(N);
    for (int q = 1; q <= q_max; ++q) {
        const RenormLevel& P = rs.levels[static_cast<std::size_t>(q - 1)];
        for (const auto& p : g.panels) {
            const double scale = 2.0 / p.length;
            for (int k = 0; k < g.nodes_per_panel; ++k) {
                ComplexMatrix d = ComplexMatrix::Zero(n, n);
                for (int m = 0; m < g.nodes_per_panel; ++m) d += g.D(k, m) * P.K[p.first + static_cast<std::size_t>(m)];
                dK[p.first + static_cast<std::size_t>(k)] = d * (scale / p.dir);
            }
        }
        RenormLevel& Lq = rs.levels[static_cast<std::size_t>(q)];
        Lq.K.resize(N);
        Lq.e.resize(N);
        std::vector<double> dnorm(N), edev(N);
        parallel_for(N, threads, [&](std::size_t i) {
            const ComplexMatrix Hq = H[i] - kI * epsilon * P.K[i];
            const ComplexMatrix Hqp = Hp[i] - kI * epsilon * dK[i];
            SpectralFrame f;
            try {
                f = decompose(Hq);
            } catch (const Error&) {
                throw GapCollapse("H_" + std::to_string(q) + " has a degenerate spectrum; eps too large");
            }
            if (f.min_gap < 1e-10 * std::max(1.0, Hq.norm()))
                throw GapCollapse("H_" + std::to_string(q) + " has a degenerate spectrum; eps too large");
            Lq.K[i] = k_matrix_direct(f, Hqp);
            const auto m = match_labels(L0.e[i], f.eigenvalues);
            ComplexVector e(n);
            for (int j = 0; j < n; ++j) e(j) = f.eigenvalues(m[static_cast<std::size_t>(j)]);
            Lq.e[i] = e;
            dnorm[i] = spectral_norm(Lq.K[i] - P.K[i]);
            edev[i] = (e - L0.e[i]).cwiseAbs().maxCoeff();
        });
        rs.diffs[static_cast<std::size_t>(q)] = *std::max_element(dnorm.begin(), dnorm.end());
        rs.e_deviation[static_cast<std::size_t>(q)] = *std::max_element(edev.begin(), edev.end());
    }
    return rs;
}

EnvelopeFit fit_envelope(const std::vector<double>& diffs, double epsilon) {
    const int Q = static_cast<int>(diffs.size()) - 1;
    if (Q < 2) throw DomainError("envelope fit needs diffs for q = 1, 2");
    EnvelopeFit fit;
    fit.argmin = 1;
    for (int q = 2; q <= Q; ++q)
        if (diffs[static_cast<std::size_t>(q)] < diffs[static_cast<std::size_t>(fit.argmin)]) fit.argmin = q;
    fit.interior_minimum = fit.argmin > 1 && fit.argmin < Q;
    const int last = std::max(2, fit.argmin);
    std::vector<double> qs, ys;
    for (int q = 1; q <= last; ++q) {
        const double d = diffs[static_cast<std::size_t>(q)];
        if (!(d > 0.0)) continue;
        qs.push_back(q);
        ys.push_back(std::log(d) - q * std::log(epsilon) - std::lgamma(q + 1.0));
    }
    if (qs.size() < 2) throw DomainError("envelope fit needs two positive diffs");
    const auto [slope, intercept] = linear_fit(qs, ys);
    fit.c_hat = std::exp(slope);
    fit.q_star = std::max(1, optimal_truncation(fit.c_hat, epsilon));
    auto envelope = [&](int q, double b) { return b * std::exp(q * std::log(epsilon * fit.c_hat) + std::lgamma(q + 1.0)); };
    fit.b_hat = std::exp(intercept);
    const int qmax = std::min(fit.q_star, Q);
    for (int q = 1; q <= qmax; ++q)
        fit.b_hat = std::max(fit.b_hat, diffs[static_cast<std::size_t>(q)] / envelope(q, 1.0));
    fit.envelope_bounds = true;
    for (int q = 1; q <= qmax; ++q)
        fit.envelope_bounds = fit.envelope_bounds && diffs[static_cast<std::size_t>(q)] <= envelope(q, fit.b_hat) * (1.0 + 1e-12);
    return fit;
}

namespace {

SpectralFrame labelled_frame(const ComplexMatrix& H, const ComplexVector& labels) {
    SpectralFrame f = decompose(H);
    return reorder(f, match_labels(labels, f.eigenvalues));
}

}  // namespace

ImprovedPrediction improved_prediction(const GeneratorModel& model, const Prediction& plain, double epsilon,
                                       const SuperOptions& opt) {
    const int n = model.dim;
    auto gp = std::make_shared<const PathGrid>(
        PathGrid::make(PathSpec::segment(0.0, opt.window), opt.panel_length, opt.nodes_per_panel));
    auto gm = std::make_shared<const PathGrid>(
        PathGrid::make(PathSpec::segment(0.0, -opt.window), opt.panel_length, opt.nodes_per_panel));
    const RenormSequence rp = renorm_sequence(model, epsilon, gp, opt.q_max, opt.threads);
    const RenormSequence rm = renorm_sequence(model, epsilon, gm, opt.q_max, opt.threads);

    ImprovedPrediction out;
    out.real_axis_diffs.resize(rp.diffs.size());
    for (std::size_t q = 0; q < rp.diffs.size(); ++q) out.real_axis_diffs[q] = std::max(rp.diffs[q], rm.diffs[q]);
    out.fit = fit_envelope(out.real_axis_diffs, epsilon);
    const int q = std::clamp(std::min(out.fit.q_star, out.fit.argmin), 1, opt.q_max);
    out.q_used = q;
    const std::size_t qi = static_cast<std::size_t>(q);

    // Frames of H and H_q at 0, labelled by the sorted real-axis eigenvalues.
    const ComplexMatrix H0 = model.eval(0.0);
    const SpectralFrame f0 = eig_simple(H0, 0.0);
    const SpectralFrame fs0 = labelled_frame(H0 - kI * epsilon * rp.levels[qi - 1].K[0], f0.eigenvalues);

    CorrectionPhases& ph = out.phases;
    ph.beta_plus.resize(n);
    ph.beta_minus.resize(n);
    ph.integral_plus.resize(n);
    ph.integral_minus.resize(n);
    auto side = [&](const RenormSequence& rs, const PathGrid& g, ComplexVector& beta, ComplexVector& integral, double sign) {
        const ComplexMatrix Ws = path_transport(g, rs.levels[qi].K);
        const ComplexMatrix W = path_transport(g, rs.levels[0].K);
        const SpectralFrame fT = labelled_frame(model.eval(g.z.back()), rs.levels[0].e.back());
        for (int j = 0; j < n; ++j) {
            const Complex num = (fT.left.row(j) * Ws * fs0.right.col(j))(0, 0);
            const Complex den = (fT.left.row(j) * W * f0.right.col(j))(0, 0);
            beta(j) = kI * std::log(num / den);
            std::vector<Complex> d(g.size());
            for (std::size_t i = 0; i < g.size(); ++i) d[i] = rs.levels[qi].e[i](j) - rs.levels[0].e[i](j);
            integral(j) = sign * path_integral(g, d);
        }
    };
    side(rp, *gp, ph.beta_plus, ph.integral_plus, 1.0);
    side(rm, *gm, ph.beta_minus, ph.integral_minus, -1.0);
    ph.alpha_star.resize(n, n);
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
            ph.alpha_star(k, j) =
                ph.beta_plus(k) - ph.beta_minus(j) + (ph.integral_plus(k) + ph.integral_minus(j)) / epsilon;

    Prediction p = plain;
    p.gamma_total = 0.0;
    p.prefactor = 1.0;
    p.integral_sum = 0.0;
    for (auto& cl : p.loops) {
        auto g = std::make_shared<const PathGrid>(PathGrid::make(cl.loop, opt.panel_length, opt.nodes_per_panel));
        const RenormSequence rl = renorm_sequence(model, epsilon, g, q, opt.threads, &f0.eigenvalues);
        std::vector<Complex> e(g->size());
        for (std::size_t i = 0; i < g->size(); ++i) e[i] = rl.levels[qi].e[i](cl.branch);
        cl.integral = path_integral(*g, e);
        const ComplexMatrix Wl = path_transport(*g, rl.levels[qi].K);
        const Complex lambda = (fs0.left.row(cl.next) * Wl * fs0.right.col(cl.branch))(0, 0);
        cl.theta = kI * std::log(lambda);
        p.gamma_total += std::abs(cl.integral.imag());
        p.prefactor *= std::exp(-kI * cl.theta);
        p.integral_sum += cl.integral;
    }
    p.alignment = std::exp(-kI * ph.alpha_star(p.target, p.source));
    out.prediction = p;
    return out;
}

}  // namespace nlevel
