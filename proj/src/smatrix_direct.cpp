#include "nlevel/smatrix_direct.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "nlevel/errors.hpp"

namespace nlevel {

namespace {

// Local coupling strength max_{k != l} |(L H' R)_kl / (e_l - e_k)| on the real axis.
double coupling_proxy(const GeneratorModel& model, double t) {
    const SpectralFrame f = eig_simple(model.eval(t), 0.0);
    const ComplexMatrix Y = f.left * model.deriv(t) * f.right;
    double m = 0.0;
    for (Eigen::Index k = 0; k < f.dim(); ++k)
        for (Eigen::Index l = 0; l < f.dim(); ++l)
            if (k != l) m = std::max(m, std::abs(Y(k, l) / (f.eigenvalues(l) - f.eigenvalues(k))));
    return m;
}

struct LineFit {
    double slope = 0.0, intercept = 0.0, rss = 0.0;
};

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = double(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - f.intercept - f.slope * x[i];
        f.rss += r * r;
    }
    return f;
}

struct SideFit {
    bool trivial = true;
    bool exponential = true;
    double C = 0.0, rate = 0.0;

    double tail(double T) const {
        if (trivial) return 0.0;
        if (exponential) return C * std::exp(-rate * T) / rate;
        if (rate <= 1.0) return std::numeric_limits<double>::infinity();
        return C * std::pow(T, 1.0 - rate) / (rate - 1.0);
    }

    double solve(double target) const {
        if (trivial) return 0.0;
        if (exponential) return std::log(C / (rate * target)) / rate;
        if (rate <= 1.0) return std::numeric_limits<double>::infinity();
        return std::pow(C / ((rate - 1.0) * target), 1.0 / (rate - 1.0));
    }
};

SideFit fit_side(const GeneratorModel& model, double sign) {
    std::vector<double> ts, lts, lk;
    for (int i = 0; i <= 36; ++i) {
        const double t = 4.0 + i;
        const double k = coupling_proxy(model, sign * t);
        if (k > 1e-250 && std::isfinite(k)) {
            ts.push_back(t);
            lts.push_back(std::log(t));
            lk.push_back(std::log(k));
        }
    }
    SideFit s;
    if (ts.size() < 3) return s;
    s.trivial = false;
    const LineFit fe = fit_line(ts, lk);
    const LineFit fp = fit_line(lts, lk);
    if (fe.rss <= fp.rss && fe.slope < 0.0) {
        s.exponential = true;
        s.rate = -fe.slope;
        s.C = std::exp(fe.intercept);
    } else {
        s.exponential = false;
        s.rate = -fp.slope;
        s.C = std::exp(fp.intercept);
    }
    // Make the envelope an upper bound on the sampled points.
    double lift = 0.0;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const double model_log = s.exponential ? std::log(s.C) - s.rate * ts[i] : std::log(s.C) - s.rate * lts[i];
        lift = std::max(lift, lk[i] - model_log);
    }
    s.C *= std::exp(lift);
    return s;
}

}  // namespace

TailWindow tail_window(const GeneratorModel& model, double ode_tol, double T_max) {
    const SideFit left = fit_side(model, -1.0);
    const SideFit right = fit_side(model, 1.0);
    const double target = ode_tol / 10.0;
    // Each side gets half of the budget.
    double T = std::max({4.0, left.solve(0.5 * target), right.solve(0.5 * target)});
    if (!std::isfinite(T)) T = T_max;
    T = std::min(T, T_max);
    T = std::ceil(T * 4.0) / 4.0;
    TailWindow w;
    w.T_minus = -T;
    w.T_plus = T;
    w.tail_estimate = left.tail(T) + right.tail(T);
    const SideFit& dom = left.tail(T) >= right.tail(T) ? left : right;
    w.envelope = dom.trivial ? "none" : (dom.exponential ? "exponential" : "power");
    w.fit_constant = dom.C;
    w.fit_rate = dom.rate;
    return w;
}

FrameTable::FrameTable(const GeneratorModel& model, double T_minus, double T_plus, const Options& opt) {
    if (!(T_plus > 0.0 && T_minus < 0.0)) throw DomainError("frame table window must contain 0");
    n_ = model.dim;
    grid_ = PanelGrid::make(T_minus, T_plus, opt.panel_length, opt.panel_nodes);
    x_ = lobatto_nodes(opt.panel_nodes);
    bary_ = lobatto_bary_weights(opt.panel_nodes);

    const int npp = grid_.nodes_per_panel;
    t_.resize(static_cast<std::size_t>(grid_.size()));
    std::map<double, std::size_t> uniq;
    for (int p = 0; p < grid_.panels; ++p)
        for (int k = 0; k < npp; ++k) {
            const double t = grid_.node(p, k);
            t_[static_cast<std::size_t>(p * npp + k)] = t;
            uniq.emplace(t, 0);
        }

    std::vector<Complex> pos{0.0}, neg{0.0};
    for (const auto& [t, _] : uniq) {
        if (t > 0.0) pos.emplace_back(t, 0.0);
    }
    for (auto it = uniq.rbegin(); it != uniq.rend(); ++it) {
        if (it->first < 0.0) neg.emplace_back(it->first, 0.0);
    }

    TransportOptions to;
    to.tol = opt.transport_tol;
    to.gap_tol = 1e-10;
    const FramePath fpos = transport_frame(model, PathSpec::polyline(pos), to);
    const FramePath fneg = transport_frame(model, PathSpec::polyline(neg), to);
    frame0_ = fpos.start_frame;

    struct NodeData {
        ComplexMatrix a;
        ComplexVector D, e;
    };
    std::map<double, NodeData> data;
    auto harvest = [&](const FramePath& fp, const std::vector<Complex>& verts) {
        for (std::size_t v = 0; v < verts.size(); ++v) {
            const std::size_t idx = fp.vertex_samples[v];
            NodeData d{couplings(fp, idx), fp.samples[idx].integrals, fp.samples[idx].frame.eigenvalues};
            data[verts[v].real()] = std::move(d);
        }
    };
    harvest(fpos, pos);
    harvest(fneg, neg);
    W_plus_ = fpos.back().W;
    W_minus_ = fneg.back().W;

    a_.resize(t_.size());
    D_.resize(t_.size());
    e_.resize(t_.size());
    for (std::size_t i = 0; i < t_.size(); ++i) {
        const NodeData& d = data.at(t_[i]);
        a_[i] = d.a;
        D_[i] = d.D;
        e_[i] = d.e;
        for (int j = 0; j < n_; ++j)
            for (int k = j + 1; k < n_; ++k) max_gap_ = std::max(max_gap_, std::abs(d.e(j) - d.e(k)));
    }
}

void FrameTable::eval(double t, ComplexMatrix& a, ComplexVector& D) const {
    thread_local Eigen::VectorXd w;
    const int p = grid_.panel_of(t);
    panel_interp_weights(grid_, p, t, bary_, x_, w);
    const std::size_t base = static_cast<std::size_t>(p * grid_.nodes_per_panel);
    a.setZero(n_, n_);
    D.setZero(n_);
    for (int k = 0; k < grid_.nodes_per_panel; ++k) {
        const double wk = w(k);
        a.noalias() += wk * a_[base + static_cast<std::size_t>(k)];
        D.noalias() += wk * D_[base + static_cast<std::size_t>(k)];
    }
}

std::shared_ptr<const FrameTable> build_frame_table(const GeneratorModel& model, const TailWindow& window,
                                                    const FrameTable::Options& opt) {
    return std::make_shared<const FrameTable>(model, window.T_minus, window.T_plus, opt);
}

namespace {

ComplexMatrix integrate_block(const FrameTable& table, double epsilon, ComplexMatrix C0, double ode_tol,
                              double c_phase, OdeStats* stats) {
    if (!(epsilon > 0.0)) throw DomainError("epsilon must be positive");
    const int n = table.dim();
    const Eigen::Index m = C0.cols();
    ComplexMatrix a(n, n), A(n, n);
    ComplexVector D(n), ph(n);
    auto rhs = [&](double t, const ComplexVector& y, ComplexVector& dy) {
        table.eval(t, a, D);
        for (int k = 0; k < n; ++k) ph(k) = std::exp(kI * D(k) / epsilon);
        for (int k = 0; k < n; ++k)
            for (int l = 0; l < n; ++l) A(k, l) = a(k, l) * ph(k) / ph(l);
        dy.resize(y.size());
        Eigen::Map<const ComplexMatrix> C(y.data(), n, m);
        Eigen::Map<ComplexMatrix> dC(dy.data(), n, m);
        dC.noalias() = A * C;
        return true;
    };
    const double len = table.T_plus() - table.T_minus();
    OdeOptions oo;
    oo.rtol = ode_tol / std::max(1.0, len);
    oo.atol = oo.rtol;
    oo.h_max = table.max_gap() > 0.0 ? c_phase * epsilon / table.max_gap() : len;
    ComplexVector y = Eigen::Map<ComplexVector>(C0.data(), C0.size());
    const OdeStats st = integrate_dop853(rhs, table.T_minus(), table.T_plus(), y, oo);
    if (stats) *stats = st;
    return Eigen::Map<ComplexMatrix>(y.data(), n, m);
}

}  // namespace

ComplexVector integrate_column(const FrameTable& table, double epsilon, int j, double ode_tol, double c_phase,
                               OdeStats* stats) {
    const int n = table.dim();
    if (j < 0 || j >= n) throw DomainError("column index out of range");
    ComplexMatrix c0 = ComplexMatrix::Zero(n, 1);
    c0(j, 0) = 1.0;
    return integrate_block(table, epsilon, c0, ode_tol, c_phase, stats).col(0);
}

SMatrixResult s_matrix(const FrameTable& table, double epsilon, double ode_tol, double tail_estimate,
                       double c_phase) {
    SMatrixResult r;
    OdeStats st;
    r.S = integrate_block(table, epsilon, ComplexMatrix::Identity(table.dim(), table.dim()), ode_tol, c_phase, &st);
    r.epsilon = epsilon;
    r.T_minus = table.T_minus();
    r.T_plus = table.T_plus();
    r.ode_tol = ode_tol;
    r.tail_estimate = tail_estimate;
    r.step_count = st.accepted;
    return r;
}

SMatrixResult s_matrix_by_columns(const FrameTable& table, double epsilon, double ode_tol, double tail_estimate,
                                  double c_phase) {
    SMatrixResult r;
    const int n = table.dim();
    r.S.resize(n, n);
    for (int j = 0; j < n; ++j) {
        OdeStats st;
        r.S.col(j) = integrate_column(table, epsilon, j, ode_tol, c_phase, &st);
        r.step_count += st.accepted;
    }
    r.epsilon = epsilon;
    r.T_minus = table.T_minus();
    r.T_plus = table.T_plus();
    r.ode_tol = ode_tol;
    r.tail_estimate = tail_estimate;
    return r;
}

SMatrixResult s_matrix(const GeneratorModel& model, double epsilon, const SMatrixOptions& opt) {
    const TailWindow w = tail_window(model, opt.ode_tol);
    if (w.tail_estimate >= opt.ode_tol) throw WindowTooSmall("tail estimate exceeds ode_tol");
    const auto table = build_frame_table(model, w, opt.table);
    return s_matrix(*table, epsilon, opt.ode_tol, w.tail_estimate, opt.c_phase);
}

ComplexVector integrate_column_psi(const GeneratorModel& model, const FrameTable& table, double epsilon, int j,
                                   double ode_tol) {
    const int n = table.dim();
    const auto& R0 = table.frame0().right;
    const auto& L0 = table.frame0().left;
    const ComplexVector& Dm = table.node_phase(0);
    const ComplexVector& Dp = table.node_phase(table.nodes().size() - 1);
    ComplexVector psi = std::exp(-kI * Dm(j) / epsilon) * (table.W_minus() * R0.col(j));
    auto rhs = [&](double t, const ComplexVector& y, ComplexVector& dy) {
        dy = (-kI / epsilon) * (model.eval(t) * y);
        return true;
    };
    const double len = table.T_plus() - table.T_minus();
    OdeOptions oo;
    oo.rtol = ode_tol / std::max(1.0, len);
    oo.atol = oo.rtol;
    integrate_dop853(rhs, table.T_minus(), table.T_plus(), psi, oo);
    const ComplexVector comps = L0 * table.W_plus().partialPivLu().solve(psi);
    ComplexVector c(n);
    for (int k = 0; k < n; ++k) c(k) = std::exp(kI * Dp(k) / epsilon) * comps(k);
    return c;
}

}  // namespace nlevel
