#include "nlevel/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "nlevel/errors.hpp"

namespace nlevel {

namespace {

Complex sech2(Complex z) {
    const Complex c = std::cosh(z);
    return 1.0 / (c * c);
}

bool check_real_on_real(const MatrixFunction& H) {
    const Complex pts[] = {{0.3, 0.2}, {-1.1, 0.5}, {2.0, -0.7}, {0.0, 0.9}};
    for (const auto& z : pts) {
        if ((H(std::conj(z)) - H(z).conjugate()).norm() > 1e-12 * (1.0 + H(z).norm())) return false;
    }
    return true;
}

// Eigenvalue derivatives e_j' = l_j H' r_j at a point, sorted as sorted_eigenvalues.
Eigen::VectorXd sorted_slopes(const MatrixFunction& H, const MatrixFunction& Hp, double t) {
    const SpectralFrame f = eig_simple(H(t), 0.0);
    const ComplexMatrix d = Hp(t);
    Eigen::VectorXd out(f.dim());
    for (Eigen::Index j = 0; j < f.dim(); ++j) out(j) = (f.left.row(j) * d * f.right.col(j))(0, 0).real();
    return out;
}

void finish_limits(GeneratorModel& m, double limit_t) {
    m.limit_minus = m.eval(Complex(-limit_t, 0.0));
    m.limit_plus = m.eval(Complex(limit_t, 0.0));
}

}  // namespace

ComplexVector sorted_eigenvalues(const ComplexMatrix& H) {
    Eigen::ComplexEigenSolver<ComplexMatrix> solver(H, false);
    if (solver.info() != Eigen::Success) throw NonConvergence("eigenvalue solve failed");
    ComplexVector e = solver.eigenvalues();
    std::sort(e.data(), e.data() + e.size(), [](Complex a, Complex b) {
        if (a.real() != b.real()) return a.real() < b.real();
        return a.imag() < b.imag();
    });
    return e;
}

std::vector<CrossingEntry> crossing_diagram(const MatrixFunction& H, int dim, double T, std::vector<int>* sigma) {
    const double step = 0.005;
    const int N = static_cast<int>(std::ceil(2.0 * T / step));
    std::vector<double> ts(static_cast<std::size_t>(N + 1));
    std::vector<ComplexVector> ev(ts.size());
    double scale = 1.0;
    for (int i = 0; i <= N; ++i) {
        ts[static_cast<std::size_t>(i)] = -T + 2.0 * T * i / N;
        ev[static_cast<std::size_t>(i)] = sorted_eigenvalues(H(ts[static_cast<std::size_t>(i)]));
        scale = std::max(scale, ev[static_cast<std::size_t>(i)].cwiseAbs().maxCoeff());
    }
    auto gap_at = [&](int a, double t) {
        const ComplexVector e = sorted_eigenvalues(H(t));
        return std::abs(e(a + 1) - e(a));
    };
    struct Found {
        double t;
        int a;
    };
    std::vector<Found> found;
    for (int a = 0; a + 1 < dim; ++a) {
        auto g = [&](int i) { return std::abs(ev[static_cast<std::size_t>(i)](a + 1) - ev[static_cast<std::size_t>(i)](a)); };
        for (int i = 1; i < N; ++i) {
            if (!(g(i) <= g(i - 1) && g(i) < g(i + 1))) continue;
            double lo = ts[static_cast<std::size_t>(i - 1)], hi = ts[static_cast<std::size_t>(i + 1)];
            for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
                const double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
                if (gap_at(a, m1) < gap_at(a, m2))
                    hi = m2;
                else
                    lo = m1;
            }
            const double tr = 0.5 * (lo + hi);
            if (gap_at(a, tr) < 1e-6 * scale) found.push_back({tr, a});
        }
    }
    std::sort(found.begin(), found.end(), [](const Found& x, const Found& y) { return x.t < y.t; });

    // Analytic derivative for slopes via a centered difference of H (H is only a callable here).
    const MatrixFunction Hp = [&H](Complex z) {
        const double h = 1e-5;
        return ComplexMatrix((H(z + h) - H(z - h)) / (2.0 * h));
    };
    std::vector<int> perm(static_cast<std::size_t>(dim));
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<CrossingEntry> out;
    for (const auto& f : found) {
        const double eta = 1e-4;
        const Eigen::VectorXd sl = sorted_slopes(H, Hp, f.t - eta);
        int jb = perm[static_cast<std::size_t>(f.a)], kb = perm[static_cast<std::size_t>(f.a + 1)];
        double diff = sl(f.a) - sl(f.a + 1);
        if (jb > kb) {
            std::swap(jb, kb);
            diff = -diff;
        }
        out.push_back({f.t, jb, kb, f.a, diff});
        std::swap(perm[static_cast<std::size_t>(f.a)], perm[static_cast<std::size_t>(f.a + 1)]);
    }
    if (sigma) {
        sigma->assign(static_cast<std::size_t>(dim), 0);
        for (int pos = 0; pos < dim; ++pos) (*sigma)[static_cast<std::size_t>(perm[static_cast<std::size_t>(pos)])] = pos;
    }
    return out;
}

GeneratorModel two_level_avoided(double delta) {
    if (!(delta > 0.0 && delta < 1.0)) throw DomainError("two_level_avoided needs 0 < delta < 1");
    GeneratorModel m;
    m.family = "two_level_avoided";
    m.dim = 2;
    m.eval = [delta](Complex z) {
        ComplexMatrix H(2, 2);
        const Complex t = std::tanh(z);
        H << t, delta, delta, -t;
        return H;
    };
    m.deriv = [](Complex z) {
        ComplexMatrix H = ComplexMatrix::Zero(2, 2);
        const Complex s = sech2(z);
        H(0, 0) = s;
        H(1, 1) = -s;
        return H;
    };
    m.eval_unperturbed = [](Complex z) {
        ComplexMatrix H = ComplexMatrix::Zero(2, 2);
        H(0, 0) = std::tanh(z);
        H(1, 1) = -std::tanh(z);
        return H;
    };
    m.strip_alpha = 1.2;
    m.decay_a = 1.0;
    m.coupling_delta = delta;
    m.real_on_real = true;
    finish_limits(m, 40.0);
    m.crossing_points = crossing_diagram(m.eval_unperturbed, 2, 8.0, &m.sigma);
    return m;
}

GeneratorModel three_level_adiabatic(double delta) {
    if (!(delta >= 0.0 && delta <= 0.3)) throw DomainError("three_level_adiabatic needs 0 <= delta <= 0.3");
    GeneratorModel m;
    m.family = "three_level_adiabatic";
    m.dim = 3;
    auto build = [](double d) {
        return [d](Complex z) {
            ComplexMatrix H = ComplexMatrix::Constant(3, 3, d);
            H(0, 0) = 3.0 * std::tanh(z);
            H(1, 1) = -1.0;
            H(2, 2) = 1.0;
            return H;
        };
    };
    m.eval = build(delta);
    m.eval_unperturbed = build(0.0);
    m.deriv = [](Complex z) {
        ComplexMatrix H = ComplexMatrix::Zero(3, 3);
        H(0, 0) = 3.0 * sech2(z);
        return H;
    };
    m.strip_alpha = 1.2;
    m.decay_a = 1.0;
    m.coupling_delta = delta;
    m.real_on_real = true;
    finish_limits(m, 40.0);
    m.crossing_points = crossing_diagram(m.eval_unperturbed, 3, 8.0, &m.sigma);
    return m;
}

std::pair<MatrixFunction, MatrixFunction> example_channel_potential(bool hermitian_complex) {
    const double im = hermitian_complex ? 0.1 : 0.0;
    MatrixFunction V = [im](Complex z) {
        ComplexMatrix v(2, 2);
        const Complex t = std::tanh(z);
        const Complex off(0.1, 0.0);
        v << 0.3 * (1.0 + t), off + kI * im * t, off - kI * im * t, -0.3 * (1.0 + t);
        return v;
    };
    MatrixFunction Vp = [im](Complex z) {
        ComplexMatrix v = ComplexMatrix::Zero(2, 2);
        const Complex s2 = sech2(z);
        v(0, 0) = 0.3 * s2;
        v(1, 1) = -0.3 * s2;
        v(0, 1) = kI * im * s2;
        v(1, 0) = -kI * im * s2;
        return v;
    };
    return {V, Vp};
}

GeneratorModel two_channel_schrodinger(double E, const MatrixFunction& V, const MatrixFunction& Vprime,
                                       double strip_alpha, double decay_a) {
    const ComplexMatrix V0 = V(0.0);
    const int mch = static_cast<int>(V0.rows());
    if (V0.rows() != V0.cols() || mch < 1) throw DimensionMismatch("potential must be square");
    for (int i = 0; i <= 800; ++i) {
        const double t = -20.0 + 40.0 * i / 800.0;
        const ComplexMatrix U = E * ComplexMatrix::Identity(mch, mch) - V(t);
        const ComplexMatrix Uh = 0.5 * (U + U.adjoint());
        Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(Uh);
        const auto& k2 = es.eigenvalues();
        if (k2.minCoeff() <= 0.0) throw PositivityViolated("E - V(t) not positive definite at t = " + std::to_string(t));
        for (int j = 0; j + 1 < mch; ++j) {
            if (std::sqrt(k2(j + 1)) - std::sqrt(k2(j)) < 1e-8)
                throw DegenerateSpectrum("channel momenta coincide at t = " + std::to_string(t));
        }
    }
    GeneratorModel m;
    m.family = "two_channel_schrodinger";
    m.dim = 2 * mch;
    m.eval = [E, V, mch](Complex z) {
        ComplexMatrix H = ComplexMatrix::Zero(2 * mch, 2 * mch);
        H.topRightCorner(mch, mch).setIdentity();
        H.bottomLeftCorner(mch, mch) = E * ComplexMatrix::Identity(mch, mch) - V(z);
        return H;
    };
    m.deriv = [Vprime, mch](Complex z) {
        ComplexMatrix H = ComplexMatrix::Zero(2 * mch, 2 * mch);
        H.bottomLeftCorner(mch, mch) = -Vprime(z);
        return H;
    };
    ComplexMatrix J = ComplexMatrix::Zero(2 * mch, 2 * mch);
    J.topRightCorner(mch, mch).setIdentity();
    J.bottomLeftCorner(mch, mch).setIdentity();
    m.metric_J = J;
    m.strip_alpha = strip_alpha;
    m.decay_a = decay_a;
    m.real_on_real = check_real_on_real(m.eval);
    finish_limits(m, 40.0);
    return m;
}

GeneratorModel constant_model(const ComplexMatrix& H0) {
    GeneratorModel m;
    m.family = "constant";
    m.dim = static_cast<int>(H0.rows());
    m.eval = [H0](Complex) { return H0; };
    const auto n = H0.rows();
    m.deriv = [n](Complex) { return ComplexMatrix(ComplexMatrix::Zero(n, n)); };
    m.strip_alpha = 1.2;
    m.decay_a = 1.0;
    m.limit_minus = H0;
    m.limit_plus = H0;
    m.real_on_real = H0.imag().norm() == 0.0;
    return m;
}

GeneratorModel custom_model(const std::vector<std::vector<std::string>>& entries, double strip_alpha,
                            double decay_a, double limit_t,
                            const std::vector<std::vector<std::string>>& unperturbed) {
    const std::size_t n = entries.size();
    if (n < 2) throw DimensionMismatch("custom model needs at least 2 rows");
    auto parse_all = [n](const std::vector<std::vector<std::string>>& rows) {
        std::vector<Expression> out;
        if (rows.size() != n) throw DimensionMismatch("expression matrix must be square");
        for (const auto& row : rows) {
            if (row.size() != n) throw DimensionMismatch("expression matrix must be square");
            for (const auto& s : row) out.push_back(Expression::parse(s));
        }
        return out;
    };
    const auto expr = parse_all(entries);
    std::vector<Expression> dexpr;
    for (const auto& e : expr) dexpr.push_back(e.derivative());
    auto assemble = [n](std::vector<Expression> ex) {
        return [n, ex = std::move(ex)](Complex z) {
            ComplexMatrix H(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t c = 0; c < n; ++c)
                    H(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = ex[r * n + c](z);
            return H;
        };
    };
    GeneratorModel m;
    m.family = "custom";
    m.dim = static_cast<int>(n);
    m.eval = assemble(expr);
    m.deriv = assemble(dexpr);
    m.strip_alpha = strip_alpha;
    m.decay_a = decay_a;
    m.real_on_real = check_real_on_real(m.eval);
    finish_limits(m, limit_t);
    if (!unperturbed.empty()) {
        m.eval_unperturbed = assemble(parse_all(unperturbed));
        m.crossing_points = crossing_diagram(m.eval_unperturbed, m.dim, std::min(limit_t, 12.0), &m.sigma);
    }
    return m;
}

HypothesisReport validate(const GeneratorModel& model, const GridSpec& grid) {
    HypothesisReport rep;
    const int n = model.dim;

    // Real-axis gap.
    rep.gap_min = std::numeric_limits<double>::infinity();
    const int nre = std::max(2, static_cast<int>(std::ceil(2.0 * grid.T / grid.re_step)));
    for (int i = 0; i <= nre; ++i) {
        const double t = -grid.T + 2.0 * grid.T * i / nre;
        const ComplexVector e = sorted_eigenvalues(model.eval(t));
        for (int j = 0; j + 1 < n; ++j) {
            const double g = std::abs(e(j + 1) - e(j));
            if (g < rep.gap_min) {
                rep.gap_min = g;
                rep.gap_argmin = t;
            }
        }
    }
    rep.crossing_table = crossing_diagram(model.eval, n, grid.T, nullptr);
    for (const auto& c : rep.crossing_table) {
        rep.gap_min = 0.0;
        rep.gap_argmin = c.t;
        break;
    }
    if (model.eval_unperturbed) rep.unperturbed_crossings = crossing_diagram(model.eval_unperturbed, n, grid.T, nullptr);

    // Decay towards the limits.
    std::vector<double> xs, ls, ts;
    double hscale = std::max(1.0, model.limit_plus.norm());
    for (int i = 0; i < 24; ++i) {
        const double t = grid.T / 3.0 + (grid.T - grid.T / 3.0) * i / 23.0;
        const double dp = (model.eval(t) - model.limit_plus).norm();
        const double dm = (model.eval(-t) - model.limit_minus).norm();
        const double d = std::max(dp, dm);
        if (d > 1e-13 * hscale) {
            xs.push_back(std::log(t));
            ts.push_back(t);
            ls.push_back(std::log(d));
        }
    }
    if (xs.size() < 3) {
        rep.decay_trivial = true;
    } else {
        auto slope = [](const std::vector<double>& x, const std::vector<double>& y) {
            const double mx = std::accumulate(x.begin(), x.end(), 0.0) / double(x.size());
            const double my = std::accumulate(y.begin(), y.end(), 0.0) / double(y.size());
            double sxy = 0.0, sxx = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) {
                sxy += (x[i] - mx) * (y[i] - my);
                sxx += (x[i] - mx) * (x[i] - mx);
            }
            return sxy / sxx;
        };
        rep.decay_fit_exponent = -slope(xs, ls);
        rep.decay_fit_rate = -slope(ts, ls);
    }

    // Cauchy-Riemann residual and closed-form derivative residual on the strip grid.
    const double h = grid.cr_step;
    const double alpha = model.strip_alpha;
    const int nim = std::max(1, grid.im_levels);
    const int ncr = std::max(2, static_cast<int>(std::ceil(2.0 * std::min(grid.T, 6.0) / 0.25)));
    for (int a = 0; a < nim; ++a) {
        const double s = nim == 1 ? 0.0 : -alpha + 2.0 * alpha * a / (nim - 1);
        for (int i = 0; i <= ncr; ++i) {
            const double t = -std::min(grid.T, 6.0) + 2.0 * std::min(grid.T, 6.0) * i / ncr;
            const Complex z(t, s);
            auto d5 = [&](Complex dir) {
                return ComplexMatrix((-model.eval(z + 2.0 * h * dir) + 8.0 * model.eval(z + h * dir) -
                                      8.0 * model.eval(z - h * dir) + model.eval(z - 2.0 * h * dir)) /
                                     (12.0 * h * dir));
            };
            const ComplexMatrix dx = d5(1.0);
            const ComplexMatrix dy = d5(kI);
            const double sc = std::max(1.0, dx.cwiseAbs().maxCoeff());
            rep.analyticity_residual = std::max(rep.analyticity_residual, (dx - dy).cwiseAbs().maxCoeff() / sc);
            rep.derivative_residual =
                std::max(rep.derivative_residual, (model.deriv(z) - dx).cwiseAbs().maxCoeff() / sc);
        }
    }
    return rep;
}

}  // namespace nlevel
