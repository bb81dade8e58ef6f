#include <doctest.h>

#include <cmath>

#include "nlevel/chebyshev.hpp"
#include "nlevel/ode.hpp"
#include "nlevel/smatrix_direct.hpp"
#include "nlevel/symmetry.hpp"

using namespace nlevel;

namespace {

double max_abs(const ComplexMatrix& A) { return A.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("Lobatto differentiation and quadrature are exact on polynomials") {
    const int n = 12;
    const Eigen::VectorXd x = lobatto_nodes(n);
    CHECK(x(0) == -1.0);
    CHECK(x(n - 1) == 1.0);
    const Eigen::MatrixXd D = lobatto_diff_matrix(n);
    Eigen::VectorXd f(n), df(n);
    for (int i = 0; i < n; ++i) {
        f(i) = std::pow(x(i), 7) - 2.0 * x(i);
        df(i) = 7.0 * std::pow(x(i), 6) - 2.0;
    }
    CHECK((D * f - df).cwiseAbs().maxCoeff() < 1e-11);
    const Eigen::VectorXd w = clenshaw_curtis_weights(n);
    Eigen::VectorXd g(n);
    for (int i = 0; i < n; ++i) g(i) = std::pow(x(i), 8);
    CHECK(w.dot(g) == doctest::Approx(2.0 / 9.0).epsilon(1e-13));
}

TEST_CASE("panel grid shares exact endpoints") {
    const PanelGrid g = PanelGrid::make(-1.3, 2.9, 0.25, 10);
    CHECK(g.panel_length() <= 0.25);
    for (int p = 0; p + 1 < g.panels; ++p) CHECK(g.node(p, g.nodes_per_panel - 1) == g.node(p + 1, 0));
    CHECK(g.node(0, 0) == -1.3);
    CHECK(g.node(g.panels - 1, g.nodes_per_panel - 1) == 2.9);
    CHECK(g.panel_of(10.0) == g.panels - 1);
}

TEST_CASE("DOP853 reproduces an oscillatory exponential") {
    ComplexVector y(1);
    y(0) = 1.0;
    OdeOptions opt;
    opt.rtol = 1e-12;
    opt.atol = 1e-14;
    const OdeStats st = integrate_dop853(
        [](double, const ComplexVector& v, ComplexVector& dv) {
            dv = Complex(-0.1, 5.0) * v;
            return true;
        },
        0.0, 3.0, y, opt, [](double, const ComplexVector&) { return true; });
    CHECK(std::abs(y(0) - std::exp(Complex(-0.1, 5.0) * 3.0)) < 1e-10);
    CHECK(st.accepted > 0);
}

TEST_CASE("tail window") {
    SUBCASE("exponential decay") {
        const TailWindow w = tail_window(two_level_avoided(0.5), 1e-8);
        CHECK(w.envelope == "exponential");
        CHECK(w.T_plus >= 9.0);
        CHECK(w.T_plus <= 13.0);
        CHECK(w.T_minus == -w.T_plus);
        CHECK(w.tail_estimate <= 1e-9);
        const TailWindow tight = tail_window(two_level_avoided(0.5), 1e-12);
        // log(1/tol) growth: e^{-2T} scaling moves T by about ln(1e4) / 2
        CHECK(tight.T_plus - w.T_plus == doctest::Approx(0.5 * std::log(1e4)).epsilon(0.2));
    }
    SUBCASE("power-law decay") {
        const GeneratorModel m = custom_model({{"1", "0.3/(1 + z^2)"}, {"0.3/(1 + z^2)", "-1"}}, 0.8, 2.0, 1000.0);
        const TailWindow a = tail_window(m, 1e-4), b = tail_window(m, 1e-6);
        CHECK(a.envelope == "power");
        CHECK(b.tail_estimate <= 1e-7 * 1.01);
        // tail C T^{1 - rate} / (rate - 1) = tol / 10
        const double expected = std::pow(100.0, 1.0 / (b.fit_rate - 1.0));
        CHECK(b.T_plus / a.T_plus == doctest::Approx(expected).epsilon(0.05));
    }
}

TEST_CASE("trivial S-matrices") {
    SUBCASE("constant generator") {
        ComplexMatrix H = ComplexMatrix::Zero(2, 2);
        H(0, 0) = -1.0;
        H(1, 1) = 1.0;
        const SMatrixResult r = s_matrix(constant_model(H), 0.1);
        CHECK(max_abs(r.S - ComplexMatrix::Identity(2, 2)) < 1e-12);
    }
    SUBCASE("commuting family") {
        const GeneratorModel m = custom_model({{"tanh(z)", "0"}, {"0", "2 + tanh(z)"}}, 1.2, 1.0);
        const SMatrixResult r = s_matrix(m, 0.05);
        CHECK(max_abs(r.S - ComplexMatrix::Identity(2, 2)) < 1e-12);
    }
}

TEST_CASE("two-level transition amplitude") {
    const GeneratorModel m = two_level_avoided(0.5);
    const TailWindow w = tail_window(m, 1e-10);
    const auto table = build_frame_table(m, w);
    const ComplexVector c05 = integrate_column(*table, 0.05, 0, 1e-10);
    const ComplexVector c10 = integrate_column(*table, 0.1, 0, 1e-10);
    CHECK(std::abs(c05(1)) > 0.0);
    CHECK(std::abs(c05(1)) < 1.0);
    CHECK(std::abs(c05(1)) < std::abs(c10(1)));
    // independent route: the original equation followed by projection on the frame
    const ComplexVector psi = integrate_column_psi(m, *table, 0.05, 0, 1e-11);
    CHECK(std::abs(std::abs(psi(1)) - std::abs(c05(1))) < 1e-8);
    CHECK(std::abs(std::abs(psi(0)) - std::abs(c05(0))) < 1e-8);

    const SMatrixResult full = s_matrix(*table, 0.05, 1e-10, w.tail_estimate);
    const SMatrixResult cols = s_matrix_by_columns(*table, 0.05, 1e-10, w.tail_estimate);
    CHECK(max_abs(full.S - cols.S) < 1e-9);
    CHECK(max_abs(full.S.col(0) - c05) < 1e-9);

    // S = I + O(eps) up to the exponentially small off-diagonal terms
    const SMatrixResult r10 = s_matrix(*table, 0.1, 1e-10, w.tail_estimate);
    const double ratio = spectral_norm(r10.S - ComplexMatrix::Identity(2, 2)) /
                         spectral_norm(full.S - ComplexMatrix::Identity(2, 2));
    CHECK(ratio > 1.0);
    CHECK(ratio < 4.0);
}

TEST_CASE("three-level S is unitary within the error budget") {
    const GeneratorModel m = three_level_adiabatic(0.1);
    const double tol = 1e-10;
    const TailWindow w = tail_window(m, tol);
    const auto table = build_frame_table(m, w);
    const SMatrixResult r = s_matrix(*table, 0.05, tol, w.tail_estimate);
    const double res = spectral_norm(r.S.adjoint() * r.S - ComplexMatrix::Identity(3, 3));
    CHECK(within_budget(res, tol, w.tail_estimate));
    CHECK(r.T_plus == w.T_plus);
    CHECK(r.step_count > 0);
}
