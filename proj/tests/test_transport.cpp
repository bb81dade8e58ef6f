#include <doctest.h>

#include <cmath>

#include "nlevel/errors.hpp"
#include "nlevel/transport.hpp"

using namespace nlevel;

namespace {

double max_abs(const ComplexMatrix& A) { return A.cwiseAbs().maxCoeff(); }

// Composite 5-point Gauss-Legendre rule.
template <typename F>
double gauss(F f, double a, double b, int panels = 400) {
    static const double x[5] = {0.0, -0.5384693101056831, 0.5384693101056831, -0.9061798459386640,
                                0.9061798459386640};
    static const double w[5] = {0.5688888888888889, 0.4786286704993665, 0.4786286704993665, 0.2369268850561891,
                                0.2369268850561891};
    double s = 0.0;
    const double h = (b - a) / panels;
    for (int p = 0; p < panels; ++p) {
        const double m = a + (p + 0.5) * h;
        for (int i = 0; i < 5; ++i) s += 0.5 * h * w[i] * f(m + 0.5 * h * x[i]);
    }
    return s;
}

}  // namespace

TEST_CASE("path construction") {
    const PathSpec r = rectangle_loop(0.0, -0.2, 0.2, 0.6, -1);
    CHECK(r.closed);
    CHECK(r.orientation == -1);
    CHECK(r.signed_area() == doctest::Approx(-0.24));
    CHECK(r.start() == Complex(0.0));
    CHECK(r.end() == Complex(0.0));
    CHECK(rectangle_loop(0.0, -0.2, 0.2, -0.6, 1).signed_area() == doctest::Approx(0.24));
    CHECK(r.length() == doctest::Approx(0.2 + 0.6 + 0.4 + 0.6 + 0.2));
    CHECK(r.reversed().orientation == 1);
    CHECK(PathSpec::segment(0.0, 2.0).segments() == 1);
    CHECK_THROWS_AS(check_path(PathSpec::segment(Complex(0.0, 0.0), Complex(0.0, 1.5)), 1.2), DomainError);
}

TEST_CASE("constant generator transports trivially") {
    ComplexMatrix H = ComplexMatrix::Zero(3, 3);
    H(0, 0) = -1.0;
    H(1, 1) = 0.5;
    H(2, 2) = 2.0;
    const GeneratorModel m = constant_model(H);
    const FramePath fp = transport_frame(m, PathSpec::polyline({Complex(-1.0), Complex(2.0, 0.5), Complex(3.0)}));
    for (const auto& s : fp.samples) CHECK(max_abs(s.W - ComplexMatrix::Identity(3, 3)) < 1e-14);
    CHECK(fp.label_map == std::vector<int>{0, 1, 2});
    CHECK(max_abs(couplings(fp, fp.samples.size() - 1)) < 1e-14);
}

TEST_CASE("two-level real segment") {
    const GeneratorModel m = two_level_avoided(0.5);
    const FramePath fp = transport_frame(m, PathSpec::segment(-10.0, 10.0));
    CHECK(intertwining_residual(fp) <= 1e-8);
    // Real-symmetric H: the transported frame stays real orthogonal.
    const ComplexMatrix& W = fp.back().W;
    CHECK(W.imag().cwiseAbs().maxCoeff() < 1e-9);
    CHECK(max_abs(W.transpose() * W - ComplexMatrix::Identity(2, 2)) < 1e-9);
}

TEST_CASE("couplings at t = 0 against a finite-difference frame") {
    const double delta = 0.5;
    const GeneratorModel m = two_level_avoided(delta);
    const FramePath fp = transport_frame(m, PathSpec::segment(0.0, 1.0));
    const ComplexMatrix a = couplings(fp, 0);
    CHECK(a(0, 0) == Complex(0.0));
    CHECK(a(1, 1) == Complex(0.0));
    const double h = 1e-6;
    auto phi = [&](double t, int j) {
        ComplexVector v = eig_simple(m(t)).right.col(j);
        return v;
    };
    ComplexVector d1 = (phi(h, 1) - phi(-h, 1)) / (2.0 * h);
    const ComplexVector p0 = phi(0.0, 0);
    const Complex fd = -p0.dot(d1) / p0.squaredNorm();
    CHECK(std::abs(std::abs(a(0, 1)) - std::abs(fd)) < 1e-8);
    // closed form for the rotation rate: delta sech^2 / (2 (tanh^2 + delta^2)) at t = 0
    CHECK(std::abs(a(0, 1)) == doctest::Approx(1.0 / (2.0 * delta)).epsilon(1e-10));
}

TEST_CASE("accumulated phase differences") {
    const double delta = 0.5, t = 1.7;
    const GeneratorModel m = two_level_avoided(delta);
    const FramePath fp = transport_frame(m, PathSpec::segment(0.0, t));
    const double ref =
        -2.0 * gauss([&](double s) { return std::sqrt(std::pow(std::tanh(s), 2) + delta * delta); }, 0.0, t);
    CHECK(std::abs(delta_phase(fp, 0, 1) - Complex(ref)) < 1e-10);
    CHECK(std::abs(delta_phase(fp, 0, 1) + delta_phase(fp, 1, 0)) < 1e-12);
    CHECK(delta_phase(fp, 1, 1) == Complex(0.0));
}

TEST_CASE("monodromy") {
    SUBCASE("loop around no degeneracy") {
        const GeneratorModel m = two_level_avoided(0.5);
        const MonodromyResult r = monodromy(m, rectangle_loop(0.0, 1.0, 2.0, 0.3, 1));
        CHECK(r.sigma0 == std::vector<int>{0, 1});
        for (int j = 0; j < 2; ++j) {
            const double th = std::remainder(r.thetas(j).real(), 2.0 * M_PI);
            CHECK(std::abs(th) < 1e-8);
            CHECK(std::abs(r.thetas(j).imag()) < 1e-8);
            CHECK(std::abs(r.integrals(j)) < 1e-9);
        }
        CHECK(max_abs(r.W_loop - ComplexMatrix::Identity(2, 2)) < 1e-8);
    }
    SUBCASE("two-level branch point swaps the labels") {
        const GeneratorModel m = two_level_avoided(0.5);
        const double y0 = std::atan(0.5);
        const MonodromyResult r = monodromy(m, rectangle_loop(0.0, -0.2, 0.2, y0 + 0.2, -1));
        CHECK(r.sigma0 == std::vector<int>{1, 0});
        // eigenvalue continuation oracle: sqrt(tanh^2 + delta^2) changes sign around a simple zero
        CHECK(r.proportionality_residual < 1e-7);
    }
    SUBCASE("three-level loop around the first crossing") {
        const GeneratorModel m = three_level_adiabatic(0.1);
        const double x = -0.344714811701119, y = 0.0710990606628;
        const MonodromyResult r = monodromy(m, rectangle_loop(0.0, x - 0.1, x + 0.1, 2.0 * y, -1));
        CHECK(r.sigma0 == std::vector<int>{1, 0, 2});
    }
}

TEST_CASE("label matching") {
    ComplexVector t(3), v(3);
    t << 1.0, 2.0, 3.0;
    v << 3.1, 0.9, 2.05;
    CHECK(match_labels(t, v) == std::vector<int>{1, 2, 0});
}
