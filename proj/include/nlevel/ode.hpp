#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>

#include "nlevel/dop853_tableau.hpp"
#include "nlevel/errors.hpp"
#include "nlevel/linalg_spectral.hpp"

namespace nlevel {

struct OdeOptions {
    double rtol = 1e-10;
    double atol = 1e-12;
    double h_max = std::numeric_limits<double>::infinity();
    double h_min_rel = 1e-14;  // relative to the integration span
    std::size_t max_steps = 50'000'000;
};

struct OdeStats {
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::size_t rhs_calls = 0;
};

/// Adaptive Dormand-Prince 8(5,3) integration of y' = f(s, y) from s0 to s1 (s1 > s0).
///
/// `rhs(s, y, dy)` returns false to veto the stage, which rejects and halves the step.
/// `accept(s, y)` is called after each successful step; returning false rejects the step
/// and halves it. Error norm and step control follow the usual DOP853 scheme.
template <typename Rhs, typename Accept>
OdeStats integrate_dop853(Rhs&& rhs, double s0, double s1, ComplexVector& y, const OdeOptions& opt,
                          Accept&& accept) {
    using namespace dop853;
    OdeStats stats;
    const double span = s1 - s0;
    if (!(span > 0.0)) return stats;
    const Eigen::Index n = y.size();
    constexpr int kStages = 12;
    constexpr double kSafety = 0.9, kMinFactor = 0.2, kMaxFactor = 10.0;
    const double h_min = opt.h_min_rel * std::abs(span);

    std::array<ComplexVector, kStages + 1> K;
    for (auto& k : K) k.resize(n);
    ComplexVector y_new(n), tmp(n), f_new(n);

    auto eval = [&](double s, const ComplexVector& yy, ComplexVector& out) {
        ++stats.rhs_calls;
        return static_cast<bool>(rhs(s, yy, out));
    };

    double s = s0;
    if (!eval(s, y, K[0])) throw StepFailure("right-hand side rejected the initial point");

    // Initial step from the standard two-evaluation estimate.
    auto scale_of = [&](const ComplexVector& a) {
        Eigen::VectorXd sc(n);
        for (Eigen::Index i = 0; i < n; ++i) sc(i) = opt.atol + opt.rtol * std::abs(a(i));
        return sc;
    };
    double h;
    {
        const auto sc = scale_of(y);
        const double d0 = (y.cwiseAbs().cwiseQuotient(sc)).norm() / std::sqrt(double(n));
        const double d1 = (K[0].cwiseAbs().cwiseQuotient(sc)).norm() / std::sqrt(double(n));
        double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
        h0 = std::min({h0, span, opt.h_max});
        tmp = y + h0 * K[0];
        if (eval(s + h0, tmp, f_new)) {
            const double d2 = ((f_new - K[0]).cwiseAbs().cwiseQuotient(sc)).norm() / std::sqrt(double(n)) / h0;
            double h1;
            if (d1 <= 1e-15 && d2 <= 1e-15)
                h1 = std::max(1e-6, h0 * 1e-3);
            else
                h1 = std::pow(0.01 / std::max(d1, d2), 1.0 / 8.0);
            h = std::min(100.0 * h0, h1);
        } else {
            h = 0.1 * h0;
        }
        h = std::min({h, span, opt.h_max});
    }

    bool last_rejected = false;
    while (s < s1) {
        if (stats.accepted + stats.rejected > opt.max_steps) throw StepFailure("step budget exhausted");
        if (h < h_min) throw StepFailure("step size underflow at s = " + std::to_string(s));
        bool hit_end = false;
        if (s + h >= s1 || s1 - (s + h) < h_min) {
            h = s1 - s;
            hit_end = true;
        }

        bool ok = true;
        for (int st = 1; st < kStages && ok; ++st) {
            tmp = y;
            for (int m = 0; m < st; ++m) {
                const double a = kA[static_cast<std::size_t>(st)][static_cast<std::size_t>(m)];
                if (a != 0.0) tmp.noalias() += (h * a) * K[static_cast<std::size_t>(m)];
            }
            ok = eval(s + kC[static_cast<std::size_t>(st)] * h, tmp, K[static_cast<std::size_t>(st)]);
        }
        if (ok) {
            y_new = y;
            for (int m = 0; m < kStages; ++m) {
                const double b = kB[static_cast<std::size_t>(m)];
                if (b != 0.0) y_new.noalias() += (h * b) * K[static_cast<std::size_t>(m)];
            }
        }
        double err = std::numeric_limits<double>::infinity();
        if (ok) {
            ComplexVector e5 = ComplexVector::Zero(n), e3 = ComplexVector::Zero(n);
            for (int m = 0; m < kStages; ++m) {
                e5.noalias() += kE5[static_cast<std::size_t>(m)] * K[static_cast<std::size_t>(m)];
                e3.noalias() += kE3[static_cast<std::size_t>(m)] * K[static_cast<std::size_t>(m)];
            }
            double n5 = 0.0, n3 = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                const double sc = opt.atol + opt.rtol * std::max(std::abs(y(i)), std::abs(y_new(i)));
                n5 += std::norm(e5(i) / sc);
                n3 += std::norm(e3(i) / sc);
            }
            if (n5 == 0.0 && n3 == 0.0) {
                err = 0.0;
            } else {
                const double denom = n5 + 0.01 * n3;
                err = std::abs(h) * n5 / std::sqrt(denom * double(n));
            }
            if (!std::isfinite(err)) err = std::numeric_limits<double>::infinity();
        }

        if (ok && err <= 1.0) {
            const double s_new = hit_end ? s1 : s + h;
            if (!eval(s_new, y_new, f_new) || !accept(s_new, y_new)) {
                ++stats.rejected;
                h *= 0.5;
                last_rejected = true;
                continue;
            }
            s = s_new;
            y = y_new;
            K[0] = f_new;
            ++stats.accepted;
            double factor = err == 0.0 ? kMaxFactor : std::min(kMaxFactor, kSafety * std::pow(err, -1.0 / 8.0));
            if (last_rejected) factor = std::min(1.0, factor);
            h = std::min(h * factor, opt.h_max);
            last_rejected = false;
        } else {
            ++stats.rejected;
            if (!ok || !std::isfinite(err))
                h *= 0.5;
            else
                h *= std::max(kMinFactor, kSafety * std::pow(err, -1.0 / 8.0));
            last_rejected = true;
        }
    }
    return stats;
}

template <typename Rhs>
OdeStats integrate_dop853(Rhs&& rhs, double s0, double s1, ComplexVector& y, const OdeOptions& opt) {
    return integrate_dop853(std::forward<Rhs>(rhs), s0, s1, y, opt, [](double, const ComplexVector&) { return true; });
}

}  // namespace nlevel
