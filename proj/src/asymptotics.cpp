#include "nlevel/asymptotics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "nlevel/errors.hpp"

namespace nlevel {

Complex Prediction::value(double epsilon) const {
    return alignment * prefactor * std::exp(-kI * integral_sum / epsilon);
}

double Prediction::log_modulus(double epsilon) const {
    return std::log(std::abs(alignment * prefactor)) + integral_sum.imag() / epsilon;
}

PathSpec crossing_loop(const GeneratorModel& model, Complex z0, const std::vector<DegeneracyPoint>& degs, int orientation,
                       const LoopOptions& opt) {
    const double side = z0.imag() > 0.0 ? 1.0 : -1.0;
    const double depth = std::abs(z0.imag());
    double top = std::min(opt.height_factor * depth, 0.5 * (depth + model.strip_alpha));
    double w = opt.max_half_width;
    for (const auto& d : degs) {
        if (d.z0 == z0 || side * d.z0.imag() <= 0.0) continue;
        const double dx = std::abs(d.z0.real() - z0.real());
        if (dx < 1e-9) {
            if (std::abs(d.z0.imag()) > depth) top = std::min(top, 0.5 * (depth + std::abs(d.z0.imag())));
        } else {
            w = std::min(w, 0.5 * dx);
        }
    }
    return rectangle_loop(0.0, z0.real() - w, z0.real() + w, side * top, orientation);
}

std::vector<std::pair<Complex, int>> crossing_chain(const GeneratorModel& model, int j,
                                                    const std::vector<DegeneracyPoint>& degs) {
    if (!model.has_diagram()) throw NoCrossingChain("model has no crossing diagram");
    const int target = model.sigma.at(static_cast<std::size_t>(j));
    if (target == j) throw NoCrossingChain("sigma(j) = j: element is diagonal");
    const int side = target > j ? 1 : -1;
    std::vector<std::pair<Complex, int>> chain;
    int running = j;
    for (const auto& c : model.crossing_points) {
        if (c.j != j && c.k != j) continue;
        const int k = side > 0 ? c.position : c.position + 1;
        if (k != running) throw NoCrossingChain("crossing order inconsistent with the running label");
        const DegeneracyPoint& d = degeneracy_for_crossing(degs, c.t, side);
        chain.emplace_back(d.z0, k);
        running = k + side;
    }
    if (running != target) throw NoCrossingChain("crossings do not lead from j to sigma(j)");
    return chain;
}

Prediction predict_element(const GeneratorModel& model, int j, const std::vector<DegeneracyPoint>& degs,
                           const LoopOptions& opt) {
    const auto chain = crossing_chain(model, j, degs);
    Prediction p;
    p.source = j;
    p.target = model.sigma[static_cast<std::size_t>(j)];
    const int side = p.target > j ? 1 : -1;
    for (const auto& [z0, k] : chain) {
        CrossingLoop cl;
        cl.z0 = z0;
        cl.branch = k;
        cl.loop = crossing_loop(model, z0, degs, -side, opt);
        const MonodromyResult mr = monodromy(model, cl.loop, opt.transport);
        cl.next = mr.sigma0[static_cast<std::size_t>(k)];
        if (cl.next != k + side) throw NoCrossingChain("loop does not exchange labels " + std::to_string(k + 1) + " and " +
                                                       std::to_string(k + side + 1));
        cl.theta = mr.thetas(k);
        cl.integral = mr.integrals(k);
        p.gamma_total += std::abs(cl.integral.imag());
        p.prefactor *= std::exp(-kI * cl.theta);
        p.integral_sum += cl.integral;
        p.loops.push_back(std::move(cl));
    }
    return p;
}

double bound_element(const GeneratorModel& model, const Prediction& pred, int l, double terminal_height) {
    if (model.dim <= 2) throw NotApplicable("two-level model has no off-target element");
    if (l == pred.source || l < 0 || l >= model.dim) throw DomainError("l must differ from j and be a valid index");
    const ComplexVector e = sorted_eigenvalues(model.limit_plus);
    const double gap = e(pred.target).real() - e(model.sigma[static_cast<std::size_t>(l)]).real();
    return pred.gamma_total - terminal_height * gap;
}

std::vector<double> auto_epsilons(double gamma, double budget, double eps_max, int count, double prefactor_modulus) {
    if (!(gamma > 0.0 && budget > 0.0 && budget < 1e-2 && eps_max > 0.0 && count >= 2))
        throw DomainError("auto_epsilons needs gamma > 0, 0 < budget < 1e-2, eps_max > 0, count >= 2");
    const double eps_min = gamma / std::log(std::min(1.0, prefactor_modulus) / (100.0 * budget));
    if (eps_min >= eps_max) throw DynamicRangeExceeded("eps_min is not below eps_max");
    std::vector<double> out(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i)
        out[static_cast<std::size_t>(i)] = eps_max * std::pow(eps_min / eps_max, double(i) / (count - 1));
    return out;
}

std::pair<double, double> linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    if (n < 2 || y.size() != n) throw DomainError("linear_fit needs at least two paired samples");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= double(n);
    my /= double(n);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx == 0.0) throw DomainError("linear_fit abscissae coincide");
    const double slope = sxy / sxx;
    return {slope, my - slope * mx};
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& f) {
    const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex m;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    f(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(m);
                    if (!error) error = std::current_exception();
                    next.store(n);
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

SweepFit fit_sweep(const std::vector<SweepRecord>& records, double gamma_predicted) {
    SweepFit fit;
    fit.gamma_predicted = gamma_predicted;
    if (records.size() < 2) return fit;
    std::vector<double> inv, logs, eps, rel;
    double smallest = std::numeric_limits<double>::infinity();
    for (const auto& r : records) {
        inv.push_back(1.0 / r.epsilon);
        logs.push_back(std::log(std::abs(r.s_numeric)));
        eps.push_back(r.epsilon);
        rel.push_back(r.rel_error_modulus);
        if (r.epsilon < smallest) {
            smallest = r.epsilon;
            fit.eps_log_s_smallest = r.epsilon * logs.back();
        }
    }
    const auto [slope, intercept] = linear_fit(inv, logs);
    fit.gamma_fit = -slope;
    fit.log_prefactor_fit = intercept;
    const auto [rs, ri] = linear_fit(eps, rel);
    fit.rel_error_slope = rs;
    fit.rel_error_intercept = ri;
    return fit;
}

SweepResult sweep(const FrameTable& table, const TailWindow& window, const Prediction& pred,
                  const std::vector<double>& epsilons, double ode_tol, int threads) {
    const double budget = ode_tol + window.tail_estimate;
    for (double eps : epsilons) {
        if (!(eps > 0.0)) throw DomainError("epsilon must be positive");
        if (std::abs(pred.value(eps)) < 100.0 * budget * (1.0 - 1e-9))
            throw DynamicRangeExceeded("predicted |s| at eps = " + std::to_string(eps) + " is below 100 x error budget");
    }
    SweepResult out;
    out.records.resize(epsilons.size());
    parallel_for(epsilons.size(), threads, [&](std::size_t i) {
        const double eps = epsilons[i];
        const SMatrixResult r = s_matrix(table, eps, ode_tol, window.tail_estimate);
        SweepRecord rec;
        rec.epsilon = eps;
        rec.row = pred.target;
        rec.col = pred.source;
        rec.s_numeric = r.S(pred.target, pred.source);
        rec.s_predicted = pred.value(eps);
        rec.rel_error_modulus = std::abs(std::abs(rec.s_numeric) - std::abs(rec.s_predicted)) / std::abs(rec.s_predicted);
        rec.budget = budget;
        out.records[i] = rec;
    });
    out.fit = fit_sweep(out.records, pred.gamma_total);
    return out;
}

SweepResult sweep(const GeneratorModel& model, const Prediction& pred, const std::vector<double>& epsilons,
                  double ode_tol, int threads, const FrameTable::Options& table) {
    const TailWindow w = tail_window(model, ode_tol);
    const auto t = build_frame_table(model, w, table);
    return sweep(*t, w, pred, epsilons, ode_tol, threads);
}

}  // namespace nlevel
