#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "nlevel/complex_geometry.hpp"
#include "nlevel/smatrix_direct.hpp"

namespace nlevel {

/// One loop of a crossing chain, based at 0 and encircling a single degeneracy.
struct CrossingLoop {
    PathSpec loop;
    Complex z0{};
    int branch = 0;      // running real-axis label k entering the loop
    int next = 0;        // label k +- 1 after the loop
    Complex theta{};     // theta_k of the loop monodromy
    Complex integral{};  // loop integral of the continued e_k
};

struct Prediction {
    int source = 0;  // j (0-based)
    int target = 0;  // sigma(j)
    std::vector<CrossingLoop> loops;
    double gamma_total = 0.0;
    Complex prefactor{1.0, 0.0};
    Complex integral_sum{};
    /// Extra phase factor exp(-i alpha*), 1 for the plain prediction.
    Complex alignment{1.0, 0.0};

    Complex value(double epsilon) const;
    double log_modulus(double epsilon) const;
};

struct LoopOptions {
    double height_factor = 2.0;   // loop top at height_factor * |Im z0|
    double max_half_width = 0.25;
    TransportOptions transport;
};

/// Rectangle loop based at 0 around z0, avoiding the other degeneracies.
PathSpec crossing_loop(const GeneratorModel& model, Complex z0, const std::vector<DegeneracyPoint>& degs, int orientation,
                       const LoopOptions& opt = {});

/// Chain of degeneracies (z0, running label) met by branch j, in t order.
std::vector<std::pair<Complex, int>> crossing_chain(const GeneratorModel& model, int j,
                                                    const std::vector<DegeneracyPoint>& degs);

Prediction predict_element(const GeneratorModel& model, int j, const std::vector<DegeneracyPoint>& degs,
                           const LoopOptions& opt = {});

/// Decay exponent of the off-target element (sigma(l), j):
/// Gamma_total - h (e_sigma(j)(+inf) - e_sigma(l)(+inf)), h the signed terminal height of the path.
double bound_element(const GeneratorModel& model, const Prediction& pred, int l, double terminal_height);

struct SweepRecord {
    double epsilon = 0.0;
    int row = 0;
    int col = 0;
    Complex s_numeric{};
    Complex s_predicted{};
    double rel_error_modulus = 0.0;
    double budget = 0.0;
};

struct SweepFit {
    double gamma_fit = 0.0;          // -slope of log|s| against 1/eps
    double log_prefactor_fit = 0.0;  // intercept
    double gamma_predicted = 0.0;
    double eps_log_s_smallest = 0.0;
    double rel_error_slope = 0.0;    // slope of rel_error_modulus against eps
    double rel_error_intercept = 0.0;
};

struct SweepResult {
    std::vector<SweepRecord> records;
    SweepFit fit;
};

/// Descending geometric list of `count` values from eps_max down to Gamma / ln(|g| / (100 budget)).
std::vector<double> auto_epsilons(double gamma, double budget, double eps_max, int count, double prefactor_modulus = 1.0);

/// Least-squares slope and intercept of y against x.
std::pair<double, double> linear_fit(const std::vector<double>& x, const std::vector<double>& y);

/// Direct S at each eps (concurrently, `threads` workers) against the prediction.
SweepResult sweep(const GeneratorModel& model, const Prediction& pred, const std::vector<double>& epsilons,
                  double ode_tol, int threads = 1, const FrameTable::Options& table = {});

/// Variant taking an already built table and window.
SweepResult sweep(const FrameTable& table, const TailWindow& window, const Prediction& pred,
                  const std::vector<double>& epsilons, double ode_tol, int threads = 1);

SweepFit fit_sweep(const std::vector<SweepRecord>& records, double gamma_predicted);

/// Runs f(i) for i in [0, n) on up to `threads` workers.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& f);

}  // namespace nlevel
