#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nlevel/expression.hpp"
#include "nlevel/linalg_spectral.hpp"

namespace nlevel {

using MatrixFunction = std::function<ComplexMatrix(Complex)>;

/// One real crossing of the unperturbed (delta = 0) member. Labels are 0-based:
/// `j`, `k` are analytic branch labels (rank at t -> -inf) with j < k, and
/// `position` is the lower of the two adjacent real-axis positions that meet.
struct CrossingEntry {
    double t = 0.0;
    int j = 0;
    int k = 0;
    int position = 0;
    double derivative_difference = 0.0;  // d/dt (e_j - e_k) at t
};

struct GeneratorModel {
    std::string family;
    int dim = 0;
    MatrixFunction eval;
    MatrixFunction deriv;
    double strip_alpha = 1.2;
    double decay_a = 1.0;
    ComplexMatrix limit_minus;
    ComplexMatrix limit_plus;
    std::optional<ComplexMatrix> metric_J;
    std::optional<double> coupling_delta;
    /// Crossing diagram of the unperturbed member, ordered by t.
    std::vector<CrossingEntry> crossing_points;
    /// Permutation sigma (0-based): sigma[j] = label at +inf of the branch labelled j at -inf.
    std::vector<int> sigma;
    /// H(conj z) = conj H(z).
    bool real_on_real = true;
    /// Unperturbed member for crossing-diagram diagnostics (empty if not a family).
    MatrixFunction eval_unperturbed;

    ComplexMatrix operator()(Complex z) const { return eval(z); }
    ComplexMatrix derivative(Complex z) const { return deriv(z); }
    bool has_diagram() const { return !sigma.empty(); }
};

struct GridSpec {
    double T = 12.0;
    double re_step = 0.02;
    int im_levels = 7;       // samples of Im z in [-alpha, alpha]
    double cr_step = 1e-3;   // finite-difference step for the Cauchy-Riemann check
};

struct HypothesisReport {
    double gap_min = 0.0;
    double gap_argmin = 0.0;
    double decay_fit_exponent = 0.0;  // -d log||H - H(+-)|| / d log t over the fitted range
    double decay_fit_rate = 0.0;      // exponential rate from the log-linear fit
    bool decay_trivial = false;       // H(t) equals its limits to rounding
    double analyticity_residual = 0.0;
    double derivative_residual = 0.0;  // closed-form H' against finite differences
    std::vector<CrossingEntry> crossing_table;          // real crossings of the model itself
    std::vector<CrossingEntry> unperturbed_crossings;   // diagram of the delta = 0 member, if any

    bool decay_ok() const { return decay_trivial || decay_fit_exponent > 1.0; }
};

GeneratorModel two_level_avoided(double delta);
GeneratorModel three_level_adiabatic(double delta);

/// Two-channel Schrodinger generator H = [[0, I], [E - V, 0]] with metric J = [[0, I], [I, 0]].
GeneratorModel two_channel_schrodinger(double E, const MatrixFunction& V, const MatrixFunction& Vprime,
                                       double strip_alpha = 1.2, double decay_a = 1.0);

/// The two-channel potential used throughout the examples:
/// V(z) = 0.3 diag(1 + tanh z, -1 - tanh z) + 0.1 [[0, 1], [1, 0]],
/// with 0.1 i tanh(z) [[0, 1], [-1, 0]] added to the off-diagonal part when `hermitian_complex` is set.
std::pair<MatrixFunction, MatrixFunction> example_channel_potential(bool hermitian_complex = false);

/// Constant generator H(z) = H0.
GeneratorModel constant_model(const ComplexMatrix& H0);

/// Model from expression entries (row-major). `limit_t` is where H(+-) are sampled.
GeneratorModel custom_model(const std::vector<std::vector<std::string>>& entries, double strip_alpha,
                            double decay_a, double limit_t = 40.0,
                            const std::vector<std::vector<std::string>>& unperturbed = {});

/// Real-axis crossing diagram of H on [-T, T]; fills sigma as well.
std::vector<CrossingEntry> crossing_diagram(const MatrixFunction& H, int dim, double T, std::vector<int>* sigma);

HypothesisReport validate(const GeneratorModel& model, const GridSpec& grid = {});

/// Sorted real-axis eigenvalues without a gap check.
ComplexVector sorted_eigenvalues(const ComplexMatrix& H);

}  // namespace nlevel
