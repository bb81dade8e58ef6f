#pragma once

#include <memory>
#include <vector>

#include "nlevel/asymptotics.hpp"

namespace nlevel {

/// Chebyshev-Lobatto panels laid along each segment of a path.
struct PathGrid {
    struct Panel {
        Complex za{};   // start of the panel
        Complex dir{};  // unit direction of the segment
        double length = 0.0;
        std::size_t first = 0;  // index of the first node
    };

    PathSpec path;
    int nodes_per_panel = 0;
    std::vector<Panel> panels;
    std::vector<Complex> z;
    Eigen::VectorXd x, bary, cc;
    Eigen::MatrixXd D;  // differentiation on [-1, 1]

    static PathGrid make(const PathSpec& path, double panel_length = 0.1, int nodes_per_panel = 20);
    std::size_t size() const { return z.size(); }
};

/// Integral of f (sampled at the grid nodes) along the path.
Complex path_integral(const PathGrid& grid, const std::vector<Complex>& f);

/// Solution at the path end of W' = A W, W(start) = I, with A sampled at the nodes.
ComplexMatrix path_transport(const PathGrid& grid, const std::vector<ComplexMatrix>& A, double tol = 1e-12);

struct RenormLevel {
    std::vector<ComplexMatrix> K;  // K_q at the nodes
    std::vector<ComplexVector> e;  // e_j^q at the nodes, labelled like level 0
};

struct RenormSequence {
    double epsilon = 0.0;
    int q_max = 0;
    std::shared_ptr<const PathGrid> grid;
    std::vector<RenormLevel> levels;  // q = 0..q_max
    std::vector<double> diffs;        // diffs[q] = max ||K_q - K_{q-1}||, diffs[0] = 0
    std::vector<double> e_deviation;  // max |e_j^q - e_j| over nodes and j
};

struct EnvelopeFit {
    double c_hat = 0.0;
    double b_hat = 0.0;
    int q_star = 0;
    int argmin = 0;
    bool interior_minimum = false;
    bool envelope_bounds = false;  // diffs_q <= b eps^q c^q q! for 1 <= q <= q*
};

/// H_q = H - i eps K_{q-1} on the grid, q = 1..q_max. Labels at the start follow `start_labels`
/// (sorted eigenvalues at the start point when null).
RenormSequence renorm_sequence(const GeneratorModel& model, double epsilon, std::shared_ptr<const PathGrid> grid,
                               int q_max, int threads = 1, const ComplexVector* start_labels = nullptr);

/// floor(1 / (e c eps)).
int optimal_truncation(double fitted_c, double epsilon);

/// Fits log(diff_q / (eps^q q!)) = log b + q log c over 1 <= q <= argmin and lifts b to an upper envelope.
EnvelopeFit fit_envelope(const std::vector<double>& diffs, double epsilon);

struct CorrectionPhases {
    ComplexMatrix alpha_star;     // alpha*_kj
    ComplexVector beta_plus;      // beta*_j^+
    ComplexVector beta_minus;     // beta*_j^-
    ComplexVector integral_plus;  // int_0^{T+} (e_j* - e_j)
    ComplexVector integral_minus; // int_{T-}^0 (e_j* - e_j)
};

struct SuperOptions {
    int q_max = 14;
    double panel_length = 0.1;
    int nodes_per_panel = 20;
    double window = 12.0;  // real-axis half-width for the alignment phases
    int threads = 1;
};

struct ImprovedPrediction {
    Prediction prediction;
    CorrectionPhases phases;
    EnvelopeFit fit;       // from the real-axis sequence
    int q_used = 0;
    std::vector<double> real_axis_diffs;
};

/// Improved formula: e*, theta* and alpha* at the truncation order q_used = min(q*, argmin).
ImprovedPrediction improved_prediction(const GeneratorModel& model, const Prediction& plain, double epsilon,
                                       const SuperOptions& opt = {});

}  // namespace nlevel
