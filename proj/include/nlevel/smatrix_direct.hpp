#pragma once

#include <memory>
#include <string>
#include <vector>

#include "nlevel/chebyshev.hpp"
#include "nlevel/models.hpp"
#include "nlevel/ode.hpp"
#include "nlevel/transport.hpp"

namespace nlevel {

struct TailWindow {
    double T_minus = -12.0;
    double T_plus = 12.0;
    double tail_estimate = 0.0;   // envelope integral of the coupling beyond the window
    std::string envelope;         // "exponential" or "power"
    double fit_constant = 0.0;    // C in C exp(-rate |t|) or C |t|^(-rate)
    double fit_rate = 0.0;
};

/// Smallest symmetric window whose predicted truncation error is below ode_tol / 10.
TailWindow tail_window(const GeneratorModel& model, double ode_tol, double T_max = 1e4);

/// Real-axis frame transported once and tabulated at Chebyshev panel nodes: couplings a(t),
/// accumulated phases D_j(t) = integral_0^t e_j and eigenvalues e_j(t).
class FrameTable {
public:
    struct Options {
        double panel_length = 0.05;
        int panel_nodes = 20;
        double transport_tol = 1e-12;
    };

    FrameTable(const GeneratorModel& model, double T_minus, double T_plus, const Options& opt);

    int dim() const { return n_; }
    double T_minus() const { return grid_.a; }
    double T_plus() const { return grid_.b; }
    double max_gap() const { return max_gap_; }
    const SpectralFrame& frame0() const { return frame0_; }
    /// Transported frame vectors phi_j(t) = W(t) phi_j(0) at the window ends.
    const ComplexMatrix& W_minus() const { return W_minus_; }
    const ComplexMatrix& W_plus() const { return W_plus_; }
    const std::vector<double>& nodes() const { return t_; }
    const ComplexMatrix& node_coupling(std::size_t i) const { return a_[i]; }
    const ComplexVector& node_phase(std::size_t i) const { return D_[i]; }
    const ComplexVector& node_eigenvalues(std::size_t i) const { return e_[i]; }

    /// Interpolated a(t) and D(t).
    void eval(double t, ComplexMatrix& a, ComplexVector& D) const;

private:
    int n_ = 0;
    PanelGrid grid_;
    Eigen::VectorXd x_, bary_;
    std::vector<double> t_;
    std::vector<ComplexMatrix> a_;
    std::vector<ComplexVector> D_, e_;
    double max_gap_ = 0.0;
    SpectralFrame frame0_;
    ComplexMatrix W_minus_, W_plus_;
};

struct SMatrixOptions {
    double ode_tol = 1e-10;
    double c_phase = 2.0;
    FrameTable::Options table;
};

struct SMatrixResult {
    ComplexMatrix S;
    double epsilon = 0.0;
    double T_minus = 0.0;
    double T_plus = 0.0;
    double ode_tol = 0.0;
    double tail_estimate = 0.0;
    std::size_t step_count = 0;
};

std::shared_ptr<const FrameTable> build_frame_table(const GeneratorModel& model, const TailWindow& window,
                                                    const FrameTable::Options& opt = {});

/// Column j of S: c(T_plus) for c(T_minus) = e_j.
ComplexVector integrate_column(const FrameTable& table, double epsilon, int j, double ode_tol,
                               double c_phase = 2.0, OdeStats* stats = nullptr);

/// All columns in one pass.
SMatrixResult s_matrix(const FrameTable& table, double epsilon, double ode_tol, double tail_estimate = 0.0,
                       double c_phase = 2.0);

/// Column-by-column assembly (used to check linearity of the flow).
SMatrixResult s_matrix_by_columns(const FrameTable& table, double epsilon, double ode_tol,
                                  double tail_estimate = 0.0, double c_phase = 2.0);

/// Convenience: window, table and S in one call.
SMatrixResult s_matrix(const GeneratorModel& model, double epsilon, const SMatrixOptions& opt = {});

/// Reference column from the original equation i eps psi' = H psi, projected on the frame at T_plus.
ComplexVector integrate_column_psi(const GeneratorModel& model, const FrameTable& table, double epsilon, int j,
                                   double ode_tol);

}  // namespace nlevel
