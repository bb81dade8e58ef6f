#pragma once

#include <complex>
#include <vector>

#include <Eigen/Dense>

namespace nlevel {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

inline constexpr Complex kI{0.0, 1.0};

/// Eigendecomposition of a matrix with simple spectrum at a point z.
/// Columns of `right` are unit-norm right eigenvectors; rows of `left` are the
/// dual left eigenvectors, so that left * right = I.
struct SpectralFrame {
    Complex point{0.0, 0.0};
    ComplexVector eigenvalues;
    ComplexMatrix right;
    ComplexMatrix left;
    double min_gap = 0.0;

    Eigen::Index dim() const { return eigenvalues.size(); }
    ComplexMatrix projector(Eigen::Index j) const { return right.col(j) * left.row(j); }
    std::vector<ComplexMatrix> projectors() const;
};

struct FrameResiduals {
    double completeness = 0.0;     // ||sum P_j - I||
    double orthogonality = 0.0;    // max ||P_j P_k - delta_jk P_j||
    double reconstruction = 0.0;   // ||H - sum e_j P_j|| / max(1, ||H||)
};

/// Default gap tolerance 1e-8 * ||H||.
double default_gap_tol(const ComplexMatrix& H);

/// Unsorted decomposition without the gap check. Eigenvectors are unit norm with
/// the first non-negligible component real positive.
SpectralFrame decompose(const ComplexMatrix& H);

/// Sorted, gap-checked decomposition. Order: ascending real part, ties broken by
/// imaginary part. A negative gap_tol selects default_gap_tol(H).
SpectralFrame eig_simple(const ComplexMatrix& H, double gap_tol = -1.0);

/// Fixes the phase of each right eigenvector (first component above 1e-10 real
/// positive, unit norm) and rescales the left rows to keep left * right = I.
void normalize_convention(SpectralFrame& frame);

/// Frame with eigenpairs reordered: new index j takes old index order[j].
SpectralFrame reorder(const SpectralFrame& frame, const std::vector<int>& order);

/// P_j' = sum_{k != j} (P_k H' P_j + P_j H' P_k) / (e_j - e_k).
std::vector<ComplexMatrix> projector_derivative(const ComplexMatrix& H, const ComplexMatrix& Hprime,
                                                const SpectralFrame& frame);

/// K = sum_j P_j' P_j.
ComplexMatrix k_matrix(const SpectralFrame& frame, const std::vector<ComplexMatrix>& derivs);

/// Same K computed in the eigenbasis: K = R Y L with Y_kj = (L H' R)_kj / (e_j - e_k).
ComplexMatrix k_matrix_direct(const SpectralFrame& frame, const ComplexMatrix& Hprime);

FrameResiduals frame_residuals(const ComplexMatrix& H, const SpectralFrame& frame);

double spectral_norm(const ComplexMatrix& A);

}  // namespace nlevel
