#include "nlevel/linalg_spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "nlevel/errors.hpp"

namespace nlevel {

std::vector<ComplexMatrix> SpectralFrame::projectors() const {
    std::vector<ComplexMatrix> out;
    out.reserve(static_cast<std::size_t>(dim()));
    for (Eigen::Index j = 0; j < dim(); ++j) out.push_back(projector(j));
    return out;
}

double spectral_norm(const ComplexMatrix& A) {
    if (A.size() == 0) return 0.0;
    Eigen::JacobiSVD<ComplexMatrix> svd(A);
    return svd.singularValues()(0);
}

double default_gap_tol(const ComplexMatrix& H) { return 1e-8 * H.norm(); }

namespace {

double min_pairwise_gap(const ComplexVector& e) {
    double gap = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < e.size(); ++j)
        for (Eigen::Index k = j + 1; k < e.size(); ++k) gap = std::min(gap, std::abs(e(j) - e(k)));
    return gap;
}

}  // namespace

void normalize_convention(SpectralFrame& frame) {
    for (Eigen::Index j = 0; j < frame.dim(); ++j) {
        auto r = frame.right.col(j);
        const double nrm = r.norm();
        Eigen::Index lead = 0;
        for (Eigen::Index i = 0; i < r.size(); ++i) {
            if (std::abs(r(i)) > 1e-10 * nrm) {
                lead = i;
                break;
            }
        }
        const Complex phase = std::abs(r(lead)) > 0.0 ? r(lead) / std::abs(r(lead)) : Complex(1.0);
        const Complex scale = 1.0 / (phase * nrm);
        r *= scale;
        frame.left.row(j) /= scale;
    }
}

SpectralFrame decompose(const ComplexMatrix& H) {
    if (H.rows() != H.cols()) throw DimensionMismatch("matrix is not square");
    if (H.rows() < 1) throw DimensionMismatch("empty matrix");
    if (!H.allFinite()) throw NonConvergence("matrix has non-finite entries");
    Eigen::ComplexEigenSolver<ComplexMatrix> solver(H, true);
    if (solver.info() != Eigen::Success) throw NonConvergence("complex eigen-solver did not converge");

    SpectralFrame frame;
    frame.eigenvalues = solver.eigenvalues();
    frame.right = solver.eigenvectors();
    Eigen::PartialPivLU<ComplexMatrix> lu(frame.right);
    frame.left = lu.inverse();
    if (!frame.left.allFinite()) throw DegenerateSpectrum("eigenvector matrix is singular");
    normalize_convention(frame);
    for (Eigen::Index j = 0; j < frame.dim(); ++j) {
        if (1.0 / frame.left.row(j).norm() < 1e-12)
            throw DegenerateSpectrum("eigenvector pair is effectively defective");
    }
    frame.min_gap = min_pairwise_gap(frame.eigenvalues);
    return frame;
}

SpectralFrame reorder(const SpectralFrame& frame, const std::vector<int>& order) {
    SpectralFrame out;
    const Eigen::Index n = frame.dim();
    out.point = frame.point;
    out.min_gap = frame.min_gap;
    out.eigenvalues.resize(n);
    out.right.resize(n, n);
    out.left.resize(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto src = order[static_cast<std::size_t>(j)];
        out.eigenvalues(j) = frame.eigenvalues(src);
        out.right.col(j) = frame.right.col(src);
        out.left.row(j) = frame.left.row(src);
    }
    return out;
}

SpectralFrame eig_simple(const ComplexMatrix& H, double gap_tol) {
    if (H.rows() < 2) throw DimensionMismatch("dimension must be at least 2");
    if (gap_tol < 0.0) gap_tol = default_gap_tol(H);
    SpectralFrame raw = decompose(H);
    if (raw.min_gap < gap_tol || raw.min_gap == 0.0)
        throw DegenerateSpectrum("min gap " + std::to_string(raw.min_gap) + " below tolerance");

    const Eigen::Index n = raw.dim();
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    const auto& e = raw.eigenvalues;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (e(a).real() != e(b).real()) return e(a).real() < e(b).real();
        return e(a).imag() < e(b).imag();
    });
    // Real parts equal up to rounding are ordered by imaginary part.
    const double tie = 1e-12 * std::max(1.0, e.cwiseAbs().maxCoeff());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t k = i + 1;
        while (k < order.size() && e(order[k]).real() - e(order[k - 1]).real() <= tie) ++k;
        std::sort(order.begin() + static_cast<long>(i), order.begin() + static_cast<long>(k),
                  [&](int a, int b) { return e(a).imag() < e(b).imag(); });
        i = k;
    }
    SpectralFrame frame = reorder(raw, order);
    return frame;
}

std::vector<ComplexMatrix> projector_derivative(const ComplexMatrix& H, const ComplexMatrix& Hprime,
                                                const SpectralFrame& frame) {
    const Eigen::Index n = frame.dim();
    if (H.rows() != n || Hprime.rows() != n || Hprime.cols() != n)
        throw DimensionMismatch("projector_derivative: dimension mismatch");
    if (frame.min_gap <= 0.0) throw DegenerateSpectrum("frame has a vanishing gap");
    const auto P = frame.projectors();
    std::vector<ComplexMatrix> out(static_cast<std::size_t>(n), ComplexMatrix::Zero(n, n));
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto& Pj = P[static_cast<std::size_t>(j)];
        for (Eigen::Index k = 0; k < n; ++k) {
            if (k == j) continue;
            const auto& Pk = P[static_cast<std::size_t>(k)];
            const Complex d = frame.eigenvalues(j) - frame.eigenvalues(k);
            out[static_cast<std::size_t>(j)] += (Pk * Hprime * Pj + Pj * Hprime * Pk) / d;
        }
    }
    return out;
}

ComplexMatrix k_matrix(const SpectralFrame& frame, const std::vector<ComplexMatrix>& derivs) {
    const Eigen::Index n = frame.dim();
    if (static_cast<Eigen::Index>(derivs.size()) != n) throw DimensionMismatch("k_matrix: derivative count");
    ComplexMatrix K = ComplexMatrix::Zero(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto& D = derivs[static_cast<std::size_t>(j)];
        if (D.rows() != n || D.cols() != n) throw DimensionMismatch("k_matrix: derivative shape");
        K += D * frame.projector(j);
    }
    return K;
}

ComplexMatrix k_matrix_direct(const SpectralFrame& frame, const ComplexMatrix& Hprime) {
    const Eigen::Index n = frame.dim();
    if (Hprime.rows() != n || Hprime.cols() != n) throw DimensionMismatch("k_matrix_direct: shape");
    ComplexMatrix Y = frame.left * Hprime * frame.right;
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index k = 0; k < n; ++k) {
            if (k == j)
                Y(k, j) = 0.0;
            else
                Y(k, j) /= (frame.eigenvalues(j) - frame.eigenvalues(k));
        }
    }
    return frame.right * Y * frame.left;
}

FrameResiduals frame_residuals(const ComplexMatrix& H, const SpectralFrame& frame) {
    const Eigen::Index n = frame.dim();
    const auto P = frame.projectors();
    FrameResiduals r;
    ComplexMatrix sum = ComplexMatrix::Zero(n, n);
    ComplexMatrix recon = ComplexMatrix::Zero(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        sum += P[static_cast<std::size_t>(j)];
        recon += frame.eigenvalues(j) * P[static_cast<std::size_t>(j)];
        for (Eigen::Index k = 0; k < n; ++k) {
            ComplexMatrix prod = P[static_cast<std::size_t>(j)] * P[static_cast<std::size_t>(k)];
            if (j == k) prod -= P[static_cast<std::size_t>(j)];
            r.orthogonality = std::max(r.orthogonality, spectral_norm(prod));
        }
    }
    r.completeness = spectral_norm(sum - ComplexMatrix::Identity(n, n));
    r.reconstruction = spectral_norm(H - recon) / std::max(1.0, spectral_norm(H));
    return r;
}

}  // namespace nlevel
