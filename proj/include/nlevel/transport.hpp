#pragma once

#include <limits>
#include <vector>

#include "nlevel/linalg_spectral.hpp"
#include "nlevel/models.hpp"
#include "nlevel/ode.hpp"

namespace nlevel {

/// Piecewise-linear path through the given vertices.
struct PathSpec {
    std::vector<Complex> vertices;
    bool closed = false;
    int orientation = 0;  // +1 counter-clockwise, -1 clockwise, 0 open path

    static PathSpec segment(Complex a, Complex b);
    static PathSpec polyline(std::vector<Complex> v);
    /// Closed polygon; the orientation field is filled from the signed area.
    static PathSpec loop(std::vector<Complex> v);

    int segments() const { return static_cast<int>(vertices.size()) - 1; }
    double length() const;
    double signed_area() const;
    Complex start() const { return vertices.front(); }
    Complex end() const { return vertices.back(); }
    PathSpec reversed() const;
    PathSpec conjugated() const;
};

/// Throws DomainError when the path breaks the PathSpec invariants for this strip.
void check_path(const PathSpec& path, double strip_alpha);

/// Rectangle loop based at `base`: base -> a -> a + i h -> b + i h -> b -> base, where a, b are
/// real abscissas on the line Im z = Im base and h the signed height. Traversal direction is
/// chosen so that the signed area has the sign of `orientation`.
PathSpec rectangle_loop(Complex base, double a, double b, double h, int orientation);

struct TransportOptions {
    double tol = 1e-11;
    double gap_tol = 1e-8;  // absolute gap below which the path counts as hitting a degeneracy
    double h_max = std::numeric_limits<double>::infinity();
};

struct FrameSample {
    Complex z{};
    double s = 0.0;             // arc length from the path start
    SpectralFrame frame;        // index j carries the continued label j
    ComplexMatrix K;            // K(z) = sum P_j' P_j with respect to z
    ComplexMatrix W;
    ComplexVector integrals;    // integral of e_j dz from the path start
};

struct FramePath {
    PathSpec path;
    SpectralFrame start_frame;     // labelled, unit-norm convention at the start
    std::vector<FrameSample> samples;
    /// label_map[j]: for closed paths, the start label whose eigenvalue the continued e_j
    /// reaches at the end (the permutation sigma_0); for open paths, the index of the
    /// continued e_j in the eig_simple ordering at the end point.
    std::vector<int> label_map;
    /// Sample index reached at each path vertex (first entry 0).
    std::vector<std::size_t> vertex_samples;
    OdeStats stats;

    const FrameSample& back() const { return samples.back(); }
};

/// Integrates W' = K W along the path with W(start) = I, continuing eigenvalue labels.
/// `initial_labels` (optional) are approximate eigenvalues used to label the start frame;
/// otherwise the eig_simple ordering at the start point is used.
FramePath transport_frame(const GeneratorModel& model, const PathSpec& path, const TransportOptions& opt = {},
                          const ComplexVector* initial_labels = nullptr);

/// a_jk at a sample: a = -L0 W^{-1} K W R0 with zero diagonal.
ComplexMatrix couplings(const FramePath& fp, std::size_t at_index);

/// Delta_jk = integral of e_j - e_k from the path start to the sample (default: end).
Complex delta_phase(const FramePath& fp, int j, int k, std::size_t at_index = static_cast<std::size_t>(-1));

/// max_j ||W P_j(start) - P_j(z) W|| over all samples.
double intertwining_residual(const FramePath& fp);

struct MonodromyResult {
    PathSpec loop;
    std::vector<int> sigma0;
    ComplexVector thetas;       // W phi_j(0) = exp(-i theta_j) phi_{sigma0(j)}(0)
    ComplexMatrix W_loop;
    ComplexVector integrals;    // loop integrals of the continued e_j
    double proportionality_residual = 0.0;
};

MonodromyResult monodromy(const GeneratorModel& model, const PathSpec& loop, const TransportOptions& opt = {},
                          double tol = 1e-7, const ComplexVector* initial_labels = nullptr);

/// Bijective nearest matching: result[j] = index in `values` assigned to `targets(j)`.
/// Returns an empty vector when the greedy assignment is not a bijection.
std::vector<int> match_labels(const ComplexVector& targets, const ComplexVector& values);

}  // namespace nlevel
