#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "nlevel/models.hpp"
#include "nlevel/transport.hpp"

namespace nlevel {

/// Frame rescaled to unit J-norms: (phi_j, phi_j)_J = rho_j = +-1.
struct MetricData {
    ComplexMatrix J;
    Eigen::VectorXd rho;          // signs, diagonal of R
    Eigen::VectorXd scale;        // phi_j(normalized) = phi_j(original) / scale_j
    SpectralFrame normalized_frame;

    ComplexMatrix R() const { return rho.cast<Complex>().asDiagonal(); }
};

/// (x, y)_J = x^* J y.
Complex j_product(const ComplexVector& x, const ComplexVector& y, const ComplexMatrix& J);

MetricData j_normalize(const SpectralFrame& frame, const ComplexMatrix& J);

/// S expressed in the J-normalized frame: diag(scale) S diag(scale)^-1.
ComplexMatrix to_metric_basis(const ComplexMatrix& S, const MetricData& metric);

/// ||S^* R S - R|| with S given in the original frame of `metric`.
double verify_s_unitarity(const ComplexMatrix& S, const MetricData& metric);

/// Index order putting the positive eigenvalues first (ascending), then the negative ones by
/// increasing modulus, so that +k_j and -k_j share the block index j.
std::vector<int> plus_first_order(const ComplexVector& eigenvalues);

/// S'(a, b) = S(order[a], order[b]).
ComplexMatrix permute(const ComplexMatrix& S, const std::vector<int>& order);
MetricData permute(const MetricData& metric, const std::vector<int>& order);

struct BlockReport {
    double conj_pp_mm = 0.0;        // ||S++ - conj(S--)||
    double conj_pm_mp = 0.0;        // ||S+- - conj(S-+)||
    double identity_pp = 0.0;        // ||S++ S++^* - S+- S+-^* - I||
    double cross = 0.0;              // ||S++ S-+^* - S+- S--^*||
    double identity_mm = 0.0;        // ||S-- S--^* - S-+ S-+^* - I||
    double symmetric_product = 0.0;  // ||S++ S+-^T - (S++ S+-^T)^T||

    double max_conj() const { return std::max(conj_pp_mm, conj_pm_mp); }
    double max_metric() const { return std::max({identity_pp, cross, identity_mm}); }
};

/// Block identities for a 2m x 2m S in the J-normalized (+ block first) frame.
BlockReport verify_block_symmetries(const ComplexMatrix& S, int m);

struct DerivedEntry {
    std::string name;
    int row = 0;  // 0-based element of the derived quantity
    int col = 0;
    Complex derived{};
    Complex numeric{};
    double relative_residual = 0.0;
};

struct DerivedReport {
    std::vector<DerivedEntry> entries;
    double symmetric_product = 0.0;  // two-channel only
};

using ElementMap = std::map<std::pair<int, int>, Complex>;

/// Relations filling elements from others: for n = 3, s21 and s32 from unitarity; for the
/// two-channel (+ block first) S, s++_12 and the symmetric product. Entries of `predicted`
/// replace the numeric inputs where present.
DerivedReport derived_elements(const ComplexMatrix& S, const GeneratorModel& model, const ElementMap* predicted = nullptr);

/// max over a real grid of ||G H G + H|| and ||conj(H) - H|| for the two-channel generator.
std::pair<double, double> g_symmetry_residual(const GeneratorModel& model, double T = 10.0, int samples = 201);

/// Largest drift of the pairwise J-products of the transported frame along [0, t_end].
double j_product_drift(const GeneratorModel& model, double t_end, const TransportOptions& opt = {});

bool within_budget(double residual, double ode_tol, double tail_estimate, double factor = 50.0);

}  // namespace nlevel
