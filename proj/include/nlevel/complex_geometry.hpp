#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nlevel/models.hpp"
#include "nlevel/transport.hpp"

namespace nlevel {

struct Region {
    double re_lo = -3.0;
    double re_hi = 3.0;
    double im_lo = -1.2;
    double im_hi = 1.2;
};

/// Point where two eigenvalue branches collide. `j < k` are the real-axis labels (0-based)
/// of the colliding branches, continued vertically from Re z0.
struct DegeneracyPoint {
    Complex z0{};
    int j = -1;
    int k = -1;
    int multiplicity = 1;  // winding number of the discriminant around the cell
    double discriminant_residual = 0.0;
    std::optional<Complex> conjugate_partner;
};

struct DegeneracySearch {
    std::vector<DegeneracyPoint> points;
    std::vector<Complex> failed_cells;  // cell centres where Newton diverged
};

/// Monic characteristic polynomial coefficients c_0..c_n (Faddeev-LeVerrier).
ComplexVector characteristic_polynomial(const ComplexMatrix& A);

/// Resultant of p and p' (Sylvester determinant); vanishes exactly at degeneracies.
Complex discriminant(const ComplexMatrix& A);

DegeneracySearch find_degeneracies(const GeneratorModel& model, const Region& region, double grid_step = 0.05,
                                   double newton_tol = 1e-12);

/// Eigenvalue labels at z, continued vertically from the real axis at Re z.
ComplexVector labels_from_real_axis(const GeneratorModel& model, Complex z, const TransportOptions& opt = {});

Complex loop_eigenvalue_integral(const GeneratorModel& model, const PathSpec& loop, int j,
                                 const TransportOptions& opt = {});

double decay_rate(const GeneratorModel& model, const PathSpec& loop, int j, const TransportOptions& opt = {});

struct PairMargin {
    int k = 0;
    double forward_margin = 0.0;       // min forward difference of Im Delta_jk between samples
    double differential_margin = 0.0;  // min of Re(e_j - e_k) g2' + Im(e_j - e_k) g1'
    bool pass = false;
};

struct DissipativeReport {
    PathSpec path;
    int j = 0;
    double slack = 0.0;
    std::vector<PairMargin> pairs;

    bool pass() const;
};

/// A negative slack selects 1e-9 times the path length.
DissipativeReport check_dissipative(const GeneratorModel& model, const PathSpec& path, int j, double slack = -1.0,
                                    const TransportOptions& opt = {});

struct CandidatePath {
    PathSpec path;
    int side = 0;               // +1 above the real axis, -1 below
    std::string method;         // "detour" or "cone"
    double terminal_height = 0.0;
    DissipativeReport report;
};

/// Side required for index j: +1 if sigma(j) > j, -1 if sigma(j) < j, 0 otherwise.
int required_side(const GeneratorModel& model, int j);

/// Candidate dissipative path for index j across [-T, T]. side = 0 picks required_side.
CandidatePath construct_candidate_path(const GeneratorModel& model, int j, const std::vector<DegeneracyPoint>& degs,
                                       int side = 0, double T = 6.0);

/// Degeneracy on the given side nearest to the crossing abscissa t.
const DegeneracyPoint& degeneracy_for_crossing(const std::vector<DegeneracyPoint>& degs, double t, int side);

struct LevelSample {
    double re = 0.0;
    double im = 0.0;
    double value = 0.0;  // Im Delta_jk, NaN where the vertical continuation failed
};

/// Im Delta_jk(z) on a grid, with Delta continued from 0 along the real axis and then vertically.
std::vector<LevelSample> level_lines(const GeneratorModel& model, int j, int k, const Region& region, int nx, int ny);

}  // namespace nlevel
