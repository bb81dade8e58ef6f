#include "nlevel/symmetry.hpp"

#include <algorithm>
#include <cmath>

#include "nlevel/errors.hpp"

namespace nlevel {

Complex j_product(const ComplexVector& x, const ComplexVector& y, const ComplexMatrix& J) {
    return x.dot(J * y);
}

MetricData j_normalize(const SpectralFrame& frame, const ComplexMatrix& J) {
    const Eigen::Index n = frame.dim();
    if (J.rows() != n || J.cols() != n) throw DimensionMismatch("metric and frame dimensions differ");
    MetricData md;
    md.J = J;
    md.rho.resize(n);
    md.scale.resize(n);
    md.normalized_frame = frame;
    const double jn = spectral_norm(J);
    for (Eigen::Index j = 0; j < n; ++j) {
        const ComplexVector phi = frame.right.col(j);
        const double v = j_product(phi, phi, J).real();
        if (std::abs(v) <= 1e-10 * phi.squaredNorm() * jn)
            throw NullVector("eigenvector " + std::to_string(j + 1) + " has vanishing J-norm");
        const double s = std::sqrt(std::abs(v));
        md.rho(j) = v > 0.0 ? 1.0 : -1.0;
        md.scale(j) = s;
        md.normalized_frame.right.col(j) /= s;
        md.normalized_frame.left.row(j) *= s;
    }
    return md;
}

ComplexMatrix to_metric_basis(const ComplexMatrix& S, const MetricData& metric) {
    if (S.rows() != metric.scale.size() || S.cols() != metric.scale.size())
        throw DimensionMismatch("S and metric dimensions differ");
    ComplexMatrix out = S;
    for (Eigen::Index r = 0; r < S.rows(); ++r)
        for (Eigen::Index c = 0; c < S.cols(); ++c) out(r, c) *= metric.scale(r) / metric.scale(c);
    return out;
}

double verify_s_unitarity(const ComplexMatrix& S, const MetricData& metric) {
    const ComplexMatrix SJ = to_metric_basis(S, metric);
    const ComplexMatrix R = metric.R();
    return spectral_norm(SJ.adjoint() * R * SJ - R);
}

std::vector<int> plus_first_order(const ComplexVector& eigenvalues) {
    std::vector<int> pos, neg;
    for (int i = 0; i < eigenvalues.size(); ++i) (eigenvalues(i).real() > 0.0 ? pos : neg).push_back(i);
    if (pos.size() != neg.size()) throw DomainError("spectrum is not symmetric under negation");
    auto by = [&](bool negate) {
        return [&, negate](int a, int b) {
            const double x = eigenvalues(a).real(), y = eigenvalues(b).real();
            return negate ? -x < -y : x < y;
        };
    };
    std::sort(pos.begin(), pos.end(), by(false));
    std::sort(neg.begin(), neg.end(), by(true));
    pos.insert(pos.end(), neg.begin(), neg.end());
    return pos;
}

ComplexMatrix permute(const ComplexMatrix& S, const std::vector<int>& order) {
    const Eigen::Index n = S.rows();
    if (static_cast<Eigen::Index>(order.size()) != n) throw DimensionMismatch("order size differs from S");
    ComplexMatrix out(n, n);
    for (Eigen::Index a = 0; a < n; ++a)
        for (Eigen::Index b = 0; b < n; ++b) out(a, b) = S(order[static_cast<std::size_t>(a)], order[static_cast<std::size_t>(b)]);
    return out;
}

MetricData permute(const MetricData& metric, const std::vector<int>& order) {
    MetricData out = metric;
    out.normalized_frame = reorder(metric.normalized_frame, order);
    for (std::size_t a = 0; a < order.size(); ++a) {
        out.rho(static_cast<Eigen::Index>(a)) = metric.rho(order[a]);
        out.scale(static_cast<Eigen::Index>(a)) = metric.scale(order[a]);
    }
    return out;
}

BlockReport verify_block_symmetries(const ComplexMatrix& S, int m) {
    if (m < 1 || S.rows() != 2 * m || S.cols() != 2 * m) throw DimensionMismatch("S must be 2m x 2m");
    const ComplexMatrix Spp = S.topLeftCorner(m, m), Spm = S.topRightCorner(m, m);
    const ComplexMatrix Smp = S.bottomLeftCorner(m, m), Smm = S.bottomRightCorner(m, m);
    const ComplexMatrix I = ComplexMatrix::Identity(m, m);
    BlockReport r;
    r.conj_pp_mm = spectral_norm(Spp - Smm.conjugate());
    r.conj_pm_mp = spectral_norm(Spm - Smp.conjugate());
    r.identity_pp = spectral_norm(Spp * Spp.adjoint() - Spm * Spm.adjoint() - I);
    r.cross = spectral_norm(Spp * Smp.adjoint() - Spm * Smm.adjoint());
    r.identity_mm = spectral_norm(Smm * Smm.adjoint() - Smp * Smp.adjoint() - I);
    const ComplexMatrix P = Spp * Spm.transpose();
    r.symmetric_product = spectral_norm(P - P.transpose());
    return r;
}

namespace {

DerivedEntry relation(const std::string& name, int row, int col, Complex derived, Complex numeric) {
    DerivedEntry e;
    e.name = name;
    e.row = row;
    e.col = col;
    e.derived = derived;
    e.numeric = numeric;
    const double d = std::abs(derived - numeric);
    e.relative_residual = d == 0.0 ? 0.0 : d / std::abs(numeric);
    return e;
}

}  // namespace

DerivedReport derived_elements(const ComplexMatrix& S, const GeneratorModel& model, const ElementMap* predicted) {
    auto get = [&](int r, int c) {
        if (predicted) {
            const auto it = predicted->find({r, c});
            if (it != predicted->end()) return it->second;
        }
        return S(r, c);
    };
    DerivedReport rep;
    const bool channel = model.metric_J.has_value() && model.dim == 4;
    if (channel) {
        if (S.rows() != 4) throw DimensionMismatch("two-channel S must be 4 x 4");
        if (std::abs(S(1, 1)) < 0.5) throw DivisionGuard("|s++_22| below 0.5");
        rep.entries.push_back(
            relation("s++_12", 0, 1, -std::conj(get(1, 0)) * get(0, 0) / std::conj(get(1, 1)), S(0, 1)));
        rep.symmetric_product = verify_block_symmetries(S, 2).symmetric_product;
    } else if (model.dim == 3) {
        if (S.rows() != 3) throw DimensionMismatch("three-level S must be 3 x 3");
        if (std::abs(S(1, 1)) < 0.5) throw DivisionGuard("|s_22| below 0.5");
        rep.entries.push_back(relation("s_21", 1, 0, -std::conj(get(0, 1)) * get(0, 0) / std::conj(get(1, 1)), S(1, 0)));
        rep.entries.push_back(relation("s_32", 2, 1, -std::conj(get(1, 2)) * get(2, 2) / std::conj(get(1, 1)), S(2, 1)));
    } else {
        throw NotApplicable("derived relations are defined for the three-level and two-channel models");
    }
    return rep;
}

std::pair<double, double> g_symmetry_residual(const GeneratorModel& model, double T, int samples) {
    if (model.dim % 2 != 0) throw DimensionMismatch("generator dimension must be even");
    const int m = model.dim / 2;
    ComplexMatrix G = ComplexMatrix::Identity(model.dim, model.dim);
    G.bottomRightCorner(m, m) *= -1.0;
    double g = 0.0, c = 0.0;
    for (int i = 0; i < samples; ++i) {
        const double t = -T + 2.0 * T * i / (samples - 1);
        const ComplexMatrix H = model.eval(t);
        g = std::max(g, (G * H * G + H).cwiseAbs().maxCoeff());
        c = std::max(c, (H.conjugate() - H).cwiseAbs().maxCoeff());
    }
    return {g, c};
}

double j_product_drift(const GeneratorModel& model, double t_end, const TransportOptions& opt) {
    const ComplexMatrix J = model.metric_J.value_or(ComplexMatrix::Identity(model.dim, model.dim));
    const FramePath fp = transport_frame(model, PathSpec::segment(0.0, t_end), opt);
    const ComplexMatrix& R0 = fp.start_frame.right;
    const ComplexMatrix G0 = R0.adjoint() * J * R0;
    double drift = 0.0;
    for (const auto& s : fp.samples) {
        const ComplexMatrix Rt = s.W * R0;
        drift = std::max(drift, (Rt.adjoint() * J * Rt - G0).cwiseAbs().maxCoeff());
    }
    return drift;
}

bool within_budget(double residual, double ode_tol, double tail_estimate, double factor) {
    return residual <= factor * (ode_tol + tail_estimate);
}

}  // namespace nlevel
