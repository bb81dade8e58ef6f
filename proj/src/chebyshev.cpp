#include "nlevel/chebyshev.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "nlevel/errors.hpp"

namespace nlevel {

Eigen::VectorXd lobatto_nodes(int n) {
    if (n < 2) throw DomainError("Lobatto grid needs at least 2 nodes");
    Eigen::VectorXd x(n);
    for (int k = 0; k < n; ++k) x(k) = -std::cos(std::numbers::pi * k / (n - 1));
    // Symmetrize so that mirrored nodes are exact negatives.
    for (int k = 0; k < n / 2; ++k) {
        const double v = 0.5 * (x(n - 1 - k) - x(k));
        x(k) = -v;
        x(n - 1 - k) = v;
    }
    if (n % 2 == 1) x(n / 2) = 0.0;
    return x;
}

Eigen::VectorXd lobatto_bary_weights(int n) {
    Eigen::VectorXd w(n);
    for (int k = 0; k < n; ++k) w(k) = (k % 2 == 0) ? 1.0 : -1.0;
    w(0) *= 0.5;
    w(n - 1) *= 0.5;
    return w;
}

Eigen::MatrixXd lobatto_diff_matrix(int n) {
    const Eigen::VectorXd x = lobatto_nodes(n);
    const Eigen::VectorXd w = lobatto_bary_weights(n);
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        double diag = 0.0;
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            D(i, j) = (w(j) / w(i)) / (x(i) - x(j));
            diag -= D(i, j);
        }
        D(i, i) = diag;  // negative-sum trick
    }
    return D;
}

Eigen::VectorXd clenshaw_curtis_weights(int n) {
    const int N = n - 1;
    Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
    for (int k = 0; k <= N; ++k) {
        const double theta = std::numbers::pi * k / N;
        double s = 0.0;
        for (int j = 1; j <= N / 2; ++j) {
            const double bj = (2 * j == N) ? 1.0 : 2.0;
            s += bj / (4.0 * j * j - 1.0) * std::cos(2.0 * j * theta);
        }
        const double ck = (k == 0 || k == N) ? 1.0 : 2.0;
        w(k) = ck / N * (1.0 - s);
    }
    return w;  // symmetric, so ascending order is the same
}

PanelGrid PanelGrid::make(double a, double b, double max_panel_length, int nodes_per_panel) {
    if (!(b > a)) throw DomainError("panel grid needs b > a");
    PanelGrid g;
    g.a = a;
    g.b = b;
    g.panels = std::max(1, static_cast<int>(std::ceil((b - a) / max_panel_length - 1e-12)));
    g.nodes_per_panel = nodes_per_panel;
    return g;
}

double PanelGrid::node(int p, int k) const {
    static thread_local int cached_n = -1;
    static thread_local Eigen::VectorXd x;
    if (cached_n != nodes_per_panel) {
        x = lobatto_nodes(nodes_per_panel);
        cached_n = nodes_per_panel;
    }
    const double lo = a + p * panel_length();
    const double hi = (p + 1 == panels) ? b : a + (p + 1) * panel_length();
    if (k == 0) return lo;
    if (k == nodes_per_panel - 1) return hi;
    return 0.5 * (lo + hi) + 0.5 * (hi - lo) * x(k);
}

int PanelGrid::panel_of(double x) const {
    const int p = static_cast<int>(std::floor((x - a) / panel_length()));
    return std::clamp(p, 0, panels - 1);
}

void panel_interp_weights(const PanelGrid& grid, int panel, double x, const Eigen::VectorXd& bary,
                          const Eigen::VectorXd& nodes, Eigen::VectorXd& w) {
    const int n = grid.nodes_per_panel;
    const double lo = grid.a + panel * grid.panel_length();
    const double hi = (panel + 1 == grid.panels) ? grid.b : grid.a + (panel + 1) * grid.panel_length();
    const double u = (2.0 * x - lo - hi) / (hi - lo);
    w.resize(n);
    for (int k = 0; k < n; ++k) {
        const double d = u - nodes(k);
        if (d == 0.0) {
            w.setZero();
            w(k) = 1.0;
            return;
        }
        w(k) = bary(k) / d;
    }
    w /= w.sum();
}

}  // namespace nlevel
