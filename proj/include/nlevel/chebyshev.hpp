#pragma once

#include <vector>

#include <Eigen/Dense>

namespace nlevel {

/// Chebyshev-Lobatto nodes on [-1, 1], ascending.
Eigen::VectorXd lobatto_nodes(int n);

/// Barycentric weights for the Lobatto nodes.
Eigen::VectorXd lobatto_bary_weights(int n);

/// Spectral differentiation matrix on [-1, 1] for the ascending Lobatto nodes.
Eigen::MatrixXd lobatto_diff_matrix(int n);

/// Clenshaw-Curtis quadrature weights on [-1, 1] for the ascending Lobatto nodes.
Eigen::VectorXd clenshaw_curtis_weights(int n);

/// Piecewise Chebyshev grid on an interval [a, b]: equal panels, Lobatto nodes per panel.
struct PanelGrid {
    double a = 0.0;
    double b = 0.0;
    int panels = 0;
    int nodes_per_panel = 0;

    static PanelGrid make(double a, double b, double max_panel_length, int nodes_per_panel);

    double panel_length() const { return (b - a) / panels; }
    int size() const { return panels * nodes_per_panel; }
    /// Parameter of node k of panel p.
    double node(int p, int k) const;
    /// Panel containing x (clamped).
    int panel_of(double x) const;
};

/// Barycentric interpolation weights at x for a panel of the grid; fills w with the
/// normalized weights (sum w = 1) of the panel's nodes.
void panel_interp_weights(const PanelGrid& grid, int panel, double x, const Eigen::VectorXd& bary,
                          const Eigen::VectorXd& nodes, Eigen::VectorXd& w);

}  // namespace nlevel
