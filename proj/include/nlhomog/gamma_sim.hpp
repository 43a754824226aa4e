#pragma once

#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "nlhomog/cell_solver.hpp"

namespace nlhomog {

/// Cell-midpoint grid on the unit cube: x_i = (i + 1/2) h, no periodic wrap.
class DomainGrid {
public:
    DomainGrid(int dim, int n);

    int dim() const { return dim_; }
    int n() const { return n_; }
    double h() const { return 1.0 / n_; }
    double cell_volume() const { return dim_ == 1 ? h() : h() * h(); }
    std::size_t size() const { return dim_ == 1 ? static_cast<std::size_t>(n_) : static_cast<std::size_t>(n_) * n_; }
    Point coord(std::size_t node) const;
    double boundary_distance(std::size_t node) const;

private:
    int dim_;
    int n_;
};

/// Smallest power of two n with 1/n <= min(eps, delta) / 8.
int domain_grid_for(double eps, double delta);

struct EpsDeltaSchedule {
    std::vector<std::pair<double, double>> entries; ///< (eps, delta)
    double lambda = 1.0;                            ///< declared limit of eps/delta; may be 0 or +inf
    int first_index = 0;                            ///< label j of the first entry

    /// Strictly decreasing eps and delta, ratios trending to lambda (10% slack).
    void validate() const;
};

/**
 * F(u) = sum_k w_k rho_k h^d sum_{i in I_k} f(x_i/delta, (x_i + eps xi_k)/delta, (u(x_i + eps xi_k) - u(x_i))/eps)
 * with I_k = {i : x_i + eps xi_k in the open unit cube}. Targets are interpolated multilinearly;
 * targets outside the node hull use the edge cell's linear extension. Scalar fields only (m = 1).
 */
double assemble_F(std::span<const double> u, const DomainGrid& grid, double eps, double delta,
                  const DensitySpec& density, const Kernel& kernel, const XiQuadrature& quad);

struct BoundaryResult {
    double value = 0.0;
    double affine_value = 0.0;   ///< F(Mx)
    std::vector<double> u;       ///< nodal values
    std::vector<char> frozen;    ///< 1 where u is pinned to Mx
    int grid_n = 0;
    int iterations = 0;
    double grad_norm = 0.0;
    bool converged = false;
    std::vector<std::string> flags;
};

/// Minimizes assemble_F over u equal to Mx at every node within layer_factor * eps of the boundary.
/// grid_n = 0 selects domain_grid_for(eps, delta).
BoundaryResult minimize_with_boundary(double eps, double delta, const Matrix& M, double layer_factor,
                                      const DensitySpec& density, const Kernel& kernel, const XiQuadrature& quad,
                                      const OptimizerOptions& opts, int grid_n = 0);

struct GammaEntry {
    int j = 0;
    double eps = 0.0;
    double delta = 0.0;
    int grid_n = 0;
    double min_value = std::numeric_limits<double>::quiet_NaN();
    double normalized = std::numeric_limits<double>::quiet_NaN();
    double rel_dev = std::numeric_limits<double>::quiet_NaN();
    int iterations = 0;
    double grad_norm = std::numeric_limits<double>::quiet_NaN();
    bool converged = false;
    bool skipped = false;
    std::vector<std::string> flags;

    double ratio() const { return eps / delta; }
};

struct GammaRun {
    EpsDeltaSchedule schedule;
    Matrix M;
    double reference = 0.0;
    std::string reference_source; ///< "local", "nonlocal" or "supercritical"
    std::vector<GammaEntry> entries;

    /// Last entry that was actually solved, or nullptr.
    const GammaEntry* last_solved() const;
};

struct GammaOptions {
    int n_max = 8192;
    double layer_factor = 0.0; ///< boundary layer width in units of eps; 0 selects the quadrature radius T
};

GammaRun run_schedule(const EpsDeltaSchedule& schedule, const Matrix& M, const DensitySpec& density,
                      const Kernel& kernel, const XiQuadrature& quad, const OptimizerOptions& opts,
                      const MeshPolicy& reference_mesh, const GammaOptions& gopts = {});

/// f_lambda(M) from the cell solver: local (0), supercritical (inf) or nonlocal on reference_mesh.grid_for(lambda).
double cell_reference(double lambda, const Matrix& M, const DensitySpec& density, const Kernel& kernel,
                      const XiQuadrature& quad, const OptimizerOptions& opts, const MeshPolicy& reference_mesh,
                      std::string* source = nullptr);

} // namespace nlhomog
