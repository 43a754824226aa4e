#pragma once

#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "nlhomog/densities.hpp"
#include "nlhomog/kernels.hpp"
#include "nlhomog/optimizer.hpp"
#include "nlhomog/torus_fields.hpp"

namespace nlhomog {

enum class Regime { local, nonlocal, supercritical };

const char* to_string(Regime r);
Regime parse_regime(const std::string& name);

/// Shifts must span at least this many grid cells per unit |xi|.
inline constexpr double kResolveFactor = 16.0;

struct CellProblem {
    Regime regime = Regime::nonlocal;
    double lambda = 1.0; ///< used by the nonlocal regime only
    Matrix M;
    DensitySpec density;
    Kernel kernel;
    XiQuadrature quad;
    TorusGrid grid;
    OptimizerOptions opts;

    /// Throws ConfigError when shapes disagree, T < r0, Q1 is not inside B_T,
    /// or (nonlocal) h > lambda / kResolveFactor.
    void validate() const;
};

struct CellResult {
    double value = 0.0;
    PeriodicField minimizer{TorusGrid(1, 2), 1};
    int iterations = 0;
    double grad_norm = 0.0;
    bool converged = false;
    double jensen_lower = 0.0; ///< alpha * sum_k w_k rho_k |M xi_k|^p
    double affine_upper = 0.0; ///< energy at v = 0
    double growth_upper = 0.0; ///< beta * sum_k w_k rho_k |M xi_k|^p
    std::vector<std::string> flags;

    bool bounds_hold() const { return jensen_lower <= value && value <= affine_upper; }
    std::string flag_string() const;
};

/**
 * Discrete cell energy of a CellProblem (local or nonlocal regime) with its
 * gradient. Stencils and coefficient tables are built once; evaluation is
 * chunked over quadrature nodes with a fixed-order reduction.
 */
class CellEnergy {
public:
    explicit CellEnergy(const CellProblem& prob);
    CellEnergy(const CellProblem& prob, const DensitySpec& density);
    ~CellEnergy();
    CellEnergy(CellEnergy&&) noexcept;
    CellEnergy& operator=(CellEnergy&&) noexcept;

    double energy(std::span<const double> v) const;
    void gradient(std::span<const double> v, std::span<double> grad) const;
    double value_and_gradient(std::span<const double> v, std::span<double> grad) const;

    /// Objective on mean-zero periodic fields (gauge = per-component mean removal).
    Objective objective() const;

    std::size_t unknowns() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

double energy_nonlocal(const PeriodicField& v, const CellProblem& prob);
double energy_local(const PeriodicField& v, const CellProblem& prob);

CellResult solve_cell(const CellProblem& prob);

/// sum_k w_k rho_k h^{2d} sum_{i,j} f(x_i, y_j, M xi_k); factorized for separable densities.
/// Non-separable densities use the double sum on a grid capped at 128 (d=1) / 64 (d=2) nodes per axis.
double eval_supercritical(const Matrix& M, const DensitySpec& density, const Kernel& kernel, const XiQuadrature& quad,
                          const TorusGrid& grid);

struct RelaxedResult {
    double F0 = 0.0;
    double inf_value = 0.0;
    double gap = 0.0;
    int n = 0;                    ///< nodes per axis of both factors of the product grid
    std::vector<double> V;        ///< index ((i * n^d) + j) * m + c, i over x, j over y
    Point first_moment{0.0, 0.0}; ///< sum_k w_k rho_k xi_k
    double mass = 0.0;            ///< sum_k w_k rho_k
    int iterations = 0;
    double grad_norm = 0.0;
    bool converged = false;
    std::vector<std::string> flags;
};

/// Minimizes F(V) = sum_k w_k rho_k h^{2d} sum_{i,j} f(x_i, x_i + y_j, V(x_i,y_j) + M xi_k)
/// over V with zero x-mean for every y.
RelaxedResult relaxed_supercritical(const Matrix& M, const DensitySpec& density, const Kernel& kernel,
                                    const XiQuadrature& quad, int n, const OptimizerOptions& opts);

/// Discrete L2 norm of the projected stationarity map at the minimizer
/// (p = 2, m = 1, separable density with b = 1; local or nonlocal regime).
double euler_lagrange_residual(const CellResult& result, const CellProblem& prob);

struct MeshPolicy {
    double resolve_factor = kResolveFactor;
    int n_min = 64;
    int n_max = 4096;
    int n_local = 256; ///< grid for the f_0 endpoint
    int n_sup = 256;   ///< grid for the f_inf endpoint

    /// Smallest n_min * 2^k with 1/n <= lambda / resolve_factor; 0 when that exceeds n_max.
    int grid_for(double lambda) const;
};

struct SweepEntry {
    double lambda = 0.0;
    double value = std::numeric_limits<double>::quiet_NaN();
    double jensen_lower = std::numeric_limits<double>::quiet_NaN();
    double affine_upper = std::numeric_limits<double>::quiet_NaN();
    int grid_n = 0;
    double grad_norm = std::numeric_limits<double>::quiet_NaN();
    int iterations = 0;
    std::string quad;
    std::vector<std::string> flags;
    bool resolved = true;
};

struct LambdaSweep {
    std::vector<SweepEntry> entries;
    double f0 = 0.0;
    double finf = 0.0;
};

LambdaSweep sweep(const std::vector<double>& lambdas, const Matrix& M, const DensitySpec& density, const Kernel& kernel,
                  const XiQuadrature& quad, const MeshPolicy& policy, const OptimizerOptions& opts);

} // namespace nlhomog
