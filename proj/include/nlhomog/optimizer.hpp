#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "nlhomog/common.hpp"

namespace nlhomog {

/// Relative size of energy differences treated as rounding noise by the line searches.
inline constexpr double kEnergyResolution = 1e-12;
/// Line-search curvature test |phi'(a)| <= c |phi'(0)| used by nonlinear CG.
inline constexpr double kCurvatureTolerance = 0.1;

enum class Algorithm { accelerated_gradient, nonlinear_cg };

const char* to_string(Algorithm a);
Algorithm parse_algorithm(const std::string& name);

struct OptimizerOptions {
    double tol_grad = 1e-8;       ///< threshold on the discrete L2 norm of the projected gradient
    int max_iter = 5000;
    Algorithm algorithm = Algorithm::accelerated_gradient;
    double shrink = 0.5;          ///< backtracking factor
    double sufficient_decrease = 1e-4;
    int restart_every = 0;        ///< forced momentum/CG restart period; 0 disables
    bool precondition = true;     ///< let energies attach a constant-coefficient preconditioner

    /// 1e-8 for p = 2, 1e-6 otherwise.
    static OptimizerOptions defaults_for(double p);
    void validate() const;
};

/**
 * Smooth convex energy on a linear subspace of R^N.
 *
 * `gradient` returns the Riesz representative under <u,w> = cell_volume * sum u.w,
 * and `gauge` is the linear idempotent projection onto the admissible subspace.
 * `value_and_gradient` is optional; when set it must agree with the other two and is
 * used where both quantities are needed at one point. `precondition`, also optional, is a
 * symmetric positive definite linear map on the gauge subspace used to scale search
 * directions; the stopping test always uses the plain gradient.
 */
struct Objective {
    std::function<double(std::span<const double>)> energy;
    std::function<void(std::span<const double>, std::span<double>)> gradient;
    std::function<void(std::span<double>)> gauge;
    std::function<double(std::span<const double>, std::span<double>)> value_and_gradient;
    std::function<void(std::span<const double>, std::span<double>)> precondition;
    double cell_volume = 1.0;
};

struct OptimizerStats {
    int iterations = 0;
    double grad_norm = 0.0;
    bool converged = false;
    int energy_evals = 0;
    int gradient_evals = 0;
    int restarts = 0;
    double last_step = 0.0;
    std::string message;
};

struct MinimizeResult {
    std::vector<double> minimizer;
    double value = 0.0;
    OptimizerStats stats;
};

/// Raised when the energy or gradient stops being finite; carries the last accepted iterate.
class OptimizerAbort : public NumericalError {
public:
    OptimizerAbort(const std::string& what, std::vector<double> last_iterate, double step, int iteration)
        : NumericalError(what), last_iterate(std::move(last_iterate)), step(step), iteration(iteration) {}

    std::vector<double> last_iterate;
    double step;
    int iteration;
};

MinimizeResult minimize(const Objective& objective, std::vector<double> init, const OptimizerOptions& opts);

/// Discrete L2 norm sqrt(cell_volume * sum v^2).
double weighted_norm(std::span<const double> v, double cell_volume);

/// Max relative error between central differences of the energy and <gradient, d>
/// along `directions` seeded random unit directions in the gauge subspace.
double grad_check(const Objective& objective, std::span<const double> point, double step, std::uint64_t seed,
                  int directions = 10);

} // namespace nlhomog
