#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nlhomog/common.hpp"

namespace nlhomog {

enum class Integrability { integrable, non_integrable };

const char* to_string(Integrability c);

/// rho >= c0 on the ball B_{r0}.
struct LowerBall {
    double c0 = 1.0;
    double r0 = 1.0;
};

/**
 * Interaction kernel rho : R^d -> [0, +inf] with its assumption metadata.
 *
 * The metadata is declared by whoever builds the kernel; check_assumptions()
 * verifies it against samples on a quadrature.
 */
class Kernel {
public:
    using EvalFn = std::function<double(const Point&)>;

    Kernel(std::string name, int dim, EvalFn eval, std::optional<double> support_radius, LowerBall lower,
           bool origin_singular, Integrability integrable_class);

    double operator()(const Point& xi) const { return eval_(xi); }

    const std::string& name() const { return name_; }
    int dim() const { return dim_; }
    /// Empty when the support is unbounded.
    std::optional<double> support_radius() const { return support_radius_; }
    LowerBall lower_ball() const { return lower_; }
    bool origin_singular() const { return origin_singular_; }
    Integrability integrable_class() const { return integrable_class_; }

private:
    std::string name_;
    int dim_;
    EvalFn eval_;
    std::optional<double> support_radius_;
    LowerBall lower_;
    bool origin_singular_;
    Integrability integrable_class_;
};

// Built-in library.
Kernel box_kernel(int dim, double radius = 1.0);      ///< indicator of [-R,R]^d
Kernel disk_kernel(int dim, double radius = 1.0);     ///< indicator of B_R
Kernel one_sided_kernel(double r0, double radius = 1.0); ///< indicator of [-r0,R], d = 1
Kernel exp_kernel(int dim, double r0 = 1.0);          ///< e^{-|xi|}
Kernel inv_norm_kernel(int dim, double radius = 1.0); ///< |xi|^{-d} on B_R, non-integrable
Kernel zero_kernel(int dim);

/// Kernel taking tabulated values at given points (nearest-point lookup, 0 away from
/// the table). Assumption metadata is supplied by the caller.
Kernel tabulated_kernel(int dim, std::vector<Point> points, std::vector<double> values, LowerBall lower);

/// Loads a comma-separated table with columns xi_1..xi_d,value (an optional
/// non-numeric header row is skipped).
Kernel load_tabulated_kernel(const std::string& path, int dim, LowerBall lower);

/// Selects a library kernel by its config name.
Kernel make_library_kernel(const std::string& name, int dim, double radius, double r0);

struct Grading {
    int base_cells_per_axis = 0;
    int levels = 0;
    /// Cells closer than refine_radius / 2^(l-1) to the origin are halved at level l.
    double refine_radius = 0.0;
};

/// Midpoint quadrature of the ball B_T, geometrically graded towards the origin.
struct XiQuadrature {
    int dim = 1;
    double T = 1.0;
    std::vector<Point> nodes;
    std::vector<double> weights;
    Grading grading;
    /// Relative tolerance declared for |sum(weights) - |B_T|| / |B_T|.
    double declared_volume_tol = 1e-3;

    std::size_t size() const { return nodes.size(); }
    double weight_sum() const;
    double ball_volume() const;
    /// Short identifier, e.g. "d1T1b64g0".
    std::string descriptor() const;
};

XiQuadrature build_quadrature(int dim, double T, int base_cells_per_axis, int grading_levels);

/// Products w_k * rho(xi_k) on the quadrature nodes; nodes with zero weight are dropped.
struct XiSamples {
    int dim = 1;
    std::vector<Point> xi;
    std::vector<double> weight;

    std::size_t size() const { return xi.size(); }
    double mass() const;
    Point first_moment() const;
};

/// Throws NumericalError naming the node when rho is not finite there.
XiSamples sample_kernel(const Kernel& kernel, const XiQuadrature& quad);

struct Moments {
    double kappa_full = 0.0; ///< sum_k w_k rho(xi_k) |xi_k|^p
    double kappa_dir = 0.0;  ///< sum_k w_k rho(xi_k) |xi_{k,1}|^p
};

Moments p_moment(const Kernel& kernel, double p, const XiQuadrature& quad);

struct Truncation {
    Kernel kernel;
    double tail_estimate;
};

/// rho * chi_{B_T} together with a midpoint estimate of the p-moment outside B_T
/// (shells out to 4T, tail_probe radial and angular samples).
Truncation truncate(const Kernel& kernel, double T, double p, int tail_probe);

struct AssumptionReport {
    bool rho1_ok = false;
    double rho1_min = 0.0;      ///< min of rho over nodes in B_{r0}
    double p_moment = 0.0;
    double symmetry_defect = 0.0;
    double mass = 0.0;          ///< at the quadrature's own grading
    double mass_refined = 0.0;  ///< after kMassProbeLevels more grading levels
    bool mass_diverges = false;

    Integrability classified() const {
        return mass_diverges ? Integrability::non_integrable : Integrability::integrable;
    }
};

inline constexpr int kMassProbeLevels = 8;
inline constexpr double kMassDivergenceRatio = 1.5;

AssumptionReport check_assumptions(const Kernel& kernel, double p, const XiQuadrature& quad);

} // namespace nlhomog
