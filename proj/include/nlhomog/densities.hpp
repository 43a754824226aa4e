#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "nlhomog/common.hpp"
#include "nlhomog/kernels.hpp"

namespace nlhomog {

/// Piecewise-constant Q1-periodic coefficient on a uniform partition of the unit cube.
class CoefficientField {
public:
    CoefficientField(int dim, int cells_per_axis, std::vector<double> values);

    static CoefficientField constant(int dim, double c);
    /// 2 on [0,1/2) and 1 on [1/2,1) along the first axis.
    static CoefficientField two_phase(int dim, double high = 2.0, double low = 1.0);

    /// Cell values row-major (first axis slowest), read from a comma-separated file.
    static CoefficientField load_csv(const std::string& path, int dim, int cells_per_axis);

    double operator()(const Point& x) const;

    int dim() const { return dim_; }
    int cells_per_axis() const { return cells_; }
    const std::vector<double>& values() const { return values_; }
    double lower() const { return lo_; }
    double upper() const { return hi_; }
    double mean() const;
    bool is_constant() const { return lo_ == hi_; }

private:
    int dim_;
    int cells_;
    std::vector<double> values_;
    double lo_;
    double hi_;
};

enum class GrowthMode { strict, affine };

const char* to_string(GrowthMode g);

/// f(x,y,z) = a(x) b(y) |z|^p.
struct SeparablePower {
    CoefficientField a;
    CoefficientField b;
    double p;
};

/// Arbitrary convex integrand with declared growth constants.
struct GeneralConvex {
    std::function<double(const Point& x, const Point& y, std::span<const double> z)> value;
    std::function<void(const Point& x, const Point& y, std::span<const double> z, std::span<double> grad)> zgrad;
    double alpha;
    double beta;
    double p;
    GrowthMode growth_mode = GrowthMode::strict;
    std::string label = "general";
};

class DensitySpec {
public:
    static DensitySpec separable(CoefficientField a, CoefficientField b, double p, int target_dim = 1);
    static DensitySpec general(GeneralConvex g, int dim, int target_dim = 1);

    int dim() const { return dim_; }
    int target_dim() const { return m_; }
    double p() const;
    double alpha() const;
    double beta() const;
    GrowthMode growth_mode() const;

    const SeparablePower* separable_form() const { return std::get_if<SeparablePower>(&form_); }
    const GeneralConvex* general_form() const { return std::get_if<GeneralConvex>(&form_); }

    /// False when b is a non-constant piecewise-constant field: continuity in y then fails.
    bool y_continuous() const;

    /// Canonical text used for manifests and fingerprints.
    std::string describe() const;

private:
    DensitySpec(std::variant<SeparablePower, GeneralConvex> form, int dim, int m);

    std::variant<SeparablePower, GeneralConvex> form_;
    int dim_;
    int m_;
};

double density_eval(const DensitySpec& spec, const Point& x, const Point& y, std::span<const double> z);

/// Gradient in z; zero at z = 0 (p > 1).
void density_grad_z(const DensitySpec& spec, const Point& x, const Point& y, std::span<const double> z,
                    std::span<double> grad);

/// max over seeded samples of |rho(xi) f(x,y,z) - rho(-xi) f(x,y,-z)|.
double check_H1(const Kernel& kernel, const DensitySpec& spec, int sample_count, std::uint64_t seed);

struct DensityReport {
    double growth_violation = 0.0;    ///< worst relative violation of the growth envelope
    double convexity_violation = 0.0; ///< worst midpoint-convexity defect
    bool kernel_compatible = true;    ///< affine growth requires an integrable kernel
    bool y_continuous = true;

    bool ok() const { return growth_violation <= 1e-12 && convexity_violation <= 1e-12 && kernel_compatible; }
};

/// Sample-based check of growth, midpoint convexity and growth-mode/kernel compatibility.
DensityReport validate_density(const DensitySpec& spec, const Kernel& kernel, int sample_count, std::uint64_t seed);

} // namespace nlhomog
