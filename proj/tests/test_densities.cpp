#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "nlhomog/densities.hpp"

using namespace nlhomog;
using doctest::Approx;

namespace {

DensitySpec two_phase(double p = 2.0) {
    return DensitySpec::separable(CoefficientField::two_phase(1), CoefficientField::constant(1, 1.0), p);
}

double eval1(const DensitySpec& s, double x, double y, double z) {
    const double zz[1] = {z};
    return density_eval(s, {x, 0.0}, {y, 0.0}, zz);
}

double grad1(const DensitySpec& s, double x, double y, double z) {
    const double zz[1] = {z};
    double g[1] = {0.0};
    density_grad_z(s, {x, 0.0}, {y, 0.0}, zz, g);
    return g[0];
}

} // namespace

TEST_CASE("separable power evaluation") {
    const DensitySpec s = two_phase();
    CHECK(eval1(s, 0.25, 0.9, 3.0) == Approx(18.0));
    CHECK(eval1(s, 1.25, 0.9, 3.0) == Approx(18.0));
    CHECK(eval1(s, 0.75, 0.9, 3.0) == Approx(9.0));
    CHECK(eval1(s, -0.25, 0.9, 3.0) == Approx(9.0));
    for (double x : {0.1, 0.6})
        for (double y : {0.2, 0.7}) CHECK(eval1(s, x, y, 0.0) == 0.0);
}

TEST_CASE("z-gradient") {
    const DensitySpec s = two_phase();
    CHECK(grad1(s, 0.25, 0.5, 3.0) == Approx(12.0));
    CHECK(grad1(s, 0.25, 0.5, 0.0) == 0.0);

    const DensitySpec cubic =
        DensitySpec::separable(CoefficientField::constant(1, 1.0), CoefficientField::constant(1, 1.0), 3.0);
    CHECK(grad1(cubic, 0.3, 0.3, 2.0) == Approx(12.0));
    const double h = 1e-5;
    const double fd = (eval1(cubic, 0.3, 0.3, 2.0 + h) - eval1(cubic, 0.3, 0.3, 2.0 - h)) / (2 * h);
    CHECK(std::abs(fd - grad1(cubic, 0.3, 0.3, 2.0)) / 12.0 <= 1e-6);
}

TEST_CASE("vector-valued gradient matches central differences") {
    const DensitySpec s = DensitySpec::separable(CoefficientField::two_phase(1), CoefficientField::constant(1, 1.5),
                                                 3.0, 2);
    const double z[2] = {0.7, -1.3};
    double g[2];
    density_grad_z(s, {0.1, 0.0}, {0.4, 0.0}, z, g);
    for (int c = 0; c < 2; ++c) {
        double zp[2] = {z[0], z[1]}, zm[2] = {z[0], z[1]};
        zp[c] += 1e-6;
        zm[c] -= 1e-6;
        const double fd = (density_eval(s, {0.1, 0.0}, {0.4, 0.0}, zp) - density_eval(s, {0.1, 0.0}, {0.4, 0.0}, zm)) / 2e-6;
        CHECK(fd == Approx(g[c]).epsilon(1e-6));
    }
}

TEST_CASE("growth constants") {
    const DensitySpec s = two_phase();
    CHECK(s.alpha() == 1.0);
    CHECK(s.beta() == 2.0);
    CHECK(s.p() == 2.0);
    CHECK(s.growth_mode() == GrowthMode::strict);
}

TEST_CASE("symmetry defect") {
    const DensitySpec s = two_phase();
    CHECK(check_H1(box_kernel(1), s, 500, 7) == 0.0);
    CHECK(check_H1(one_sided_kernel(0.25, 1.0), s, 500, 7) > 0.0);
    CHECK(check_H1(zero_kernel(1), s, 500, 7) == 0.0);
}

TEST_CASE("density validation") {
    const DensitySpec s = two_phase();
    CHECK(validate_density(s, box_kernel(1), 500, 3).ok());

    GeneralConvex g;
    g.value = [](const Point& x, const Point&, std::span<const double> z) {
        return (1.0 + std::sin(2 * std::acos(-1.0) * x[0]) * 0.5) * (1.0 + z[0] * z[0]);
    };
    g.zgrad = [](const Point& x, const Point&, std::span<const double> z, std::span<double> out) {
        out[0] = (1.0 + std::sin(2 * std::acos(-1.0) * x[0]) * 0.5) * 2.0 * z[0];
    };
    g.alpha = 0.5;
    g.beta = 1.5;
    g.p = 2.0;
    g.growth_mode = GrowthMode::affine;
    const DensitySpec affine = DensitySpec::general(g, 1);
    CHECK(affine.growth_mode() == GrowthMode::affine);
    // affine growth needs an integrable kernel
    CHECK(validate_density(affine, box_kernel(1), 500, 3).kernel_compatible);
    CHECK_FALSE(validate_density(affine, inv_norm_kernel(1), 500, 3).kernel_compatible);
}

TEST_CASE("coefficient fields") {
    const CoefficientField a = CoefficientField::two_phase(2);
    CHECK(a({0.25, 0.25}) == 2.0);
    CHECK(a({0.75, 0.25}) == 1.0);
    CHECK(a.mean() == Approx(1.5));
    CHECK(CoefficientField::constant(1, 3.0).is_constant());
    CHECK_THROWS_AS(CoefficientField(1, 2, {1.0, -1.0}), ConfigError);
}
