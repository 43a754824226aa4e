#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "nlhomog/kernels.hpp"

using namespace nlhomog;
using doctest::Approx;

namespace {

const double kPi = std::acos(-1.0);

// Plain midpoint sum of g over [-T,T], independent of the library's quadrature builder.
template <class G>
double midpoint_1d(G g, double T, int cells) {
    const double w = 2.0 * T / cells;
    double s = 0.0;
    for (int j = 0; j < cells; ++j) s += w * g(-T + (j + 0.5) * w);
    return s;
}

} // namespace

TEST_CASE("uniform midpoint nodes and weights") {
    const XiQuadrature q = build_quadrature(1, 1.0, 4, 0);
    REQUIRE(q.size() == 4);
    std::vector<double> xs;
    for (const auto& p : q.nodes) xs.push_back(p[0]);
    std::sort(xs.begin(), xs.end());
    CHECK(xs == std::vector<double>{-0.75, -0.25, 0.25, 0.75});
    for (double w : q.weights) CHECK(w == 0.5);
}

TEST_CASE("one grading level halves the two central cells") {
    const XiQuadrature q = build_quadrature(1, 1.0, 4, 1);
    REQUIRE(q.size() == 6);
    std::vector<std::pair<double, double>> nw;
    for (std::size_t k = 0; k < q.size(); ++k) nw.emplace_back(q.nodes[k][0], q.weights[k]);
    std::sort(nw.begin(), nw.end());
    const std::vector<double> expected_w{0.5, 0.25, 0.25, 0.25, 0.25, 0.5};
    const std::vector<double> expected_x{-0.75, -0.375, -0.125, 0.125, 0.375, 0.75};
    for (std::size_t k = 0; k < 6; ++k) {
        CHECK(nw[k].second == Approx(expected_w[k]));
        CHECK(nw[k].first == Approx(expected_x[k]));
    }
    CHECK(q.weight_sum() == Approx(2.0));
}

TEST_CASE("2D quadrature weights sum to the disk area") {
    const XiQuadrature q = build_quadrature(2, 1.0, 32, 0);
    CHECK(std::abs(q.weight_sum() - kPi) / kPi <= 1e-2);
}

TEST_CASE("quadrature rejects bad arguments") {
    CHECK_THROWS_AS(build_quadrature(3, 1.0, 8, 0), ConfigError);
    CHECK_THROWS_AS(build_quadrature(1, 0.0, 8, 0), ConfigError);
    CHECK_THROWS_AS(build_quadrature(1, -1.0, 8, 0), ConfigError);
}

TEST_CASE("second moments of the box and the disk") {
    const Moments m = p_moment(box_kernel(1), 2.0, build_quadrature(1, 1.0, 64, 0));
    CHECK(m.kappa_full == Approx(2.0 / 3.0).epsilon(1e-3));
    CHECK(m.kappa_dir == m.kappa_full);
    // the midpoint rule on [-1,1] is reproduced exactly by the library
    CHECK(m.kappa_full == Approx(midpoint_1d([](double x) { return x * x; }, 1.0, 64)).epsilon(1e-14));

    const Moments d = p_moment(disk_kernel(2), 2.0, build_quadrature(2, 1.0, 64, 0));
    CHECK(std::abs(d.kappa_dir - kPi / 4) / (kPi / 4) <= 1e-2);
    CHECK(std::abs(d.kappa_full - kPi / 2) / (kPi / 2) <= 1e-2);

    const Moments z = p_moment(zero_kernel(1), 2.0, build_quadrature(1, 1.0, 16, 0));
    CHECK(z.kappa_full == 0.0);
    CHECK(z.kappa_dir == 0.0);
}

TEST_CASE("p-moment of a general exponent against an analytic integral") {
    // int_{-1}^{1} |x|^3 dx = 1/2
    const Moments m = p_moment(box_kernel(1), 3.0, build_quadrature(1, 1.0, 256, 0));
    CHECK(m.kappa_full == Approx(0.5).epsilon(1e-4));
}

TEST_CASE("truncation tails") {
    CHECK(truncate(box_kernel(1), 1.0, 2.0, 64).tail_estimate == 0.0);

    // int_5^inf 2 x^2 e^{-x} dx = 2 e^{-5} (25 + 10 + 2)
    const double exact = 2.0 * std::exp(-5.0) * 37.0;
    const Truncation t = truncate(exp_kernel(1), 5.0, 2.0, 64);
    CHECK(std::abs(t.tail_estimate - exact) / exact <= 0.05);
    CHECK(t.kernel({6.0, 0.0}) == 0.0);
    CHECK(t.kernel({0.5, 0.0}) == Approx(std::exp(-0.5)));

    const Truncation s = truncate(inv_norm_kernel(1), 1.0, 2.0, 64);
    CHECK(s.tail_estimate == 0.0);
    CHECK(s.kernel.integrable_class() == Integrability::non_integrable);

    CHECK_THROWS_AS(truncate(one_sided_kernel(0.25, 1.0), 0.2, 2.0, 64), ConfigError);
}

TEST_CASE("assumption report") {
    const XiQuadrature q = build_quadrature(1, 1.0, 64, 0);
    const AssumptionReport box = check_assumptions(box_kernel(1), 2.0, q);
    CHECK(box.rho1_ok);
    CHECK(box.symmetry_defect == 0.0);
    CHECK(box.mass == Approx(2.0));
    CHECK_FALSE(box.mass_diverges);
    CHECK(box_kernel(1).lower_ball().r0 == 1.0);

    const Kernel one = one_sided_kernel(0.25, 1.0);
    CHECK(one.lower_ball().c0 == 1.0);
    CHECK(one.lower_ball().r0 == 0.25);
    const AssumptionReport rep = check_assumptions(one, 2.0, q);
    CHECK(rep.rho1_ok);
    CHECK(rep.symmetry_defect == 1.0);

    const AssumptionReport sing = check_assumptions(inv_norm_kernel(1), 2.0, build_quadrature(1, 1.0, 64, 2));
    CHECK(sing.mass_diverges);
    CHECK(sing.classified() == Integrability::non_integrable);
    // the p-moment stays finite: int_{-1}^{1} |x|^{-1} x^2 dx = 1
    CHECK(sing.p_moment == Approx(1.0).epsilon(1e-3));
}

TEST_CASE("tabulated kernel reproduces its values at the quadrature nodes") {
    const XiQuadrature q = build_quadrature(1, 1.0, 8, 0);
    std::vector<double> values;
    for (const auto& x : q.nodes) values.push_back(1.0 + x[0] * x[0]);
    const Kernel t = tabulated_kernel(1, q.nodes, values, {1.0, 1.0});
    for (std::size_t k = 0; k < q.size(); ++k) CHECK(t(q.nodes[k]) == values[k]);
    CHECK(t({1.5, 0.0}) == 0.0);
    CHECK_THROWS_AS(tabulated_kernel(1, q.nodes, {1.0}, {1.0, 1.0}), ConfigError);
}
