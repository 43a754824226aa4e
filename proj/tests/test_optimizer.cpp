#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "nlhomog/optimizer.hpp"

using namespace nlhomog;
using doctest::Approx;

namespace {

void remove_mean(std::span<double> v) {
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    for (double& x : v) x -= m;
}

// E(v) = |v - target|^2 in the h-weighted inner product
Objective quadratic(std::vector<double> target, double h) {
    Objective o;
    o.cell_volume = h;
    o.energy = [target, h](std::span<const double> v) {
        double s = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) s += (v[i] - target[i]) * (v[i] - target[i]);
        return h * s;
    };
    o.gradient = [target](std::span<const double> v, std::span<double> g) {
        for (std::size_t i = 0; i < v.size(); ++i) g[i] = 2.0 * (v[i] - target[i]);
    };
    o.gauge = remove_mean;
    return o;
}

std::vector<double> mean_zero_target(int n) {
    std::vector<double> t(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) t[static_cast<std::size_t>(i)] = std::sin(0.3 * i) + 0.1 * i;
    remove_mean(t);
    return t;
}

} // namespace

TEST_CASE("strongly convex quadratic") {
    const int n = 64;
    const auto target = mean_zero_target(n);
    for (Algorithm alg : {Algorithm::accelerated_gradient, Algorithm::nonlinear_cg}) {
        OptimizerOptions opts;
        opts.algorithm = alg;
        const MinimizeResult r = minimize(quadratic(target, 1.0 / n), std::vector<double>(n, 0.0), opts);
        CHECK(r.stats.converged);
        CHECK(r.stats.iterations <= 200);
        CHECK(r.stats.grad_norm <= opts.tol_grad);
        double err = 0.0;
        for (int i = 0; i < n; ++i) err = std::max(err, std::abs(r.minimizer[static_cast<std::size_t>(i)] - target[static_cast<std::size_t>(i)]));
        CHECK(err <= 1e-7);
    }
}

TEST_CASE("ill-conditioned quadratic converges with either algorithm") {
    // E(v) = h sum c_i (v_{i+1} - v_i)^2 / h^2: a discrete periodic Laplacian with rough coefficients
    const int n = 64;
    const double h = 1.0 / n;
    std::vector<double> c(n), f(n);
    for (int i = 0; i < n; ++i) {
        c[static_cast<std::size_t>(i)] = i < n / 2 ? 2.0 : 1.0;
        f[static_cast<std::size_t>(i)] = std::cos(6.283185307179586 * i / n);
    }
    Objective o;
    o.cell_volume = h;
    o.energy = [=](std::span<const double> v) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) {
            const double d = (v[static_cast<std::size_t>((i + 1) % n)] - v[static_cast<std::size_t>(i)]) / h;
            s += h * (c[static_cast<std::size_t>(i)] * d * d - 2.0 * f[static_cast<std::size_t>(i)] * v[static_cast<std::size_t>(i)]);
        }
        return s;
    };
    o.gradient = [=](std::span<const double> v, std::span<double> g) {
        for (int i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = -2.0 * f[static_cast<std::size_t>(i)];
        for (int i = 0; i < n; ++i) {
            const auto j = static_cast<std::size_t>((i + 1) % n);
            const double d = 2.0 * c[static_cast<std::size_t>(i)] * (v[j] - v[static_cast<std::size_t>(i)]) / (h * h);
            g[j] += d;
            g[static_cast<std::size_t>(i)] -= d;
        }
    };
    o.gauge = remove_mean;
    double values[2];
    int k = 0;
    for (Algorithm alg : {Algorithm::accelerated_gradient, Algorithm::nonlinear_cg}) {
        OptimizerOptions opts;
        opts.algorithm = alg;
        opts.max_iter = 20000;
        const MinimizeResult r = minimize(o, std::vector<double>(n, 0.0), opts);
        CHECK(r.stats.converged);
        values[k++] = r.value;
    }
    CHECK(values[0] == Approx(values[1]).epsilon(1e-10));
}

TEST_CASE("minimizer at the initial point") {
    const MinimizeResult r = minimize(quadratic(std::vector<double>(16, 0.0), 1.0 / 16), std::vector<double>(16, 0.0), {});
    CHECK(r.stats.converged);
    CHECK(r.stats.iterations == 0);
    CHECK(r.value == 0.0);
}

TEST_CASE("non-finite energy aborts with the last iterate") {
    Objective o = quadratic(mean_zero_target(8), 1.0 / 8);
    o.energy = [](std::span<const double> v) { return v[0] > 0.05 ? std::nan("") : -v[0]; };
    o.gradient = [](std::span<const double>, std::span<double> g) {
        std::fill(g.begin(), g.end(), 0.0);
        g[0] = -8.0;
        g[1] = 8.0;
    };
    CHECK_THROWS_AS(minimize(o, std::vector<double>(8, 0.0), {}), OptimizerAbort);
    try {
        minimize(o, std::vector<double>(8, 0.0), {});
    } catch (const OptimizerAbort& e) {
        CHECK(e.last_iterate.size() == 8);
    }
}

TEST_CASE("options are validated") {
    OptimizerOptions o;
    o.tol_grad = 0.0;
    CHECK_THROWS_AS(o.validate(), ConfigError);
    o = {};
    o.max_iter = 0;
    CHECK_THROWS_AS(o.validate(), ConfigError);
    CHECK(OptimizerOptions::defaults_for(2.0).tol_grad == 1e-8);
    CHECK(OptimizerOptions::defaults_for(3.0).tol_grad == 1e-6);
    CHECK(parse_algorithm("nonlinear_cg") == Algorithm::nonlinear_cg);
    CHECK_THROWS_AS(parse_algorithm("newton"), ConfigError);
}

TEST_CASE("gradient check") {
    const auto target = mean_zero_target(32);
    std::vector<double> point(32);
    std::mt19937_64 rng(4);
    std::normal_distribution<double> nd;
    for (double& x : point) x = nd(rng);
    remove_mean(point);
    CHECK(grad_check(quadratic(target, 1.0 / 32), point, 1e-4, 9) <= 1e-8);

    Objective zero;
    zero.cell_volume = 1.0 / 32;
    zero.energy = [](std::span<const double>) { return 0.0; };
    zero.gradient = [](std::span<const double>, std::span<double> g) { std::fill(g.begin(), g.end(), 0.0); };
    zero.gauge = remove_mean;
    CHECK(grad_check(zero, point, 1e-4, 9) == 0.0);

    // a wrong gradient is caught
    Objective bad = quadratic(target, 1.0 / 32);
    bad.gradient = [target](std::span<const double> v, std::span<double> g) {
        for (std::size_t i = 0; i < v.size(); ++i) g[i] = 3.0 * (v[i] - target[i]);
    };
    CHECK(grad_check(bad, point, 1e-4, 9) > 0.1);
}

TEST_CASE("weighted norm") {
    const std::vector<double> v{3.0, 4.0};
    CHECK(weighted_norm(v, 0.25) == Approx(2.5));
}
