#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <random>

#include "nlhomog/torus_fields.hpp"

using namespace nlhomog;
using doctest::Approx;

namespace {

const double kTwoPi = 2.0 * std::acos(-1.0);

PeriodicField sampled(int n, double (*f)(double)) {
    PeriodicField v(TorusGrid(1, n), 1);
    for (int i = 0; i < n; ++i) v.values[static_cast<std::size_t>(i)] = f(static_cast<double>(i) / n);
    return v;
}

PeriodicField random_field(const TorusGrid& g, int m, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    PeriodicField v(g, m);
    for (double& x : v.values) x = nd(rng);
    return v;
}

} // namespace

TEST_CASE("sampling an affine field") {
    const AffineField flat{Matrix::scalar(1.0), PeriodicField(TorusGrid(1, 8), 1)};
    CHECK(sample(flat, {0.3, 0.0})[0] == Approx(0.3));

    const PeriodicField c = sampled(4, [](double x) { return std::cos(kTwoPi * x); });
    const AffineField f{Matrix::scalar(0.0), c};
    CHECK(sample(f, {0.25, 0.0})[0] == c.values[1]);
    CHECK(sample(f, {0.125, 0.0})[0] == Approx(0.5 * (c.values[0] + c.values[1])));
    CHECK(sample(f, {1.25, 0.0})[0] == Approx(c.values[1]));
}

TEST_CASE("shift differences") {
    const TorusGrid g(1, 16);
    const AffineField zero{Matrix::scalar(1.0), PeriodicField(g, 1)};
    const PeriodicField d = shift_diff(zero, {0.7, 0.0}, 0.5);
    for (double x : d.values) CHECK(x == Approx(0.7));

    // a lattice shift is an exact cyclic shift
    const AffineField r{Matrix::scalar(0.0), random_field(g, 1, 1)};
    const PeriodicField s = shift_diff(r, {3.0 / 16.0, 0.0}, 1.0);
    for (int i = 0; i < 16; ++i)
        CHECK(s.values[static_cast<std::size_t>(i)] ==
              Approx(r.periodic.values[static_cast<std::size_t>((i + 3) % 16)] - r.periodic.values[static_cast<std::size_t>(i)]));

    const AffineField sine{Matrix::scalar(0.0), sampled(64, [](double x) { return std::sin(kTwoPi * x); })};
    const PeriodicField q = shift_diff(sine, {1.0, 0.0}, 0.5);
    double err = 0.0;
    for (int i = 0; i < 64; ++i) {
        const double x = i / 64.0;
        err = std::max(err, std::abs(q.values[static_cast<std::size_t>(i)] -
                                     (std::sin(kTwoPi * (x + 0.5)) - std::sin(kTwoPi * x)) / 0.5));
    }
    CHECK(err <= 1e-12);
}

TEST_CASE("interpolated shift converges at second order") {
    auto err_at = [](int n) {
        PeriodicField v(TorusGrid(1, n), 1);
        for (int i = 0; i < n; ++i) v.values[static_cast<std::size_t>(i)] = std::sin(kTwoPi * i / n);
        const double xi = 0.3 / n + 0.25; // off-lattice
        const PeriodicField q = shift_diff({Matrix::scalar(0.0), v}, {xi, 0.0}, 1.0);
        double e = 0.0;
        for (int i = 0; i < n; ++i) {
            const double x = static_cast<double>(i) / n;
            e = std::max(e, std::abs(q.values[static_cast<std::size_t>(i)] - (std::sin(kTwoPi * (x + xi)) - std::sin(kTwoPi * x))));
        }
        return e;
    };
    const double ratio = err_at(64) / err_at(128);
    CHECK(ratio > 3.5);
    CHECK(ratio < 4.5);
}

TEST_CASE("adjoint identity") {
    for (int dim : {1, 2}) {
        const TorusGrid g(dim, 16);
        const PeriodicField v = random_field(g, 2, 11), w = random_field(g, 2, 12);
        const Point xi{0.37, -0.81};
        const double lambda = 0.6;
        const PeriodicField lhs = shift_diff({Matrix(2, dim, 0.0), v}, xi, lambda);
        const PeriodicField rhs = shift_diff_adjoint(w, xi, lambda);
        const double a = inner(lhs, w), b = inner(v, rhs);
        CHECK(std::abs(a - b) <= 1e-12 * std::abs(a));
    }
    const TorusGrid g(1, 16);
    for (double x : shift_diff_adjoint(random_field(g, 1, 3), {0.0, 0.0}, 1.0).values) CHECK(x == 0.0);
    PeriodicField c(g, 1);
    for (double& x : c.values) x = 2.5;
    for (double x : shift_diff_adjoint(c, {0.41, 0.0}, 0.7).values) CHECK(std::abs(x) <= 1e-13);
}

TEST_CASE("discrete gradient") {
    const TorusGrid g(1, 128);
    const AffineField zero{Matrix::scalar(2.0), PeriodicField(g, 1)};
    for (double x : discrete_gradient(zero)) CHECK(x == 2.0);
    PeriodicField c(g, 1);
    for (double& x : c.values) x = -4.0;
    for (double x : discrete_gradient({Matrix::scalar(2.0), c})) CHECK(x == 2.0);

    const auto grad = discrete_gradient({Matrix::scalar(0.0), sampled(128, [](double x) { return std::sin(kTwoPi * x); })});
    double err = 0.0;
    for (int i = 0; i < 128; ++i)
        err = std::max(err, std::abs(grad[static_cast<std::size_t>(i)] - kTwoPi * std::cos(kTwoPi * (i + 0.5) / 128)));
    // centred at the half node the forward difference is second order
    CHECK(err <= 1e-2);
}

TEST_CASE("mean-zero projection") {
    const TorusGrid g(2, 8);
    PeriodicField c(g, 1);
    for (double& x : c.values) x = 3.5;
    for (double x : project_mean_zero(c).values) CHECK(std::abs(x) <= 1e-15);

    const PeriodicField r = random_field(g, 2, 5);
    const PeriodicField p = project_mean_zero(r);
    const PeriodicField pp = project_mean_zero(p);
    for (std::size_t i = 0; i < p.values.size(); ++i) CHECK(pp.values[i] == Approx(p.values[i]));
    PeriodicField shifted = p;
    for (std::size_t i = 0; i < shifted.values.size(); i += 2) shifted.values[i] += 3.5;
    const PeriodicField back = project_mean_zero(shifted);
    for (std::size_t i = 0; i < back.values.size(); ++i) CHECK(back.values[i] == Approx(p.values[i]));
    CHECK(mean(back)[0] == Approx(0.0));
}

TEST_CASE("field csv round trip") {
    const TorusGrid g(2, 4);
    const AffineField f{Matrix(1, 2, {0.5, -1.0}), random_field(g, 1, 9)};
    const std::string path = "test_field_roundtrip.csv";
    write_field_csv(path, f);
    const AffineField back = read_field_csv(path);
    CHECK(back.periodic.grid == g);
    CHECK(back.M.data == f.M.data);
    CHECK(back.periodic.values == f.periodic.values);
    std::remove(path.c_str());
}
