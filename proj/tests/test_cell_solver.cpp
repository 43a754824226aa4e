#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "nlhomog/cell_solver.hpp"

using namespace nlhomog;
using doctest::Approx;

namespace {

const XiQuadrature kQuad = build_quadrature(1, 1.0, 64, 0);
const double kKappa = p_moment(box_kernel(1), 2.0, kQuad).kappa_full;

DensitySpec density(double a_high, double a_low, double p = 2.0) {
    return DensitySpec::separable(CoefficientField(1, 2, {a_high, a_low}), CoefficientField::constant(1, 1.0), p);
}

CellProblem problem(Regime r, double lambda, int n, const DensitySpec& d, double M = 1.0,
                    const Kernel& k = box_kernel(1)) {
    return CellProblem{r, lambda, Matrix::scalar(M), d, k, kQuad, TorusGrid(1, n), OptimizerOptions::defaults_for(d.p())};
}

PeriodicField zero(int n) { return PeriodicField(TorusGrid(1, n), 1); }

// Dense minimum of the 1D nonlocal p = 2 energy, assembled directly from linear interpolation
// of v at x_i + lambda xi_k, with v_0 = 0 pinned.
double dense_nonlocal(int n, double lambda, double M, const std::vector<double>& a) {
    const double h = 1.0 / n;
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
    double E0 = 0.0;
    for (std::size_t k = 0; k < kQuad.size(); ++k) {
        const double xi = kQuad.nodes[k][0], w = kQuad.weights[k];
        const double s = lambda * xi / h;
        const int base = static_cast<int>(std::floor(s));
        const double t = s - base;
        for (int i = 0; i < n; ++i) {
            // (v(x_i + lambda xi) - v(x_i)) / lambda = row . v
            Eigen::VectorXd row = Eigen::VectorXd::Zero(n);
            row(((i + base) % n + n) % n) += (1.0 - t) / lambda;
            row(((i + base + 1) % n + n) % n) += t / lambda;
            row(i) -= 1.0 / lambda;
            const double c = w * h * a[static_cast<std::size_t>(i)];
            H += c * row * row.transpose();
            g += c * M * xi * row;
            E0 += c * M * xi * M * xi;
        }
    }
    const Eigen::MatrixXd Hr = H.bottomRightCorner(n - 1, n - 1);
    const Eigen::VectorXd gr = g.tail(n - 1);
    const Eigen::VectorXd v = Hr.ldlt().solve(-gr);
    return E0 + 2.0 * gr.dot(v) + v.dot(Hr * v);
}

std::vector<double> two_phase_nodes(int n) {
    std::vector<double> a(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) a[static_cast<std::size_t>(i)] = i < n / 2 ? 2.0 : 1.0;
    return a;
}

} // namespace

TEST_CASE("energies at v = 0") {
    const DensitySpec unit = density(1.0, 1.0);
    CHECK(energy_nonlocal(zero(64), problem(Regime::nonlocal, 1.0, 64, unit)) == Approx(kKappa).epsilon(1e-14));
    CHECK(energy_nonlocal(zero(64), problem(Regime::nonlocal, 1.0, 64, unit, 0.0)) == 0.0);
    for (double lambda : {0.25, 1.0, 3.0}) {
        const int n = 64 * static_cast<int>(std::ceil(1.0 / lambda));
        CHECK(energy_nonlocal(zero(n), problem(Regime::nonlocal, lambda, n, density(2.0, 1.0))) ==
              Approx(1.5 * kKappa).epsilon(1e-14));
    }
    CHECK(energy_local(zero(32), problem(Regime::local, 0.0, 32, density(3.0, 3.0))) == Approx(3.0 * kKappa).epsilon(1e-14));
    CHECK(energy_local(zero(32), problem(Regime::local, 0.0, 32, density(3.0, 3.0), 0.0)) == 0.0);
}

TEST_CASE("two-dimensional energy at v = 0 is the directional moment") {
    const XiQuadrature q2 = build_quadrature(2, 1.0, 32, 0);
    const Kernel disk = disk_kernel(2);
    const DensitySpec d = DensitySpec::separable(CoefficientField::two_phase(2), CoefficientField::constant(2, 1.0), 2.0);
    const CellProblem prob{Regime::nonlocal, 1.0, Matrix(1, 2, {1.0, 0.0}), d, disk, q2, TorusGrid(2, 32), {}};
    CHECK(energy_nonlocal(PeriodicField(TorusGrid(2, 32), 1), prob) ==
          Approx(1.5 * p_moment(disk, 2.0, q2).kappa_dir).epsilon(1e-13));
}

TEST_CASE("constant coefficients: v = 0 is optimal") {
    for (double lambda : {0.5, 1.0, 4.0}) {
        const CellResult r = solve_cell(problem(Regime::nonlocal, lambda, 64 * static_cast<int>(std::ceil(1 / lambda)),
                                                density(1.5, 1.5)));
        CHECK(r.converged);
        CHECK(r.value == Approx(1.5 * kKappa).epsilon(1e-10));
        for (double x : r.minimizer.values) CHECK(std::abs(x) <= 1e-8);
    }
    const CellResult z = solve_cell(problem(Regime::local, 0.0, 64, density(2.0, 1.0), 0.0));
    CHECK(z.value == 0.0);
    for (double x : z.minimizer.values) CHECK(x == 0.0);
}

TEST_CASE("local two-phase value: harmonic mean") {
    // discrete flux balance: minimum = kappa M^2 / (h sum 1/a_i)
    for (int n : {64, 256}) {
        const CellResult r = solve_cell(problem(Regime::local, 0.0, n, density(2.0, 1.0)));
        CHECK(r.converged);
        CHECK(r.value == Approx(kKappa * 4.0 / 3.0).epsilon(1e-8));
        CHECK(std::abs(r.value - 8.0 / 9.0) / (8.0 / 9.0) <= 0.02);
    }
}

TEST_CASE("nonlocal two-phase value against a dense solve") {
    for (double lambda : {0.5, 1.0}) {
        const int n = 64 * static_cast<int>(std::ceil(0.5 / lambda));
        const CellResult r = solve_cell(problem(Regime::nonlocal, lambda, n, density(2.0, 1.0)));
        CHECK(r.converged);
        const double dense = dense_nonlocal(n, lambda, 1.0, two_phase_nodes(n));
        CHECK(r.value == Approx(dense).epsilon(1e-8));
        CHECK(r.bounds_hold());
    }
}

TEST_CASE("nonlinear CG reaches the same value") {
    CellProblem prob = problem(Regime::nonlocal, 1.0, 64, density(2.0, 1.0));
    const double ag = solve_cell(prob).value;
    prob.opts.algorithm = Algorithm::nonlinear_cg;
    const CellResult cg = solve_cell(prob);
    CHECK(cg.converged);
    CHECK(cg.value == Approx(ag).epsilon(1e-10));
}

TEST_CASE("supercritical evaluation") {
    const TorusGrid g(1, 256);
    CHECK(std::abs(eval_supercritical(Matrix::scalar(1.0), density(2.0, 1.0), box_kernel(1), kQuad, g) - 1.5 * kKappa) <= 1e-12);
    CHECK(eval_supercritical(Matrix::scalar(0.0), density(2.0, 1.0), box_kernel(1), kQuad, g) == 0.0);
    CHECK(eval_supercritical(Matrix::scalar(1.0), density(1.0, 1.0), box_kernel(1), kQuad, g) == Approx(kKappa).epsilon(1e-14));
}

TEST_CASE("relaxed supercritical problem") {
    const OptimizerOptions opts;
    const RelaxedResult even = relaxed_supercritical(Matrix::scalar(1.0), density(2.0, 1.0), box_kernel(1), kQuad, 32, opts);
    CHECK(even.gap <= 10 * opts.tol_grad);
    CHECK(even.F0 == Approx(1.5 * kKappa).epsilon(1e-12));

    const Kernel one = one_sided_kernel(0.25, 1.0);
    const RelaxedResult odd = relaxed_supercritical(Matrix::scalar(1.0), density(2.0, 1.0), one, kQuad, 32, opts);
    CHECK(odd.converged);
    CHECK(odd.gap > 100 * opts.tol_grad);
    CHECK(odd.first_moment[0] == Approx(15.0 / 32.0).epsilon(1e-12));

    const RelaxedResult flat = relaxed_supercritical(Matrix::scalar(0.0), density(2.0, 1.0), one, kQuad, 32, opts);
    CHECK(flat.gap <= 10 * opts.tol_grad);
    CHECK(std::abs(flat.inf_value) <= 1e-12);
}

TEST_CASE("stationarity residual") {
    const CellProblem flat = problem(Regime::nonlocal, 1.0, 64, density(1.5, 1.5));
    CHECK(euler_lagrange_residual(solve_cell(flat), flat) <= 1e-13);

    for (const CellProblem& prob : {problem(Regime::nonlocal, 1.0, 64, density(2.0, 1.0)),
                                    problem(Regime::local, 0.0, 64, density(2.0, 1.0))}) {
        const CellResult r = solve_cell(prob);
        CHECK(euler_lagrange_residual(r, prob) <= 10 * prob.opts.tol_grad);
        CellProblem early = prob;
        early.opts.max_iter = 1;
        const CellResult e = solve_cell(early);
        CHECK_FALSE(e.converged);
        CHECK(euler_lagrange_residual(e, early) > early.opts.tol_grad);
    }
    CHECK_THROWS_AS(euler_lagrange_residual(CellResult{}, problem(Regime::local, 0.0, 64, density(2.0, 1.0, 3.0))),
                    ConfigError);
}

TEST_CASE("p = 3 bounds and homogeneity") {
    const DensitySpec d = density(2.0, 1.0, 3.0);
    const CellResult r1 = solve_cell(problem(Regime::nonlocal, 1.0, 64, d, 1.0));
    const CellResult r2 = solve_cell(problem(Regime::nonlocal, 1.0, 64, d, 2.0));
    CHECK(r1.bounds_hold());
    CHECK(r2.bounds_hold());
    CHECK(r2.value == Approx(8.0 * r1.value).epsilon(1e-5));
}

TEST_CASE("problem validation") {
    CHECK_THROWS_AS(problem(Regime::nonlocal, 1.0, 8, density(2.0, 1.0)).validate(), ConfigError);
    CHECK_NOTHROW(problem(Regime::nonlocal, 1.0, 16, density(2.0, 1.0)).validate());
    CellProblem bad = problem(Regime::nonlocal, 1.0, 64, density(2.0, 1.0), 1.0, one_sided_kernel(0.25, 1.0));
    bad.quad = build_quadrature(1, 0.2, 16, 0);
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CellProblem shape = problem(Regime::local, 0.0, 64, density(2.0, 1.0));
    shape.M = Matrix(2, 1, 1.0);
    CHECK_THROWS_AS(shape.validate(), ConfigError);
}

TEST_CASE("mesh policy and sweep") {
    const MeshPolicy policy;
    CHECK(policy.grid_for(4.0) == 64);
    CHECK(policy.grid_for(0.25) == 64);
    CHECK(policy.grid_for(0.125) == 128);
    CHECK(policy.grid_for(1.0 / 512) == 0);

    const DensitySpec flat = density(1.5, 1.5);
    const LambdaSweep s = sweep({0.25, 1.0, 4.0}, Matrix::scalar(1.0), flat, box_kernel(1), kQuad, policy, {});
    REQUIRE(s.entries.size() == 3);
    for (const auto& e : s.entries) CHECK(e.value == Approx(1.5 * kKappa).epsilon(1e-10));
    CHECK(s.f0 == Approx(1.5 * kKappa).epsilon(1e-10));
    CHECK(s.finf == Approx(1.5 * kKappa).epsilon(1e-12));

    const LambdaSweep empty = sweep({}, Matrix::scalar(1.0), density(2.0, 1.0), box_kernel(1), kQuad, policy, {});
    CHECK(empty.entries.empty());
    CHECK(empty.f0 == Approx(4.0 / 3.0 * kKappa).epsilon(1e-8));
    CHECK(empty.finf == Approx(1.5 * kKappa).epsilon(1e-12));

    MeshPolicy tight = policy;
    tight.n_max = 64;
    const LambdaSweep u = sweep({0.0625, 1.0}, Matrix::scalar(1.0), density(2.0, 1.0), box_kernel(1), kQuad, tight, {});
    CHECK_FALSE(u.entries[0].resolved);
    CHECK(std::isnan(u.entries[0].value));
    CHECK(u.entries[1].resolved);
}
