#include "nlhomog/verify.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <ostream>
#include <random>
#include <sstream>

#include <unistd.h>

namespace nlhomog {

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

struct Setup {
    Kernel kernel;
    XiQuadrature quad;
    DensitySpec density;
    OptimizerOptions opts;
    Matrix M;
    MeshPolicy mesh;

    explicit Setup(const RunConfig& cfg)
        : kernel(build_kernel(cfg)), quad(build_quadrature(cfg)), density(build_density(cfg)),
          opts(build_optimizer(cfg, density.p())),
          M(build_matrix(cfg, "cell.M", density.target_dim(), density.dim())), mesh(build_mesh_policy(cfg)) {}

    CellProblem problem(Regime r, double lambda, int n) const {
        return CellProblem{r, lambda, M, density, kernel, quad, TorusGrid(density.dim(), n), opts};
    }
    CellProblem nonlocal(double lambda) const {
        const int n = mesh.grid_for(lambda);
        if (n == 0) throw ConfigError("lambda = " + fmt(lambda) + " is not resolvable under the mesh policy");
        return problem(Regime::nonlocal, lambda, n);
    }
};

RunConfig with(RunConfig cfg, std::initializer_list<std::pair<const char*, const char*>> kv) {
    for (const auto& [k, v] : kv) cfg.set(k, v);
    return cfg;
}

/// Checks collected by one criterion; the first failure is kept for the report.
class Checks {
public:
    void expect(bool ok, const std::string& what) {
        if (!ok && failure_.empty()) failure_ = what;
        ok_ = ok_ && ok;
    }
    void note(const std::string& s) { notes_ += (notes_.empty() ? "" : "; ") + s; }
    bool ok() const { return ok_; }
    std::string detail() const { return ok_ ? notes_ : "FAILED " + failure_ + (notes_.empty() ? "" : " | " + notes_); }

private:
    bool ok_ = true;
    std::string failure_;
    std::string notes_;
};

// --- oracles ---------------------------------------------------------------

/// Minimum of the 1D local p = 2 energy by a dense solve with v_0 = 0 pinned.
double dense_local_value(const Setup& s, int n) {
    const XiSamples xi = sample_kernel(s.kernel, s.quad);
    const SeparablePower* sep = s.density.separable_form();
    const double h = 1.0 / n, M = s.M(0, 0);
    std::vector<double> c(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) c[static_cast<std::size_t>(i)] = sep->a({i * h, 0.0}) * sep->b({i * h, 0.0});
    // E = sum_k w_k h sum_i c_i (xi_k M + xi_k (v_{i+1} - v_i) / h)^2
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
    double E0 = 0.0;
    for (std::size_t k = 0; k < xi.size(); ++k) {
        const double x = xi.xi[k][0], w = xi.weight[k];
        for (int i = 0; i < n; ++i) {
            const int j = (i + 1) % n;
            const double coef = w * h * c[static_cast<std::size_t>(i)];
            const double slope = x / h;
            H(j, j) += coef * slope * slope;
            H(i, i) += coef * slope * slope;
            H(i, j) -= coef * slope * slope;
            H(j, i) -= coef * slope * slope;
            g(j) += coef * x * M * slope;
            g(i) -= coef * x * M * slope;
            E0 += coef * x * M * x * M;
        }
    }
    const Eigen::MatrixXd Hr = H.bottomRightCorner(n - 1, n - 1);
    const Eigen::VectorXd gr = g.tail(n - 1);
    const Eigen::VectorXd v = Hr.ldlt().solve(-gr);
    return E0 + 2.0 * gr.dot(v) + v.dot(Hr * v);
}

// --- criteria --------------------------------------------------------------

void moments(const RunConfig& base, Checks& c) {
    const Setup s(base);
    const Moments m = p_moment(s.kernel, 2.0, s.quad);
    c.expect(std::abs(m.kappa_full - 2.0 / 3.0) <= 1e-3, "kappa_full = " + fmt(m.kappa_full) + " vs 2/3");
    c.expect(std::abs(m.kappa_dir - 2.0 / 3.0) <= 1e-3, "kappa_dir = " + fmt(m.kappa_dir) + " vs 2/3");
    const RunConfig d2 = with(base, {{"kernel.dim", "2"}, {"kernel.name", "disk"}, {"kernel.radius", "1"}, {"kernel.T", "1"}});
    const Moments m2 = p_moment(build_kernel(d2), 2.0, build_quadrature(d2));
    const double quarter_pi = std::acos(-1.0) / 4.0;
    c.expect(rel(m2.kappa_dir, quarter_pi) <= 0.01, "disk kappa_dir = " + fmt(m2.kappa_dir) + " vs pi/4");
    c.note("kappa_full=" + fmt(m.kappa_full) + " kappa_dir=" + fmt(m.kappa_dir) + " disk kappa_dir=" + fmt(m2.kappa_dir));
}

void local_endpoint(const RunConfig& base, Checks& c) {
    const Setup s(base);
    const double target = 8.0 / 9.0;
    const CellResult r = solve_cell(s.problem(Regime::local, 0.0, 256));
    c.expect(r.converged, "local solve at n=256 did not converge");
    c.expect(rel(r.value, target) <= 0.02, "f_0 = " + fmt(r.value) + " vs 8/9");
    const CellResult r64 = solve_cell(s.problem(Regime::local, 0.0, 64));
    const double dense = dense_local_value(s, 64);
    c.expect(rel(r64.value, dense) <= 1e-8, "n=64 iterative " + fmt(r64.value) + " vs dense " + fmt(dense));
    c.note("f_0=" + fmt(r.value) + " rel_err=" + fmt(rel(r.value, target)) + " dense_gap=" + fmt(rel(r64.value, dense)));
}

void supercritical_endpoint(const RunConfig& base, Checks& c) {
    const Setup s(base);
    const double kappa = p_moment(s.kernel, 2.0, s.quad).kappa_full;
    const double v = eval_supercritical(s.M, s.density, s.kernel, s.quad, TorusGrid(1, s.mesh.n_sup));
    c.expect(std::abs(v - 1.5 * kappa) <= 1e-6, "f_inf = " + fmt(v) + " vs 1.5 kappa = " + fmt(1.5 * kappa));
    c.note("f_inf=" + fmt(v) + " 1.5*kappa=" + fmt(1.5 * kappa));
}

void constant_consistency(const RunConfig& base, Checks& c) {
    const Setup s(with(base, {{"density.a.cells", "1"}, {"density.a.values", "1.5"}, {"density.a.file", ""}}));
    const double sup = eval_supercritical(s.M, s.density, s.kernel, s.quad, TorusGrid(1, s.mesh.n_sup));
    std::vector<std::pair<std::string, double>> values{{"supercritical", sup}};
    values.emplace_back("local", solve_cell(s.problem(Regime::local, 0.0, s.mesh.n_local)).value);
    for (double l : {0.25, 1.0, 4.0}) values.emplace_back("lambda=" + fmt(l), solve_cell(s.nonlocal(l)).value);
    double worst = 0.0;
    for (const auto& [name, v] : values) {
        worst = std::max(worst, rel(v, sup));
        c.expect(rel(v, sup) <= 0.005, name + " value " + fmt(v) + " vs supercritical " + fmt(sup));
    }
    c.note("max rel spread=" + fmt(worst));
}

void continuity_sweep(const RunConfig& base, Checks& c) {
    const Setup s(base);
    std::vector<double> lambdas;
    for (int e = -4; e <= 6; ++e) lambdas.push_back(std::ldexp(1.0, e));
    const LambdaSweep sw = sweep(lambdas, s.M, s.density, s.kernel, s.quad, s.mesh, s.opts);
    for (const auto& e : sw.entries) {
        c.expect(e.resolved, "lambda=" + fmt(e.lambda) + " unresolved");
        c.expect(std::find(e.flags.begin(), e.flags.end(), "not_converged") == e.flags.end(),
                 "lambda=" + fmt(e.lambda) + " did not converge");
    }
    const double lo = sw.entries.front().value, hi = sw.entries.back().value;
    c.expect(rel(lo, sw.f0) <= 0.03, "lambda=1/16 value " + fmt(lo) + " vs f_0 " + fmt(sw.f0));
    c.expect(rel(hi, sw.finf) <= 0.03, "lambda=64 value " + fmt(hi) + " vs f_inf " + fmt(sw.finf));
    // relative jump between neighbours, measured against the larger of the two values
    double worst = 0.0, worst_lower = 0.0;
    for (std::size_t i = 1; i < sw.entries.size(); ++i) {
        const double a = sw.entries[i - 1].value, b = sw.entries[i].value;
        const double jump = std::abs(b - a) / std::max(std::abs(a), std::abs(b));
        worst = std::max(worst, jump);
        worst_lower = std::max(worst_lower, std::abs(b - a) / std::min(std::abs(a), std::abs(b)));
        c.expect(jump <= 0.05, "jump " + fmt(jump) + " between lambda=" + fmt(sw.entries[i - 1].lambda) + " and " +
                                   fmt(sw.entries[i].lambda));
    }
    c.note("f_0 dev=" + fmt(rel(lo, sw.f0)) + " f_inf dev=" + fmt(rel(hi, sw.finf)) + " max jump=" + fmt(worst) +
           " (vs smaller value: " + fmt(worst_lower) + ")");
}

void bounds_and_homogeneity(const RunConfig& base, Checks& c) {
    int solved = 0;
    double worst2 = 0.0, worst3 = 0.0;
    for (const char* p : {"2", "3"}) {
        const Setup s(with(base, {{"density.p", p}}));
        const double pp = s.density.p();
        Setup s2 = s;
        s2.M = s.M.scaled(2.0);
        const std::vector<std::pair<Regime, double>> cases{
            {Regime::local, 0.0}, {Regime::nonlocal, 0.25}, {Regime::nonlocal, 1.0}, {Regime::supercritical, 0.0}};
        for (const auto& [regime, lambda] : cases) {
            const int n = regime == Regime::nonlocal ? s.mesh.grid_for(lambda) : 64;
            const CellResult r1 = solve_cell(s.problem(regime, lambda, n));
            const CellResult r2 = solve_cell(s2.problem(regime, lambda, n));
            const std::string label = std::string("p=") + p + " " + to_string(regime) + " lambda=" + fmt(lambda);
            for (const CellResult* r : {&r1, &r2}) {
                ++solved;
                c.expect(r->jensen_lower <= r->value && r->value <= r->affine_upper,
                         label + ": bounds violated (" + fmt(r->jensen_lower) + " <= " + fmt(r->value) + " <= " +
                             fmt(r->affine_upper) + ")");
            }
            const double scale = std::pow(2.0, pp);
            const double dev = std::abs(r2.value - scale * r1.value) / (scale * r1.value);
            const double tol = 2.0 * s.opts.tol_grad * (pp == 2.0 ? 1.0 : scale);
            (pp == 2.0 ? worst2 : worst3) = std::max(pp == 2.0 ? worst2 : worst3, dev);
            c.expect(dev <= tol, label + ": homogeneity defect " + fmt(dev) + " > " + fmt(tol));
        }
    }
    c.note(std::to_string(solved) + " solves; homogeneity defect p=2 " + fmt(worst2) + ", p=3 " + fmt(worst3));
}

void gradient_and_stationarity(const RunConfig& base, Checks& c) {
    const auto seed = static_cast<std::uint64_t>(base.number("seed"));
    double worst2 = 0.0, worst3 = 0.0;
    for (const char* p : {"2", "3"}) {
        const Setup s(with(base, {{"density.p", p}}));
        const double limit = s.density.p() == 2.0 ? 1e-6 : 1e-4;
        for (const CellProblem& prob : {s.problem(Regime::local, 0.0, 64), s.nonlocal(1.0), s.nonlocal(0.25)}) {
            const CellEnergy energy(prob);
            const Objective obj = energy.objective();
            std::mt19937_64 rng(seed);
            std::normal_distribution<double> normal(0.0, 0.1);
            for (int point = 0; point < 10; ++point) {
                std::vector<double> v(energy.unknowns());
                for (double& x : v) x = normal(rng);
                obj.gauge(v);
                const double err = grad_check(obj, v, 1e-4, seed + static_cast<std::uint64_t>(point));
                (s.density.p() == 2.0 ? worst2 : worst3) = std::max(s.density.p() == 2.0 ? worst2 : worst3, err);
                c.expect(err <= limit, std::string("grad_check p=") + p + " " + to_string(prob.regime) + " = " + fmt(err));
            }
        }
    }
    const Setup s(base);
    double worst_res = 0.0;
    int checked = 0;
    for (const CellProblem& prob : {s.problem(Regime::local, 0.0, 64), s.problem(Regime::local, 0.0, 256),
                                    s.nonlocal(0.25), s.nonlocal(1.0), s.nonlocal(4.0)}) {
        const CellResult r = solve_cell(prob);
        if (!r.converged) continue;
        ++checked;
        const double res = euler_lagrange_residual(r, prob);
        worst_res = std::max(worst_res, res);
        c.expect(res <= 10.0 * prob.opts.tol_grad,
                 std::string("EL residual ") + to_string(prob.regime) + " lambda=" + fmt(prob.lambda) + " = " + fmt(res));
    }
    c.expect(checked == 5, "only " + std::to_string(checked) + " of 5 minimizers converged");
    c.note("grad_check p=2 " + fmt(worst2) + ", p=3 " + fmt(worst3) + "; max EL residual " + fmt(worst_res));
}

void supercritical_obstruction(const RunConfig& base, Checks& c) {
    const Setup even(base);
    const int n = base.integer("relaxed.n");
    const RelaxedResult re = relaxed_supercritical(even.M, even.density, even.kernel, even.quad, n, even.opts);
    c.expect(re.gap <= 10.0 * even.opts.tol_grad, "even kernel gap " + fmt(re.gap));
    const Setup one(with(base, {{"kernel.name", "onesided"}, {"kernel.r0", "0.25"}, {"kernel.radius", "1"}}));
    const RelaxedResult ro = relaxed_supercritical(one.M, one.density, one.kernel, one.quad, n, one.opts);
    c.expect(ro.converged, "one-sided relaxed solve did not converge");
    c.expect(ro.gap > 100.0 * one.opts.tol_grad, "one-sided gap " + fmt(ro.gap) + " not above 100 tol");
    c.expect(std::abs(ro.first_moment[0] - 15.0 / 32.0) <= 1e-6, "first moment " + fmt(ro.first_moment[0]) + " vs 15/32");
    c.note("even gap=" + fmt(re.gap) + " one-sided gap=" + fmt(ro.gap) + " first moment=" + fmt(ro.first_moment[0]));
}

void gamma_limit(const RunConfig& base, Checks& c) {
    const Setup s(base);
    const GammaOptions gopts = build_gamma_options(base);
    auto run = [&](EpsDeltaSchedule sched, double limit, const std::string& label) {
        const GammaRun r = run_schedule(sched, s.M, s.density, s.kernel, s.quad, s.opts, s.mesh, gopts);
        const GammaEntry* last = r.last_solved();
        c.expect(last != nullptr, label + ": no entry solved");
        if (!last) return;
        c.expect(last->j == sched.first_index + static_cast<int>(sched.entries.size()) - 1,
                 label + ": final entry was skipped");
        c.expect(last->converged, label + ": final entry did not converge");
        c.expect(last->rel_dev <= limit, label + ": final deviation " + fmt(last->rel_dev) + " > " + fmt(limit));
        c.note(label + " final " + fmt(last->normalized) + " vs " + fmt(r.reference) + " dev=" + fmt(last->rel_dev));
    };
    EpsDeltaSchedule crit{{}, 1.0, 3};
    for (int j = 3; j <= 7; ++j) crit.entries.emplace_back(std::ldexp(1.0, -j), std::ldexp(1.0, -j));
    run(crit, 0.05, "critical");
    EpsDeltaSchedule sub{{}, 0.0, 2};
    for (int j = 2; j <= 5; ++j) sub.entries.emplace_back(std::ldexp(1.0, -2 * j), std::ldexp(1.0, -j));
    run(sub, 0.07, "subcritical");
    EpsDeltaSchedule sup{{}, std::numeric_limits<double>::infinity(), 2};
    for (int j = 2; j <= 4; ++j) sup.entries.emplace_back(std::ldexp(1.0, -j), std::ldexp(1.0, -2 * j));
    run(sup, 0.07, "supercritical");
}

void determinism(const RunConfig& base, Checks& c) {
    namespace fs = std::filesystem;
    const fs::path root = fs::temp_directory_path() / ("nlhomog-determinism-" + std::to_string(::getpid()));
    std::ostringstream sink;
    int compared = 0;
    for (Command cmd : {Command::kappa, Command::cell, Command::fsup, Command::sweep, Command::relaxed, Command::gamma,
                        Command::elres}) {
        std::vector<std::string> digests[2];
        for (int rep = 0; rep < 2; ++rep) {
            const fs::path dir = root / (std::string(to_string(cmd)) + "-" + std::to_string(rep));
            const CommandOutcome out = run_command(cmd, base, dir.string(), sink);
            c.expect(out.exit_code == kExitOk, std::string(to_string(cmd)) + " failed: " + out.message);
            for (const auto& f : out.files) digests[rep].push_back(fs::path(f).filename().string() + ":" + file_digest(f));
        }
        compared += static_cast<int>(digests[0].size());
        c.expect(!digests[0].empty() && digests[0] == digests[1], std::string(to_string(cmd)) + ": outputs differ");
    }
    std::error_code ec;
    fs::remove_all(root, ec);
    c.note(std::to_string(compared) + " files byte-identical across repeated runs");
}

struct Criterion {
    int id;
    const char* name;
    double limit_seconds;
    std::function<void(const RunConfig&, Checks&)> run;
};

} // namespace

std::vector<CriterionResult> run_acceptance(const RunConfig& base, std::ostream& progress, const std::vector<int>& only) {
    const std::vector<Criterion> all{
        {1, "moments", 1.0, moments},
        {2, "local endpoint", 10.0, local_endpoint},
        {3, "supercritical endpoint", 1.0, supercritical_endpoint},
        {4, "constant-coefficient consistency", 30.0, constant_consistency},
        {5, "continuity sweep", 300.0, continuity_sweep},
        {6, "bounds and homogeneity", 60.0, bounds_and_homogeneity},
        {7, "gradient and stationarity", 60.0, gradient_and_stationarity},
        {8, "supercritical obstruction", 120.0, supercritical_obstruction},
        {9, "gamma-limit simulation", 600.0, gamma_limit},
        {10, "determinism", 0.0, determinism},
    };
    std::vector<CriterionResult> results;
    for (const auto& cr : all) {
        if (!only.empty() && std::find(only.begin(), only.end(), cr.id) == only.end()) continue;
        Checks checks;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            cr.run(base, checks);
        } catch (const std::exception& e) {
            checks.expect(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (cr.limit_seconds > 0.0)
            checks.expect(secs < cr.limit_seconds, "runtime " + fmt(secs) + " s exceeds " + fmt(cr.limit_seconds) + " s");
        CriterionResult r{cr.id, cr.name, checks.ok(), secs, cr.limit_seconds, checks.detail()};
        progress << format_result(r) << std::endl;
        results.push_back(std::move(r));
    }
    return results;
}

std::string format_result(const CriterionResult& r) {
    char head[160];
    if (r.limit_seconds > 0.0)
        std::snprintf(head, sizeof head, "%s %2d %-34s (%.2f s, limit %g s)", r.passed ? "PASS" : "FAIL", r.id,
                      r.name.c_str(), r.seconds, r.limit_seconds);
    else
        std::snprintf(head, sizeof head, "%s %2d %-34s (%.2f s)", r.passed ? "PASS" : "FAIL", r.id, r.name.c_str(),
                      r.seconds);
    return std::string(head) + ": " + r.detail;
}

} // namespace nlhomog
