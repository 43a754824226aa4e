#include "nlhomog/cli_io.hpp"

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "nlhomog/verify.hpp"

namespace nlhomog {

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = {
        {"seed", "12345", "seed for every random draw (assumption samples, probe points)"},
        {"output.dir", "nlhomog-out", "output directory; --out and NLHOMOG_OUT take precedence"},
        {"kernel.name", "box", "box | disk | onesided | exp | invnorm | zero | table"},
        {"kernel.dim", "1", "space dimension d (1 or 2)"},
        {"kernel.radius", "1", "support radius R of box/disk/onesided/invnorm"},
        {"kernel.r0", "1", "lower-ball radius; left extent of onesided; decay scale of exp"},
        {"kernel.c0", "1", "lower-ball constant for tabulated kernels"},
        {"kernel.table", "", "comma-separated table xi_1..xi_d,value for kernel.name = table"},
        {"kernel.T", "1", "truncation radius of the xi quadrature"},
        {"quad.base", "64", "midpoint cells per axis on [-T,T]^d"},
        {"quad.grading", "0", "geometric refinement levels toward xi = 0"},
        {"quad.tail_probe", "64", "samples per direction for the truncation tail estimate"},
        {"density.kind", "separable", "separable: f = a(x) b(y) |z|^p"},
        {"density.p", "2", "growth exponent p > 1"},
        {"density.m", "1", "target dimension m"},
        {"density.a.cells", "2", "cells per axis of a"},
        {"density.a.values", "2,1", "cell values of a, row-major"},
        {"density.a.file", "", "csv with the cell values of a (overrides density.a.values)"},
        {"density.b.cells", "1", "cells per axis of b"},
        {"density.b.values", "1", "cell values of b, row-major"},
        {"density.b.file", "", "csv with the cell values of b (overrides density.b.values)"},
        {"density.growth_mode", "strict", "strict | affine"},
        {"density.samples", "2000", "sample count of the density and kernel assumption checks"},
        {"grid.n", "256", "torus grid nodes per axis for the cell and elres commands"},
        {"cell.regime", "nonlocal", "local | nonlocal | supercritical"},
        {"cell.lambda", "1", "interaction scale of the nonlocal regime"},
        {"cell.M", "1", "macroscopic gradient, m x d row-major"},
        {"optimizer.tol_grad", "auto", "projected-gradient tolerance; auto = 1e-8 (p = 2) or 1e-6"},
        {"optimizer.max_iter", "5000", "iteration cap"},
        {"optimizer.algorithm", "accelerated_gradient", "accelerated_gradient | nonlinear_cg"},
        {"optimizer.restart_every", "0", "forced restart period; 0 disables"},
        {"optimizer.precondition", "true", "scale search directions by the constant-coefficient operator"},
        {"sweep.lambdas", "0.0625,0.125,0.25,0.5,1,2,4,8,16,32,64", "ascending interaction scales"},
        {"sweep.resolve_factor", "16", "grid nodes per unit of lambda"},
        {"sweep.n_min", "64", "smallest sweep grid"},
        {"sweep.n_max", "4096", "largest sweep grid; finer entries are flagged unresolved"},
        {"sweep.n_local", "256", "grid of the local endpoint"},
        {"sweep.n_sup", "256", "grid of the supercritical endpoint"},
        {"relaxed.n", "64", "nodes per axis of each factor of the relaxed product grid"},
        {"schedule.lambda", "1", "declared limit of eps/delta (0, positive, or inf)"},
        {"schedule.eps", "0.125,0.0625,0.03125,0.015625,0.0078125", "eps_j, strictly decreasing"},
        {"schedule.delta", "0.125,0.0625,0.03125,0.015625,0.0078125", "delta_j, strictly decreasing"},
        {"schedule.first_index", "3", "label j of the first schedule entry"},
        {"schedule.n_max", "8192", "largest domain grid; finer entries are skipped"},
        {"schedule.layer", "0", "boundary layer width in units of eps; 0 = kernel.T"},
    };
    return keys;
}

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

bool known_key(const std::string& key) {
    for (const auto& k : config_keys())
        if (k.key == key) return true;
    return false;
}

double parse_number(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (t.empty() || end != t.c_str() + t.size() || errno == ERANGE || std::isnan(v))
        throw ConfigError(key + ": '" + text + "' is not a number");
    return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

} // namespace

RunConfig::RunConfig() {
    for (const auto& k : config_keys()) values_[k.key] = k.default_value;
}

RunConfig RunConfig::parse(std::string_view text) {
    RunConfig cfg;
    std::map<std::string, int> seen;
    int lineno = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        const std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++lineno;
        const std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(std::string_view(line).substr(0, eq));
        const std::string value = trim(std::string_view(line).substr(eq + 1));
        if (!known_key(key)) throw ConfigError(key + ": unknown config key (line " + std::to_string(lineno) + ")");
        if (seen.count(key))
            throw ConfigError(key + ": repeated on line " + std::to_string(lineno) + " (first on line " +
                              std::to_string(seen[key]) + ")");
        seen[key] = lineno;
        cfg.values_[key] = value;
    }
    return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::string RunConfig::serialize() const {
    std::string out;
    for (const auto& k : config_keys()) out += k.key + " = " + values_.at(k.key) + "\n";
    return out;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    if (!known_key(key)) throw ConfigError(key + ": unknown config key");
    if (value.find('\n') != std::string::npos) throw ConfigError(key + ": value must be a single line");
    values_[key] = trim(value);
}

const std::string& RunConfig::get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError(key + ": unknown config key");
    return it->second;
}

double RunConfig::number(const std::string& key) const { return parse_number(key, get(key)); }

int RunConfig::integer(const std::string& key) const {
    const double v = number(key);
    if (v != std::floor(v) || std::abs(v) > 2e9) throw ConfigError(key + ": '" + get(key) + "' is not an integer");
    return static_cast<int>(v);
}

bool RunConfig::flag(const std::string& key) const {
    const std::string& v = get(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(key + ": '" + v + "' is not a boolean");
}

std::vector<double> RunConfig::numbers(const std::string& key) const {
    std::vector<double> out;
    const std::string& v = get(key);
    if (trim(v).empty()) return out;
    for (const auto& part : split(v, ',')) out.push_back(parse_number(key, part));
    return out;
}

// ---------------------------------------------------------------------------

namespace {

double positive(const RunConfig& cfg, const std::string& key) {
    const double v = cfg.number(key);
    if (!(v > 0.0) || std::isinf(v)) throw ConfigError(key + " must be positive and finite");
    return v;
}

int at_least(const RunConfig& cfg, const std::string& key, int lo) {
    const int v = cfg.integer(key);
    if (v < lo) throw ConfigError(key + " must be >= " + std::to_string(lo));
    return v;
}

int dimension(const RunConfig& cfg) {
    const int d = cfg.integer("kernel.dim");
    if (d != 1 && d != 2) throw ConfigError("kernel.dim must be 1 or 2");
    return d;
}

CoefficientField coefficient(const RunConfig& cfg, const std::string& name, int d) {
    const std::string pre = "density." + name;
    const int cells = at_least(cfg, pre + ".cells", 1);
    try {
        if (!cfg.get(pre + ".file").empty()) return CoefficientField::load_csv(cfg.get(pre + ".file"), d, cells);
        return CoefficientField(d, cells, cfg.numbers(pre + ".values"));
    } catch (const ConfigError& e) {
        throw ConfigError(pre + ": " + e.what());
    }
}

} // namespace

Kernel build_kernel(const RunConfig& cfg) {
    const int d = dimension(cfg);
    const std::string& name = cfg.get("kernel.name");
    if (name == "table") {
        const std::string& path = cfg.get("kernel.table");
        if (path.empty()) throw ConfigError("kernel.table: required when kernel.name = table");
        return load_tabulated_kernel(path, d, LowerBall{positive(cfg, "kernel.c0"), positive(cfg, "kernel.r0")});
    }
    try {
        return make_library_kernel(name, d, positive(cfg, "kernel.radius"), positive(cfg, "kernel.r0"));
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("kernel.name: ") + e.what());
    }
}

XiQuadrature build_quadrature(const RunConfig& cfg) {
    return build_quadrature(dimension(cfg), positive(cfg, "kernel.T"), at_least(cfg, "quad.base", 4),
                            at_least(cfg, "quad.grading", 0));
}

DensitySpec build_density(const RunConfig& cfg) {
    const int d = dimension(cfg);
    if (cfg.get("density.kind") != "separable")
        throw ConfigError("density.kind: only 'separable' densities can be configured from a file");
    const double p = cfg.number("density.p");
    if (!(p > 1.0) || std::isinf(p)) throw ConfigError("density.p must be finite and > 1");
    const int m = at_least(cfg, "density.m", 1);
    const std::string& g = cfg.get("density.growth_mode");
    if (g != "strict" && g != "affine") throw ConfigError("density.growth_mode must be strict or affine");
    return DensitySpec::separable(coefficient(cfg, "a", d), coefficient(cfg, "b", d), p, m);
}

OptimizerOptions build_optimizer(const RunConfig& cfg, double p) {
    OptimizerOptions o = OptimizerOptions::defaults_for(p);
    if (cfg.get("optimizer.tol_grad") != "auto") o.tol_grad = positive(cfg, "optimizer.tol_grad");
    o.max_iter = at_least(cfg, "optimizer.max_iter", 1);
    o.algorithm = parse_algorithm(cfg.get("optimizer.algorithm"));
    o.restart_every = at_least(cfg, "optimizer.restart_every", 0);
    o.precondition = cfg.flag("optimizer.precondition");
    return o;
}

Matrix build_matrix(const RunConfig& cfg, const std::string& key, int rows, int cols) {
    std::vector<double> v = cfg.numbers(key);
    for (double x : v)
        if (!std::isfinite(x)) throw ConfigError(key + ": entries must be finite");
    if (v.size() != static_cast<std::size_t>(rows * cols))
        throw ConfigError(key + ": expected " + std::to_string(rows * cols) + " entries (" + std::to_string(rows) + "x" +
                          std::to_string(cols) + ")");
    return Matrix(rows, cols, std::move(v));
}

MeshPolicy build_mesh_policy(const RunConfig& cfg) {
    MeshPolicy m;
    m.resolve_factor = positive(cfg, "sweep.resolve_factor");
    m.n_min = at_least(cfg, "sweep.n_min", 2);
    m.n_max = at_least(cfg, "sweep.n_max", m.n_min);
    m.n_local = at_least(cfg, "sweep.n_local", 2);
    m.n_sup = at_least(cfg, "sweep.n_sup", 2);
    return m;
}

EpsDeltaSchedule build_schedule(const RunConfig& cfg) {
    EpsDeltaSchedule s;
    const std::vector<double> eps = cfg.numbers("schedule.eps");
    const std::vector<double> delta = cfg.numbers("schedule.delta");
    if (eps.size() != delta.size()) throw ConfigError("schedule.eps and schedule.delta must have the same length");
    for (std::size_t j = 0; j < eps.size(); ++j) s.entries.emplace_back(eps[j], delta[j]);
    s.lambda = cfg.number("schedule.lambda");
    s.first_index = cfg.integer("schedule.first_index");
    try {
        s.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("schedule: ") + e.what());
    }
    return s;
}

GammaOptions build_gamma_options(const RunConfig& cfg) {
    GammaOptions g;
    g.n_max = at_least(cfg, "schedule.n_max", 2);
    g.layer_factor = cfg.number("schedule.layer");
    if (g.layer_factor < 0.0 || std::isinf(g.layer_factor)) throw ConfigError("schedule.layer must be >= 0 and finite");
    return g;
}

// ---------------------------------------------------------------------------

const char* to_string(Command c) {
    switch (c) {
    case Command::kappa: return "kappa";
    case Command::cell: return "cell";
    case Command::sweep: return "sweep";
    case Command::fsup: return "fsup";
    case Command::relaxed: return "relaxed";
    case Command::gamma: return "gamma";
    case Command::elres: return "elres";
    case Command::verify: return "verify";
    }
    return "?";
}

Command parse_command(const std::string& name) {
    for (Command c : {Command::kappa, Command::cell, Command::sweep, Command::fsup, Command::relaxed, Command::gamma,
                      Command::elres, Command::verify})
        if (name == to_string(c)) return c;
    throw ConfigError("unknown command '" + name + "'");
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return hex64(fnv1a64(ss.str()));
}

namespace {

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + path + "': " + std::strerror(errno));
    return out;
}

void close_out(std::ofstream& out, const std::string& path) {
    out.close();
    if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

std::string join_flags(const std::vector<std::string>& flags) {
    std::string s;
    for (const auto& f : flags) s += (s.empty() ? "" : "|") + f;
    return s;
}

/// Writes a csv with a header and rows of already formatted cells.
void write_rows(const std::string& path, const std::vector<std::string>& header,
                const std::vector<std::vector<std::string>>& rows) {
    std::ofstream out = open_out(path);
    auto emit = [&out](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
        out << '\n';
    };
    emit(header);
    for (const auto& r : rows) emit(r);
    close_out(out, path);
}

} // namespace

void write_sweep_csv(const std::string& path, const LambdaSweep& sweep) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& e : sweep.entries)
        rows.push_back({format_double(e.lambda), format_double(e.value), format_double(e.jensen_lower),
                        format_double(e.affine_upper), std::to_string(e.grid_n), format_double(e.grad_norm),
                        std::to_string(e.iterations), join_flags(e.flags)});
    write_rows(path, {"lambda", "value", "jensen_lower", "affine_upper", "grid_n", "grad_norm", "iterations", "flags"},
               rows);
}

void write_endpoints_csv(const std::string& path, const LambdaSweep& sweep) {
    write_rows(path, {"endpoint", "value"},
               {{"local", format_double(sweep.f0)}, {"supercritical", format_double(sweep.finf)}});
}

void write_gamma_csv(const std::string& path, const GammaRun& run) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& e : run.entries)
        rows.push_back({std::to_string(e.j), format_double(e.eps), format_double(e.delta), format_double(e.ratio()),
                        std::to_string(e.grid_n), format_double(e.min_value), format_double(e.normalized),
                        format_double(run.reference), format_double(e.rel_dev), join_flags(e.flags)});
    write_rows(path,
               {"j", "eps", "delta", "ratio", "grid_n", "min_value", "normalized", "reference", "rel_dev", "flags"},
               rows);
}

void write_manifest(const std::string& path, Command cmd, const RunConfig& cfg, const std::vector<std::string>& files) {
    std::ofstream out = open_out(path);
    out << "tool = nlhomog\n";
    out << "version = " << kVersion << "\n";
    out << "command = " << to_string(cmd) << "\n";
    out << cfg.serialize();
    std::string described;
    try {
        described = build_density(cfg).describe();
    } catch (const ConfigError&) {
        described = "invalid";
    }
    std::string combined = described;
    for (const auto& f : files) {
        const std::string name = std::filesystem::path(f).filename().string();
        const std::string dig = file_digest(f);
        out << "digest." << name << " = " << dig << "\n";
        combined += "|" + name + ":" + dig;
    }
    out << "density.hash = " << hex64(fnv1a64(described)) << "\n";
    out << "run.hash = " << hex64(fnv1a64(combined)) << "\n";
    close_out(out, path);
}

// ---------------------------------------------------------------------------

namespace {

struct Setup {
    Kernel kernel;
    XiQuadrature quad;
    DensitySpec density;
    OptimizerOptions opts;
    Matrix M;
};

Setup make_setup(const RunConfig& cfg) {
    Kernel kernel = build_kernel(cfg);
    XiQuadrature quad = build_quadrature(cfg);
    DensitySpec density = build_density(cfg);
    if (density.growth_mode() == GrowthMode::affine || cfg.get("density.growth_mode") == "affine") {
        if (kernel.integrable_class() == Integrability::non_integrable)
            throw ConfigError("density.growth_mode: affine growth requires an integrable kernel");
    }
    OptimizerOptions opts = build_optimizer(cfg, density.p());
    Matrix M = build_matrix(cfg, "cell.M", density.target_dim(), density.dim());
    return {std::move(kernel), std::move(quad), std::move(density), opts, std::move(M)};
}

CellProblem cell_problem(const RunConfig& cfg, const Setup& s) {
    const Regime regime = parse_regime(cfg.get("cell.regime"));
    const double lambda = regime == Regime::nonlocal ? positive(cfg, "cell.lambda") : 0.0;
    return CellProblem{regime, lambda, s.M, s.density, s.kernel, s.quad,
                       TorusGrid(s.density.dim(), at_least(cfg, "grid.n", 2)), s.opts};
}

std::string b2s(bool b) { return b ? "true" : "false"; }

void execute(Command cmd, const RunConfig& cfg, const std::string& dir, std::ostream& log, CommandOutcome& res) {
    auto path = [&dir](const std::string& name) { return (std::filesystem::path(dir) / name).string(); };
    auto add = [&](const std::string& name) {
        res.files.push_back(path(name));
        return path(name);
    };

    if (cmd == Command::verify) {
        // the acceptance suite builds its own setups from the base config
        const auto results = run_acceptance(cfg, log);
        std::vector<std::vector<std::string>> rows;
        bool ok = true;
        for (const auto& r : results) {
            ok = ok && r.passed;
            rows.push_back({std::to_string(r.id), r.name, r.passed ? "pass" : "fail", format_double(r.limit_seconds),
                            "\"" + r.detail + "\""});
        }
        write_rows(add("verify.csv"), {"id", "criterion", "result", "limit_seconds", "detail"}, rows);
        res.exit_code = ok ? kExitOk : kExitVerification;
        res.message = ok ? "all acceptance criteria pass" : "acceptance criteria failed";
        return;
    }

    const Setup s = make_setup(cfg);
    const auto seed = static_cast<std::uint64_t>(cfg.number("seed"));
    switch (cmd) {
    case Command::kappa: {
        const Moments mo = p_moment(s.kernel, s.density.p(), s.quad);
        const AssumptionReport ar = check_assumptions(s.kernel, s.density.p(), s.quad);
        const Truncation tr = truncate(s.kernel, s.quad.T, s.density.p(), at_least(cfg, "quad.tail_probe", 1));
        write_rows(add("kappa.csv"),
                   {"p", "kappa_full", "kappa_dir", "mass", "mass_refined", "integrability", "rho1_ok", "rho1_min",
                    "symmetry_defect", "tail_estimate", "quad"},
                   {{format_double(s.density.p()), format_double(mo.kappa_full), format_double(mo.kappa_dir),
                     format_double(ar.mass), format_double(ar.mass_refined), to_string(ar.classified()),
                     b2s(ar.rho1_ok), format_double(ar.rho1_min), format_double(ar.symmetry_defect),
                     format_double(tr.tail_estimate), s.quad.descriptor()}});
        log << "kappa_full = " << format_double(mo.kappa_full) << "\nkappa_dir = " << format_double(mo.kappa_dir)
            << "\n";
        if (!ar.rho1_ok) log << "warning: kernel fails the lower bound on B_r0\n";
        if (ar.mass_diverges) log << "warning: kernel mass diverges under refinement (non-integrable)\n";
        break;
    }
    case Command::cell:
    case Command::elres: {
        const CellProblem prob = cell_problem(cfg, s);
        const DensityReport dr = validate_density(s.density, s.kernel, at_least(cfg, "density.samples", 1), seed);
        const CellResult r = solve_cell(prob);
        std::vector<std::string> flags = r.flags;
        if (!dr.ok()) flags.push_back("density_check_failed");
        if (cmd == Command::cell) {
            write_rows(add("cell.csv"),
                       {"regime", "lambda", "value", "jensen_lower", "affine_upper", "growth_upper", "grid_n",
                        "iterations", "grad_norm", "converged", "flags"},
                       {{to_string(prob.regime), format_double(prob.lambda), format_double(r.value),
                         format_double(r.jensen_lower), format_double(r.affine_upper), format_double(r.growth_upper),
                         std::to_string(prob.grid.n()), std::to_string(r.iterations), format_double(r.grad_norm),
                         b2s(r.converged), join_flags(flags)}});
            if (prob.regime != Regime::supercritical) write_field_csv(add("field.csv"), AffineField{s.M, r.minimizer});
            log << "value = " << format_double(r.value) << "\n";
        } else {
            const double res_norm = euler_lagrange_residual(r, prob);
            write_rows(add("elres.csv"),
                       {"regime", "lambda", "value", "residual", "grad_norm", "tol_grad", "converged", "flags"},
                       {{to_string(prob.regime), format_double(prob.lambda), format_double(r.value),
                         format_double(res_norm), format_double(r.grad_norm), format_double(prob.opts.tol_grad),
                         b2s(r.converged), join_flags(flags)}});
            log << "residual = " << format_double(res_norm) << "\n";
        }
        break;
    }
    case Command::sweep: {
        const LambdaSweep sw =
            sweep(cfg.numbers("sweep.lambdas"), s.M, s.density, s.kernel, s.quad, build_mesh_policy(cfg), s.opts);
        write_sweep_csv(add("sweep.csv"), sw);
        write_endpoints_csv(add("endpoints.csv"), sw);
        log << "f_0 = " << format_double(sw.f0) << "\nf_inf = " << format_double(sw.finf) << "\n";
        break;
    }
    case Command::fsup: {
        const int n = at_least(cfg, "sweep.n_sup", 2);
        const double v = eval_supercritical(s.M, s.density, s.kernel, s.quad, TorusGrid(s.density.dim(), n));
        write_rows(add("fsup.csv"), {"value", "grid_n", "quad"}, {{format_double(v), std::to_string(n), s.quad.descriptor()}});
        log << "f_inf = " << format_double(v) << "\n";
        break;
    }
    case Command::relaxed: {
        const RelaxedResult r =
            relaxed_supercritical(s.M, s.density, s.kernel, s.quad, at_least(cfg, "relaxed.n", 2), s.opts);
        write_rows(add("relaxed.csv"),
                   {"F0", "inf_value", "gap", "first_moment_1", "first_moment_2", "mass", "grid_n", "iterations",
                    "grad_norm", "converged", "flags"},
                   {{format_double(r.F0), format_double(r.inf_value), format_double(r.gap),
                     format_double(r.first_moment[0]), format_double(r.first_moment[1]), format_double(r.mass),
                     std::to_string(r.n), std::to_string(r.iterations), format_double(r.grad_norm), b2s(r.converged),
                     join_flags(r.flags)}});
        log << "gap = " << format_double(r.gap) << "\nfirst_moment = " << format_double(r.first_moment[0]) << "\n";
        break;
    }
    case Command::gamma: {
        const GammaRun run = run_schedule(build_schedule(cfg), s.M, s.density, s.kernel, s.quad, s.opts,
                                          build_mesh_policy(cfg), build_gamma_options(cfg));
        write_gamma_csv(add("gamma.csv"), run);
        log << "reference (" << run.reference_source << ") = " << format_double(run.reference) << "\n";
        if (const GammaEntry* last = run.last_solved())
            log << "final normalized = " << format_double(last->normalized) << ", rel_dev = " << format_double(last->rel_dev)
                << "\n";
        break;
    }
    case Command::verify: break;
    }
}

} // namespace

CommandOutcome run_command(Command cmd, const RunConfig& cfg, const std::string& out_dir, std::ostream& log) {
    CommandOutcome res;
    try {
        std::filesystem::create_directories(out_dir);
        execute(cmd, cfg, out_dir, log, res);
        std::vector<std::string> data = res.files;
        const std::string manifest = (std::filesystem::path(out_dir) / "manifest.txt").string();
        write_manifest(manifest, cmd, cfg, data);
        res.files.push_back(manifest);
    } catch (const ConfigError& e) {
        res.exit_code = kExitConfig;
        res.message = std::string("config error: ") + e.what();
    } catch (const OptimizerAbort& e) {
        res.exit_code = kExitNumerical;
        res.message = std::string("numerical failure: ") + e.what();
        std::ofstream diag((std::filesystem::path(out_dir) / "diagnostics.txt").string());
        diag << "error = " << e.what() << "\niteration = " << e.iteration << "\nstep = " << format_double(e.step)
             << "\nlast_iterate =";
        for (double v : e.last_iterate) diag << ' ' << format_double(v);
        diag << '\n';
    } catch (const NumericalError& e) {
        res.exit_code = kExitNumerical;
        res.message = std::string("numerical failure: ") + e.what();
        std::ofstream diag((std::filesystem::path(out_dir) / "diagnostics.txt").string());
        diag << "error = " << e.what() << '\n';
    } catch (const std::filesystem::filesystem_error& e) {
        res.exit_code = kExitConfig;
        res.message = std::string("output error: ") + e.what();
    } catch (const std::runtime_error& e) {
        res.exit_code = kExitConfig;
        res.message = std::string("output error: ") + e.what();
    }
    return res;
}

} // namespace nlhomog
