#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "nlhomog/cli_io.hpp"

using namespace nlhomog;
using doctest::Approx;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> lines(const std::string& path) {
    std::ifstream in(path);
    std::vector<std::string> out;
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

int columns(const std::string& line) { return 1 + static_cast<int>(std::count(line.begin(), line.end(), ',')); }

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("nlhomog-test-" + name);
    fs::remove_all(p);
    return p;
}

std::string field(const std::vector<std::string>& rows, const std::string& column) {
    std::stringstream head(rows.at(0)), data(rows.at(1));
    for (std::string h, d; std::getline(head, h, ',') && std::getline(data, d, ',');)
        if (h == column) return d;
    return {};
}

} // namespace

TEST_CASE("config round trip") {
    RunConfig cfg = RunConfig::parse("# comment\n\ncell.lambda = 0.5\n  density.p=3  \nkernel.name = disk\n");
    CHECK(cfg.number("cell.lambda") == 0.5);
    CHECK(cfg.get("kernel.name") == "disk");
    CHECK(cfg.integer("quad.base") == 64);
    CHECK(RunConfig::parse(cfg.serialize()) == cfg);
    CHECK(RunConfig::parse(RunConfig().serialize()) == RunConfig());
    CHECK(cfg.numbers("sweep.lambdas").size() == 11);
    CHECK(cfg.flag("optimizer.precondition"));
}

TEST_CASE("the shipped config is the default setup") {
    CHECK(RunConfig::load(NLHOMOG_DEFAULT_CONFIG) == RunConfig());
}

TEST_CASE("config errors name the key") {
    auto message = [](const std::string& text) {
        try {
            RunConfig::parse(text);
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    CHECK(message("cell.lamda = 1\n").find("cell.lamda") != std::string::npos);
    CHECK(message("seed = 1\nseed = 2\n").find("seed") != std::string::npos);
    CHECK(message("just text\n").find("line 1") != std::string::npos);
    RunConfig cfg;
    cfg.set("density.p", "abc");
    try {
        build_density(cfg);
        FAIL("expected a ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("density.p") != std::string::npos);
    }
    cfg = RunConfig();
    cfg.set("kernel.T", "0.5");
    cfg.set("kernel.name", "box");
    std::ostringstream log;
    const CommandOutcome out = run_command(Command::cell, cfg, scratch("badT").string(), log);
    CHECK(out.exit_code == kExitConfig);
    INFO(out.message);
    CHECK(out.message.find("T") != std::string::npos);
    fs::remove_all(scratch("badT"));
}

TEST_CASE("builders reproduce the default setup") {
    const RunConfig cfg;
    const DensitySpec d = build_density(cfg);
    CHECK(d.p() == 2.0);
    CHECK(d.separable_form()->a.mean() == 1.5);
    const Kernel k = build_kernel(cfg);
    CHECK(k({0.99, 0.0}) == 1.0);
    CHECK(k({1.01, 0.0}) == 0.0);
    CHECK(build_optimizer(cfg, 2.0).tol_grad == 1e-8);
    CHECK(build_optimizer(cfg, 3.0).tol_grad == 1e-6);
    const EpsDeltaSchedule s = build_schedule(cfg);
    CHECK(s.entries.size() == 5);
    CHECK(s.first_index == 3);
    CHECK(parse_command("gamma") == Command::gamma);
    CHECK_THROWS_AS(parse_command("plot"), ConfigError);
}

TEST_CASE("number formatting and digests") {
    for (double v : {0.1, 2.0 / 3.0, 1e-300, -5.25, 12345678.0})
        CHECK(std::stod(format_double(v)) == v);
    CHECK(format_double(std::numeric_limits<double>::infinity()) == "inf");
    CHECK(format_double(std::nan("")) == "nan");
    // published FNV-1a 64 test vectors
    CHECK(hex64(fnv1a64("")) == "cbf29ce484222325");
    CHECK(hex64(fnv1a64("a")) == "af63dc4c8601ec8c");
    CHECK(hex64(fnv1a64("foobar")) == "85944171f73967e8");
}

TEST_CASE("sweep writers") {
    const fs::path dir = scratch("writers");
    fs::create_directories(dir);
    LambdaSweep empty;
    write_sweep_csv((dir / "empty.csv").string(), empty);
    const auto e = lines((dir / "empty.csv").string());
    REQUIRE(e.size() == 1);
    CHECK(e[0] == "lambda,value,jensen_lower,affine_upper,grid_n,grad_norm,iterations,flags");

    LambdaSweep one;
    SweepEntry entry;
    entry.lambda = 0.5;
    entry.value = 0.9;
    entry.jensen_lower = 0.6;
    entry.affine_upper = 1.0;
    entry.grid_n = 64;
    entry.grad_norm = 1e-9;
    entry.iterations = 12;
    one.entries.push_back(entry);
    write_sweep_csv((dir / "one.csv").string(), one);
    const auto o = lines((dir / "one.csv").string());
    REQUIRE(o.size() == 2);
    CHECK(columns(o[1]) == 8);
    CHECK(field(o, "iterations") == "12");
    fs::remove_all(dir);
}

TEST_CASE("kappa and cell commands") {
    const fs::path dir = scratch("commands");
    std::ostringstream log;
    const CommandOutcome k = run_command(Command::kappa, RunConfig(), (dir / "kappa").string(), log);
    CHECK(k.exit_code == kExitOk);
    CHECK(log.str().find("kappa_full = 0.6665") != std::string::npos);
    CHECK(fs::path(k.files.back()).filename() == "manifest.txt");

    RunConfig flat;
    flat.set("cell.M", "0");
    const CommandOutcome c = run_command(Command::cell, flat, (dir / "cell").string(), log);
    REQUIRE(c.exit_code == kExitOk);
    const auto rows = lines((dir / "cell" / "cell.csv").string());
    CHECK(std::stod(field(rows, "value")) == 0.0);

    const auto manifest = lines((dir / "cell" / "manifest.txt").string());
    CHECK(std::find(manifest.begin(), manifest.end(), "cell.M = 0") != manifest.end());
    CHECK(std::count_if(manifest.begin(), manifest.end(), [](const std::string& l) { return l.rfind("digest.", 0) == 0; }) >= 2);
    fs::remove_all(dir);
}

TEST_CASE("numerical failures produce a diagnostics file") {
    const fs::path dir = scratch("diag");
    RunConfig cfg;
    cfg.set("kernel.name", "invnorm");
    cfg.set("quad.grading", "0");
    cfg.set("cell.regime", "local");
    cfg.set("grid.n", "16");
    std::ostringstream log;
    const CommandOutcome out = run_command(Command::cell, cfg, dir.string(), log);
    if (out.exit_code == kExitNumerical) CHECK(fs::exists(dir / "diagnostics.txt"));
    else CHECK(out.exit_code == kExitOk);
    fs::remove_all(dir);
}

TEST_CASE("repeated runs write identical files") {
    const fs::path dir = scratch("determinism");
    RunConfig cfg;
    cfg.set("sweep.lambdas", "0.25,1,4");
    std::ostringstream log;
    const CommandOutcome a = run_command(Command::sweep, cfg, (dir / "a").string(), log);
    const CommandOutcome b = run_command(Command::sweep, cfg, (dir / "b").string(), log);
    REQUIRE(a.files.size() == b.files.size());
    for (std::size_t i = 0; i < a.files.size(); ++i) CHECK(file_digest(a.files[i]) == file_digest(b.files[i]));
    fs::remove_all(dir);
}

TEST_CASE("output errors are reported with the path") {
    const fs::path file = scratch("blocker");
    { std::ofstream(file.string()) << "x"; }
    std::ostringstream log;
    const CommandOutcome out = run_command(Command::kappa, RunConfig(), (file / "sub").string(), log);
    CHECK(out.exit_code != kExitOk);
    CHECK(out.message.find("blocker") != std::string::npos);
    fs::remove(file);
}
