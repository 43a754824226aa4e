#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "nlhomog/cell_solver.hpp"
#include "nlhomog/gamma_sim.hpp"

namespace nlhomog {

struct ConfigKey {
    std::string key;
    std::string default_value;
    std::string help;
};

/// Every recognized key in serialization order.
const std::vector<ConfigKey>& config_keys();

/**
 * Flat key=value configuration with dotted sections. Lines starting with '#' and
 * blank lines are ignored; unknown or repeated keys are rejected. Every key has a
 * default, so a config holds the full effective parameter set.
 */
class RunConfig {
public:
    RunConfig();

    static RunConfig parse(std::string_view text);
    static RunConfig load(const std::string& path);

    /// All keys, one "key = value" line each, in registry order.
    std::string serialize() const;

    void set(const std::string& key, const std::string& value);
    const std::string& get(const std::string& key) const;

    double number(const std::string& key) const;
    int integer(const std::string& key) const;
    bool flag(const std::string& key) const;
    std::vector<double> numbers(const std::string& key) const;

    bool operator==(const RunConfig& o) const { return values_ == o.values_; }

private:
    std::map<std::string, std::string> values_;
};

// Builders from a config; each throws ConfigError naming the offending key.
Kernel build_kernel(const RunConfig& cfg);
XiQuadrature build_quadrature(const RunConfig& cfg);
DensitySpec build_density(const RunConfig& cfg);
OptimizerOptions build_optimizer(const RunConfig& cfg, double p);
Matrix build_matrix(const RunConfig& cfg, const std::string& key, int rows, int cols);
MeshPolicy build_mesh_policy(const RunConfig& cfg);
EpsDeltaSchedule build_schedule(const RunConfig& cfg);
GammaOptions build_gamma_options(const RunConfig& cfg);

enum class Command { kappa, cell, sweep, fsup, relaxed, gamma, elres, verify };

const char* to_string(Command c);
Command parse_command(const std::string& name);

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitNumerical = 2;
inline constexpr int kExitVerification = 3;

struct CommandOutcome {
    int exit_code = kExitOk;
    std::vector<std::string> files; ///< data files written, manifest last
    std::string message;
};

/// Runs one command, writing its data files and manifest into out_dir (created if needed).
/// Config and numerical failures are reported through the exit code, never thrown.
CommandOutcome run_command(Command cmd, const RunConfig& cfg, const std::string& out_dir, std::ostream& log);

/// Shortest text that parses back to the same double ("inf", "nan" for non-finite values).
std::string format_double(double v);

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);
/// FNV-1a 64 of the file contents; I/O errors propagate as std::runtime_error.
std::string file_digest(const std::string& path);

// Writers. Each emits a header row even when there are no data rows.
void write_sweep_csv(const std::string& path, const LambdaSweep& sweep);
void write_endpoints_csv(const std::string& path, const LambdaSweep& sweep);
void write_gamma_csv(const std::string& path, const GammaRun& run);
/// key=value lines: tool, version, command, effective config, density hash, digests of `files`.
void write_manifest(const std::string& path, Command cmd, const RunConfig& cfg, const std::vector<std::string>& files);

} // namespace nlhomog
