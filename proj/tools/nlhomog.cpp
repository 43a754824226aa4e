#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "nlhomog/cli_io.hpp"

int main(int argc, char** argv) {
    using namespace nlhomog;
    CLI::App app{"Nonlocal homogenization cell solver"};
    std::string command, config_path, out_dir;
    long long seed = 0;
    app.add_option("command", command, "kappa | cell | sweep | fsup | relaxed | gamma | elres | verify")->required();
    app.add_option("--config", config_path, "key = value configuration file");
    app.add_option("--out", out_dir, "output directory (overrides NLHOMOG_OUT and output.dir)");
    auto* seed_opt = app.add_option("--seed", seed, "overrides the seed key");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        const Command cmd = parse_command(command);
        RunConfig cfg = config_path.empty() ? RunConfig() : RunConfig::load(config_path);
        if (*seed_opt) cfg.set("seed", std::to_string(seed));
        if (out_dir.empty()) {
            const char* env = std::getenv("NLHOMOG_OUT");
            out_dir = env && *env ? env : cfg.get("output.dir");
        }
        const CommandOutcome out = run_command(cmd, cfg, out_dir, std::cout);
        if (!out.message.empty()) (out.exit_code == kExitOk ? std::cout : std::cerr) << out.message << '\n';
        return out.exit_code;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    }
}
