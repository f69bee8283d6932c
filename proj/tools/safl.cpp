// safl: run SecureAFL experiments from config files.
//
//   safl run <config> [--seeds a,b,c] [--out dir] [--jobs k] [--force]
//   safl compare <dir...> --metric ter|asr|rmse
//   safl probe <dir>
//
// Exit codes: 0 success, 1 run failure, 2 config or usage error.

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "safl/runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Asynchronous federated learning simulator with the SecureAFL defense"};
    app.require_subcommand(1);

    std::string config_path;
    std::string seeds_text;
    std::string out_root;
    std::size_t jobs = 1;
    bool force = false;
    auto* run = app.add_subcommand("run", "Run one config over a list of seeds");
    run->add_option("config", config_path, "Config file")->required();
    run->add_option("--seeds", seeds_text, "Comma-separated seeds (default: the config's seed)");
    run->add_option("--out", out_root, std::string("Output root (default: $") + safl::kOutputRootEnv + " or ./runs)");
    run->add_option("--jobs", jobs, "Concurrent runs")->check(CLI::PositiveNumber);
    run->add_flag("--force", force, "Overwrite an existing output directory");

    std::vector<std::string> dirs;
    std::string metric = "ter";
    auto* compare = app.add_subcommand("compare", "Tabulate final metrics: defenses by attacks");
    compare->add_option("dirs", dirs, "Sweep output directories")->required();
    compare->add_option("--metric", metric, "ter, asr or rmse")->check(CLI::IsMember({"ter", "asr", "rmse"}));

    std::string probe_dir;
    auto* probe = app.add_subcommand("probe", "Write theory.json for a sweep or run directory");
    probe->add_option("dir", probe_dir, "Sweep or run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? safl::kExitOk : safl::kExitConfigError;
    }

    try {
        if (*run) {
            const safl::ExperimentConfig cfg = safl::parse_config(config_path);
            const auto seeds = seeds_text.empty() ? std::vector<std::uint64_t>{cfg.seed} : safl::parse_seed_list(seeds_text);
            if (out_root.empty()) {
                const char* env = std::getenv(safl::kOutputRootEnv);
                out_root = env != nullptr && *env != '\0' ? env : "runs";
            }
            auto manifest = safl::RunManifest::make(cfg, seeds, out_root);
            const int code = safl::run_sweep(cfg, manifest, {jobs, force}, std::cerr);
            std::cout << manifest.output_dir.string() << '\n';
            return code;
        }
        if (*compare) {
            std::vector<std::filesystem::path> paths(dirs.begin(), dirs.end());
            std::cout << safl::compare_table(paths, metric);
            return safl::kExitOk;
        }
        std::cout << safl::probe_directory(probe_dir);
        return safl::kExitOk;
    } catch (const safl::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return safl::kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return safl::kExitRunFailure;
    }
}
