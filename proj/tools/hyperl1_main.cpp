// Command-line driver for the L1 hypernetwork experiments: training, beta
// sweeps, phase diagrams, encoder ablation, dimension generalization, the
// Adam baseline, calibration, and network drawings.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "hyperl1/experiments.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitIo = 4;

struct CliOptions {
    std::string config_path;
    std::string scale = "desk";
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out_dir = "out";
    double beta_min = 0;
    double beta_max = 0;
    std::size_t beta_steps = 0;
    std::size_t jobs = 1;
    std::string overwrite = "refuse";
    // per-command
    bool resume = false;
    std::vector<std::string> checkpoints;
    std::string weights_file;
};

hyperl1::RunConfig build_config(const CliOptions& opt) {
    hyperl1::RunConfig cfg = hyperl1::preset_config(opt.scale);
    if (!opt.config_path.empty()) {
        std::ifstream in(opt.config_path);
        if (!in) throw hyperl1::IoError("cannot open config " + opt.config_path);
        try {
            nlohmann::json j = nlohmann::json::parse(in);
            hyperl1::apply_json_to_config(j, cfg);
        } catch (const nlohmann::json::parse_error& e) {
            throw hyperl1::ConfigError("config " + opt.config_path + ": parse error at byte " +
                                       std::to_string(e.byte) + ": " + e.what());
        }
    }
    if (opt.seed_set) cfg.train.seed = opt.seed;
    if (opt.beta_min > 0) cfg.train.beta_min = opt.beta_min;
    if (opt.beta_max > 0) cfg.train.beta_max = opt.beta_max;
    if (opt.beta_steps > 0) cfg.beta_steps = opt.beta_steps;
    cfg.out_dir = opt.out_dir;
    cfg.jobs = opt.jobs;
    cfg.overwrite = hyperl1::overwrite_policy_from_string(opt.overwrite);
    return cfg;
}

std::vector<std::filesystem::path> resolve_checkpoints(const hyperl1::RunConfig& cfg,
                                                       const CliOptions& opt,
                                                       bool want_all) {
    std::vector<std::filesystem::path> paths;
    for (const auto& c : opt.checkpoints) paths.emplace_back(c);
    if (paths.empty()) {
        paths = hyperl1::list_checkpoints(cfg.out_dir / "checkpoints");
        if (paths.empty())
            throw hyperl1::ConfigError("no checkpoint given and none found under " +
                                       (cfg.out_dir / "checkpoints").string());
        if (!want_all) paths = {paths.back()};
    }
    return paths;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hyperl1: hypernetwork-generated interpretable L1 networks"};
    app.require_subcommand(1);
    app.fallthrough();

    CliOptions opt;
    app.add_option("--config", opt.config_path, "JSON config file (see README for the schema)");
    app.add_option("--scale", opt.scale, "preset: desk or paper")->check(CLI::IsMember({"desk", "paper"}));
    app.add_option("--seed", opt.seed, "training seed")->each([&](const std::string&) { opt.seed_set = true; });
    app.add_option("--out", opt.out_dir, "output directory");
    app.add_option("--beta-min", opt.beta_min, "lower end of the beta range");
    app.add_option("--beta-max", opt.beta_max, "upper end of the beta range");
    app.add_option("--beta-steps", opt.beta_steps, "beta grid resolution");
    app.add_option("--jobs", opt.jobs, "worker threads for evaluation fan-out");
    app.add_option("--overwrite", opt.overwrite, "output collision policy: refuse|version|force")
        ->check(CLI::IsMember({"refuse", "version", "force"}));

    auto* cmd_train = app.add_subcommand("train", "train the hyperhypernetwork, writing checkpoints");
    cmd_train->add_flag("--resume", opt.resume, "continue from the latest checkpoint");

    auto* cmd_sweep = app.add_subcommand("sweep", "beta sweep with and without the encoder");
    cmd_sweep->add_option("--checkpoint", opt.checkpoints, "checkpoint file (default: latest)");

    auto* cmd_ablate = app.add_subcommand("ablate", "beta sweep with the encoder ignored");
    cmd_ablate->add_option("--checkpoint", opt.checkpoints, "checkpoint file (default: latest)");

    auto* cmd_phases = app.add_subcommand("phases", "algorithm phase grid over (step, beta)");
    cmd_phases->add_option("--checkpoint", opt.checkpoints,
                           "checkpoint files (default: all in out dir)");

    auto* cmd_generalize =
        app.add_subcommand("generalize", "loss heatmap over (n0, n1) with contours");
    cmd_generalize->add_option("--checkpoint", opt.checkpoints, "checkpoint file (default: latest)");

    auto* cmd_baseline = app.add_subcommand("baseline", "direct Adam training plus drawings");
    cmd_baseline->add_option("--checkpoint", opt.checkpoints, "checkpoint file (default: latest)");

    auto* cmd_draw = app.add_subcommand("draw", "force-directed drawing of a weights file");
    cmd_draw->add_option("weights", opt.weights_file, "weights JSON file")->required();

    auto* cmd_calibrate =
        app.add_subcommand("calibrate", "classifier thresholds from constructor oracles");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        hyperl1::RunConfig cfg = build_config(opt);
        if (cmd_train->parsed()) {
            auto out = hyperl1::cmd_train(cfg, opt.resume, &std::cout);
            std::cout << "trained to step "
                      << (out.metrics.empty() ? 0 : out.metrics.back().step + 1) << ", "
                      << out.checkpoints.size() << " checkpoints under "
                      << (cfg.out_dir / "checkpoints").string() << "\n";
        } else if (cmd_sweep->parsed() || cmd_ablate->parsed()) {
            const auto ck = resolve_checkpoints(cfg, opt, false).front();
            std::vector<hyperl1::GenMode> modes =
                cmd_ablate->parsed()
                    ? std::vector<hyperl1::GenMode>{hyperl1::GenMode::DecoderOnly}
                    : std::vector<hyperl1::GenMode>{hyperl1::GenMode::WithEncoder,
                                                    hyperl1::GenMode::DecoderOnly};
            auto out = hyperl1::cmd_sweep(cfg, ck, modes);
            std::cout << out.rows.size() << " rows -> " << out.csv_path.string() << ", "
                      << out.scatter_path.string() << "\n";
        } else if (cmd_phases->parsed()) {
            const auto cks = resolve_checkpoints(cfg, opt, true);
            auto out = hyperl1::cmd_phases(cfg, cks);
            std::cout << out.grid.cells.size() << " cells -> " << out.csv_path.string() << ", "
                      << out.svg_path.string() << "\n";
        } else if (cmd_generalize->parsed()) {
            const auto ck = resolve_checkpoints(cfg, opt, false).front();
            auto out = hyperl1::cmd_generalize(cfg, ck, &std::cout);
            std::cout << out.cells.size() << " cells -> " << out.csv_path.string() << ", "
                      << out.contours_path.string() << "\n";
        } else if (cmd_baseline->parsed()) {
            const auto ck = resolve_checkpoints(cfg, opt, false).front();
            auto out = hyperl1::cmd_baseline(cfg, ck, &std::cout);
            std::cout << "summary -> " << out.summary_path.string() << "\n";
        } else if (cmd_draw->parsed()) {
            auto out = hyperl1::cmd_draw(cfg, opt.weights_file);
            std::cout << "drawing -> " << out.svg_path.string() << " (+ sidecar "
                      << out.sidecar_path.string() << ")\n";
        } else if (cmd_calibrate->parsed()) {
            auto out = hyperl1::cmd_calibrate(cfg);
            std::cout << "theta1=" << out.thresholds.theta1 << " theta2=" << out.thresholds.theta2
                      << " -> " << out.path.string() << "\n";
        }
        return kExitOk;
    } catch (const hyperl1::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const hyperl1::NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        // config, shape, domain, usage
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
}
