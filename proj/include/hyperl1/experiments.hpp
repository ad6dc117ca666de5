#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "analysis.hpp"
#include "contours.hpp"
#include "io.hpp"
#include "layout.hpp"
#include "svg.hpp"
#include "trainer.hpp"

namespace hyperl1 {

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

struct GeneralizeGrid {
    std::size_t n0_min = 2, n0_max = 8, n0_step = 1;
    std::size_t n1_min = 4, n1_max = 24, n1_step = 2;

    std::vector<std::size_t> n0_values() const {
        std::vector<std::size_t> v;
        for (std::size_t n = n0_min; n <= n0_max; n += n0_step) v.push_back(n);
        return v;
    }
    std::vector<std::size_t> n1_values() const {
        std::vector<std::size_t> v;
        for (std::size_t n = n1_min; n <= n1_max; n += n1_step) v.push_back(n);
        return v;
    }
};

struct RunConfig {
    std::string experiment = "l1";
    std::string scale = "desk";
    MlpSpec spec{4, 12};
    TrainConfig train;
    std::size_t beta_steps = 30;
    std::size_t sweep_seeds = 5;
    std::size_t eval_samples = 100000;
    std::size_t gen_eval_samples = 10000;
    std::uint64_t eval_seed = 9001;
    GeneralizeGrid generalize;
    BaselineConfig baseline;
    std::size_t calibration_per_class = 16;
    double contour_low = 0.07;   // generalization heatmap contour levels
    double contour_high = 0.15;
    std::size_t phase_seed = 1;

    // Runtime knobs, excluded from the identity hash.
    std::filesystem::path out_dir = "out";
    std::size_t jobs = 1;
    OverwritePolicy overwrite = OverwritePolicy::Refuse;
};

inline RunConfig preset_config(const std::string& scale) {
    RunConfig cfg;
    if (scale == "desk") {
        cfg.scale = "desk";
        cfg.spec = MlpSpec(4, 12);
        cfg.train.steps = 2000;
        cfg.train.batch_size = 64;
        cfg.train.checkpoint_every = 400;
        cfg.sweep_seeds = 5;
        cfg.generalize = GeneralizeGrid{2, 8, 1, 4, 24, 2};
        cfg.baseline = BaselineConfig{8000, 256, 1e-3, 0};
    } else if (scale == "paper") {
        cfg.scale = "paper";
        cfg.spec = MlpSpec(16, 48);
        cfg.train.steps = 20000;
        cfg.train.batch_size = 64;
        cfg.train.checkpoint_every = 2000;
        cfg.sweep_seeds = 33;
        cfg.generalize = GeneralizeGrid{2, 32, 2, 4, 96, 4};
        cfg.baseline = BaselineConfig{50000, 256, 1e-3, 0};
    } else {
        throw ConfigError("unknown scale preset '" + scale + "' (desk|paper)");
    }
    return cfg;
}

inline nlohmann::json run_config_to_json(const RunConfig& cfg) {
    nlohmann::json j;
    j["experiment"] = cfg.experiment;
    j["scale"] = cfg.scale;
    j["spec"] = cfg.spec.layer_sizes;
    j["train"] = {{"steps", cfg.train.steps},       {"batch_size", cfg.train.batch_size},
                  {"lr", cfg.train.lr},             {"beta_min", cfg.train.beta_min},
                  {"beta_max", cfg.train.beta_max}, {"checkpoint_every", cfg.train.checkpoint_every},
                  {"seed", cfg.train.seed}};
    j["beta_steps"] = cfg.beta_steps;
    j["sweep_seeds"] = cfg.sweep_seeds;
    j["eval_samples"] = cfg.eval_samples;
    j["gen_eval_samples"] = cfg.gen_eval_samples;
    j["eval_seed"] = cfg.eval_seed;
    j["generalize"] = {{"n0_min", cfg.generalize.n0_min}, {"n0_max", cfg.generalize.n0_max},
                       {"n0_step", cfg.generalize.n0_step}, {"n1_min", cfg.generalize.n1_min},
                       {"n1_max", cfg.generalize.n1_max}, {"n1_step", cfg.generalize.n1_step}};
    j["baseline"] = {{"steps", cfg.baseline.steps},
                     {"batch_size", cfg.baseline.batch_size},
                     {"lr", cfg.baseline.lr},
                     {"seed", cfg.baseline.seed}};
    j["calibration_per_class"] = cfg.calibration_per_class;
    j["contours"] = {cfg.contour_low, cfg.contour_high};
    j["phase_seed"] = cfg.phase_seed;
    return j;
}

inline void apply_json_to_config(const nlohmann::json& j, RunConfig& cfg) {
    if (j.contains("scale")) cfg = preset_config(j.at("scale").get<std::string>());
    if (j.contains("experiment")) cfg.experiment = j.at("experiment").get<std::string>();
    if (j.contains("spec")) cfg.spec = MlpSpec(j.at("spec").get<std::vector<std::size_t>>());
    if (j.contains("train")) {
        const auto& t = j.at("train");
        if (t.contains("steps")) cfg.train.steps = t.at("steps").get<std::size_t>();
        if (t.contains("batch_size")) cfg.train.batch_size = t.at("batch_size").get<std::size_t>();
        if (t.contains("lr")) cfg.train.lr = t.at("lr").get<double>();
        if (t.contains("beta_min")) cfg.train.beta_min = t.at("beta_min").get<double>();
        if (t.contains("beta_max")) cfg.train.beta_max = t.at("beta_max").get<double>();
        if (t.contains("checkpoint_every"))
            cfg.train.checkpoint_every = t.at("checkpoint_every").get<std::size_t>();
        if (t.contains("seed")) cfg.train.seed = t.at("seed").get<std::uint64_t>();
    }
    if (j.contains("beta_steps")) cfg.beta_steps = j.at("beta_steps").get<std::size_t>();
    if (j.contains("sweep_seeds")) cfg.sweep_seeds = j.at("sweep_seeds").get<std::size_t>();
    if (j.contains("eval_samples")) cfg.eval_samples = j.at("eval_samples").get<std::size_t>();
    if (j.contains("gen_eval_samples"))
        cfg.gen_eval_samples = j.at("gen_eval_samples").get<std::size_t>();
    if (j.contains("eval_seed")) cfg.eval_seed = j.at("eval_seed").get<std::uint64_t>();
    if (j.contains("generalize")) {
        const auto& g = j.at("generalize");
        auto get = [&](const char* k, std::size_t& v) {
            if (g.contains(k)) v = g.at(k).get<std::size_t>();
        };
        get("n0_min", cfg.generalize.n0_min);
        get("n0_max", cfg.generalize.n0_max);
        get("n0_step", cfg.generalize.n0_step);
        get("n1_min", cfg.generalize.n1_min);
        get("n1_max", cfg.generalize.n1_max);
        get("n1_step", cfg.generalize.n1_step);
    }
    if (j.contains("baseline")) {
        const auto& b = j.at("baseline");
        if (b.contains("steps")) cfg.baseline.steps = b.at("steps").get<std::size_t>();
        if (b.contains("batch_size"))
            cfg.baseline.batch_size = b.at("batch_size").get<std::size_t>();
        if (b.contains("lr")) cfg.baseline.lr = b.at("lr").get<double>();
        if (b.contains("seed")) cfg.baseline.seed = b.at("seed").get<std::uint64_t>();
    }
    if (j.contains("calibration_per_class"))
        cfg.calibration_per_class = j.at("calibration_per_class").get<std::size_t>();
    if (j.contains("contours")) {
        cfg.contour_low = j.at("contours").at(0).get<double>();
        cfg.contour_high = j.at("contours").at(1).get<double>();
    }
    if (j.contains("phase_seed")) cfg.phase_seed = j.at("phase_seed").get<std::size_t>();
}

// Identity of a run for resume checks and artifact stamps: everything that
// shapes the numbers, nothing about where they land on disk.
inline std::string run_config_hash(const RunConfig& cfg) {
    return config_hash(run_config_to_json(cfg));
}

// ---------------------------------------------------------------------------
// Small helpers shared by the commands
// ---------------------------------------------------------------------------

namespace detail {

template <class F>
inline void parallel_for(std::size_t n, std::size_t jobs, F&& body) {
    jobs = std::min(jobs == 0 ? 1 : jobs, n);
    if (jobs <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> threads;
    threads.reserve(jobs);
    for (std::size_t j = 0; j < jobs; ++j) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (error) std::rethrow_exception(error);
}

inline std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

inline std::ofstream open_artifact(const std::filesystem::path& path, const RunConfig& cfg) {
    std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    const auto target = resolve_output(path, cfg.overwrite);
    std::ofstream out(target, std::ios::trunc);
    if (!out) throw IoError("cannot open " + target.string() + " for writing");
    return out;
}

inline std::string artifact_stamp(const RunConfig& cfg) {
    return "version=" + version_string() + " config_hash=" + run_config_hash(cfg);
}

}  // namespace detail

inline TaskBatch eval_batch_for(const RunConfig& cfg, std::size_t n0, std::size_t samples) {
    RngStream rng(cfg.eval_seed, "eval-batch", n0);
    return sample_batch(n0, samples, rng);
}

inline Thresholds thresholds_for(const RunConfig& cfg, CalibrationRanges* ranges = nullptr) {
    ConstructorConfig ctor;
    ctor.n0 = cfg.spec.inputs();
    ctor.n1 = cfg.spec.layer_sizes[1];
    RngStream rng(cfg.eval_seed, "calibration");
    return calibrate_from_constructors(ctor, cfg.calibration_per_class, rng, ranges);
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainOutputs {
    std::vector<std::filesystem::path> checkpoints;
    std::vector<StepMetrics> metrics;
};

inline std::filesystem::path checkpoint_path(const RunConfig& cfg, std::size_t step) {
    char name[64];
    std::snprintf(name, sizeof(name), "ckpt_%06zu.bin", step);
    return cfg.out_dir / "checkpoints" / name;
}

inline std::vector<std::filesystem::path> list_checkpoints(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> found;
    if (!std::filesystem::exists(dir)) return found;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        if (name.rfind("ckpt_", 0) == 0 && entry.path().extension() == ".bin")
            found.push_back(entry.path());
    }
    std::sort(found.begin(), found.end());
    return found;
}

inline Checkpoint make_checkpoint(const RunConfig& cfg, const ParetoTrainer& trainer) {
    Checkpoint ck;
    ck.version = version_string();
    ck.cfg_hash = run_config_hash(cfg);
    ck.config = run_config_to_json(cfg);
    ck.step = trainer.step_count();
    ck.target_spec = trainer.target_spec();
    ck.seed = cfg.train.seed;
    ck.hhw = trainer.hhw();
    ck.adam = const_cast<ParetoTrainer&>(trainer).optimizer();
    return ck;
}

inline void restore_trainer(ParetoTrainer& trainer, const Checkpoint& ck) {
    if (ck.hhw.size() != trainer.hhw().size())
        throw ConfigError("checkpoint parameter layout does not match trainer");
    for (std::size_t k = 0; k < ck.hhw.size(); ++k) {
        if (ck.hhw[k].value.size() != trainer.hhw()[k].value.size())
            throw ConfigError("checkpoint array size mismatch for " + ck.hhw[k].name);
        trainer.hhw()[k] = ck.hhw[k];
    }
    trainer.optimizer() = ck.adam;
    trainer.set_step_count(ck.step);
}

inline TrainOutputs cmd_train(const RunConfig& cfg, bool resume = false,
                              std::ostream* log = nullptr) {
    ParetoTrainer trainer(cfg.spec, cfg.train);
    std::filesystem::create_directories(cfg.out_dir / "checkpoints");

    if (resume) {
        auto existing = list_checkpoints(cfg.out_dir / "checkpoints");
        if (existing.empty()) throw ConfigError("resume requested but no checkpoints found");
        Checkpoint ck = load_checkpoint(existing.back());
        if (ck.cfg_hash != run_config_hash(cfg))
            throw ConfigError("resume refused: config hash " + ck.cfg_hash +
                              " in checkpoint does not match current config " +
                              run_config_hash(cfg));
        restore_trainer(trainer, ck);
    }

    TrainOutputs out;
    std::ofstream metrics_csv;
    const auto log_path = cfg.out_dir / "train_log.csv";
    const bool fresh_log = !resume || !std::filesystem::exists(log_path);
    metrics_csv.open(log_path, fresh_log ? std::ios::trunc : std::ios::app);
    if (fresh_log) {
        metrics_csv << "# " << detail::artifact_stamp(cfg) << "\n";
        metrics_csv << "step,beta,loss,kl,objective\n";
    }

    while (trainer.step_count() < cfg.train.steps) {
        StepMetrics m = trainer.train_step();
        out.metrics.push_back(m);
        metrics_csv << m.step << "," << detail::num(m.beta) << "," << detail::num(m.loss) << ","
                    << detail::num(m.kl) << "," << detail::num(m.objective) << "\n";
        const bool cadence_hit = trainer.step_count() % cfg.train.checkpoint_every == 0;
        if (cadence_hit || trainer.step_count() == cfg.train.steps) {
            const auto path =
                resolve_output(checkpoint_path(cfg, trainer.step_count()), cfg.overwrite);
            save_checkpoint(path, make_checkpoint(cfg, trainer));
            out.checkpoints.push_back(path);
            if (log)
                (*log) << "checkpoint " << path.string() << " (step " << trainer.step_count()
                       << ", loss " << out.metrics.back().loss << ")\n";
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// sweep / ablate
// ---------------------------------------------------------------------------

struct SweepOutputs {
    std::vector<FrontierRow> rows;
    std::filesystem::path csv_path;
    std::filesystem::path scatter_path;
};

inline const char* mode_name(GenMode m) {
    return m == GenMode::WithEncoder ? "with_encoder" : "decoder_only";
}

inline SweepOutputs cmd_sweep(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                              const std::vector<GenMode>& modes) {
    Checkpoint ck = load_checkpoint(checkpoint);
    HyperNetLayout layout(ck.target_spec);
    const auto betas = log_beta_grid(cfg.train.beta_min, cfg.train.beta_max, cfg.beta_steps);
    std::vector<std::uint64_t> seeds(cfg.sweep_seeds);
    for (std::size_t s = 0; s < seeds.size(); ++s) seeds[s] = s;
    TaskBatch eval = eval_batch_for(cfg, ck.target_spec.inputs(), cfg.eval_samples);
    Thresholds th = thresholds_for(cfg);

    SweepOutputs out;
    std::vector<std::vector<FrontierRow>> per_task(betas.size() * modes.size());
    detail::parallel_for(per_task.size(), cfg.jobs, [&](std::size_t task) {
        const double beta = betas[task % betas.size()];
        const GenMode mode = modes[task / betas.size()];
        per_task[task] =
            evaluate_frontier(ck.hhw, layout, ck.target_spec, {beta}, seeds, mode, eval);
    });
    for (auto& rows : per_task)
        out.rows.insert(out.rows.end(), rows.begin(), rows.end());

    out.csv_path = cfg.out_dir / "sweep.csv";
    auto csv = detail::open_artifact(out.csv_path, cfg);
    csv << "# " << detail::artifact_stamp(cfg) << "\n";
    csv << "experiment,step,beta,seed,n0,n1,mode,loss,kl,alpha1,alpha2,alpha3,label\n";
    for (const auto& r : out.rows) {
        csv << cfg.experiment << "," << ck.step << "," << detail::num(r.beta) << "," << r.seed
            << "," << ck.target_spec.inputs() << "," << ck.target_spec.layer_sizes[1] << ","
            << mode_name(r.mode) << "," << detail::num(r.loss) << "," << detail::num(r.kl) << ","
            << detail::num(r.params.alpha1) << "," << detail::num(r.params.alpha2) << ","
            << detail::num(r.params.alpha3) << "," << to_string(classify(r.params, th)) << "\n";
    }
    csv.close();

    nlohmann::json scatter;
    scatter["version"] = version_string();
    scatter["config_hash"] = run_config_hash(cfg);
    scatter["step"] = ck.step;
    for (const auto& r : out.rows) {
        scatter["points"].push_back({{"beta", r.beta},
                                     {"seed", r.seed},
                                     {"mode", mode_name(r.mode)},
                                     {"alpha1", r.params.alpha1},
                                     {"alpha2", r.params.alpha2},
                                     {"alpha3", r.params.alpha3},
                                     {"loss", r.loss},
                                     {"kl", r.kl}});
    }
    out.scatter_path = cfg.out_dir / "order_params.json";
    auto js = detail::open_artifact(out.scatter_path, cfg);
    js << scatter.dump(2) << "\n";
    return out;
}

// ---------------------------------------------------------------------------
// generalize
// ---------------------------------------------------------------------------

struct GeneralizeCell {
    std::size_t n0 = 0, n1 = 0;
    double loss = 0, kl = 0;
    bool structurally_valid = false;
};

struct GeneralizeOutputs {
    std::vector<GeneralizeCell> cells;  // n0-major
    bool encoder_independent = false;
    double max_kl_seen = 0;
    std::filesystem::path csv_path;
    std::filesystem::path contours_path;
};

inline GeneralizeOutputs cmd_generalize(const RunConfig& cfg,
                                        const std::filesystem::path& checkpoint,
                                        std::ostream* log = nullptr) {
    Checkpoint ck = load_checkpoint(checkpoint);
    HyperNetLayout layout(ck.target_spec);
    GeneralizeOutputs out;

    // Encoder-independence flag: max KL over the beta grid at the trained size.
    {
        const auto betas = log_beta_grid(cfg.train.beta_min, cfg.train.beta_max, cfg.beta_steps);
        for (double beta : betas) {
            HyperWeights hw = hyperweights_value(ck.hhw, layout, beta);
            RngStream gen(cfg.eval_seed, "gen-indep");
            Generated g = generate_weights(hw, ck.target_spec, gen, GenMode::WithEncoder);
            out.max_kl_seen = std::max(out.max_kl_seen, g.kl_total.item());
        }
        out.encoder_independent = out.max_kl_seen < 1e-3;
        if (!out.encoder_independent && log)
            (*log) << "warning: checkpoint is not encoder-independent (max KL "
                   << out.max_kl_seen << "); decoder-only generalization may be degraded\n";
    }

    const auto n0s = cfg.generalize.n0_values();
    const auto n1s = cfg.generalize.n1_values();
    out.cells.resize(n0s.size() * n1s.size());
    detail::parallel_for(out.cells.size(), cfg.jobs, [&](std::size_t idx) {
        const std::size_t n0 = n0s[idx / n1s.size()];
        const std::size_t n1 = n1s[idx % n1s.size()];
        GeneralizeCell cell;
        cell.n0 = n0;
        cell.n1 = n1;
        const MlpSpec spec(n0, n1);
        // One beta at the accuracy end of the range; decoder-only so no
        // learned variables are required for unseen positions.
        HyperWeights hw = hyperweights_value(ck.hhw, layout, cfg.train.beta_min);
        RngStream gen(cfg.eval_seed, "gen-cell", n0 * 1000 + n1);
        Generated g = generate_weights(hw, spec, gen, GenMode::DecoderOnly);
        cell.kl = g.kl_total.item();
        try {
            g.weights.check_shapes(spec);
            cell.structurally_valid = g.weights.finite();
        } catch (const ShapeError&) {
            cell.structurally_valid = false;
        }
        TaskBatch batch = eval_batch_for(cfg, n0, cfg.gen_eval_samples);
        cell.loss = evaluate_mse(g.weights, batch);
        out.cells[idx] = cell;
    });

    out.csv_path = cfg.out_dir / "generalize.csv";
    auto csv = detail::open_artifact(out.csv_path, cfg);
    csv << "# " << detail::artifact_stamp(cfg) << "\n";
    csv << "# contour_low=" << detail::num(cfg.contour_low)
        << " contour_high=" << detail::num(cfg.contour_high)
        << " encoder_independent=" << (out.encoder_independent ? 1 : 0)
        << " max_kl=" << detail::num(out.max_kl_seen) << "\n";
    csv << "n0,n1,loss,kl,structurally_valid\n";
    for (const auto& c : out.cells)
        csv << c.n0 << "," << c.n1 << "," << detail::num(c.loss) << "," << detail::num(c.kl) << ","
            << (c.structurally_valid ? 1 : 0) << "\n";
    csv.close();

    // Contour polylines on the (n0, n1) loss field.
    std::vector<double> xs(n0s.begin(), n0s.end());
    std::vector<double> ys(n1s.begin(), n1s.end());
    std::vector<double> field(xs.size() * ys.size());
    for (std::size_t ix = 0; ix < xs.size(); ++ix)
        for (std::size_t iy = 0; iy < ys.size(); ++iy)
            field[iy * xs.size() + ix] = out.cells[ix * n1s.size() + iy].loss;
    nlohmann::json contours;
    contours["version"] = version_string();
    contours["config_hash"] = run_config_hash(cfg);
    contours["levels"] = {cfg.contour_low, cfg.contour_high};
    contours["encoder_independent"] = out.encoder_independent;
    contours["trained_spec"] = ck.target_spec.layer_sizes;
    for (double level : {cfg.contour_low, cfg.contour_high}) {
        auto segs = extract_contour_segments(xs, ys, field, level);
        nlohmann::json jsegs = nlohmann::json::array();
        for (const auto& s : segs)
            jsegs.push_back({{s[0][0], s[0][1]}, {s[1][0], s[1][1]}});
        contours["segments"][detail::num(level)] = jsegs;
    }
    out.contours_path = cfg.out_dir / "generalize_contours.json";
    auto js = detail::open_artifact(out.contours_path, cfg);
    js << contours.dump(2) << "\n";
    return out;
}

// ---------------------------------------------------------------------------
// phases
// ---------------------------------------------------------------------------

struct PhasesOutputs {
    PhaseGrid grid;
    std::filesystem::path csv_path;
    std::filesystem::path svg_path;
};

inline PhasesOutputs cmd_phases(const RunConfig& cfg,
                                const std::vector<std::filesystem::path>& checkpoint_paths) {
    if (checkpoint_paths.size() < 2)
        throw ConfigError("phases needs at least 2 checkpoints, got " +
                          std::to_string(checkpoint_paths.size()));
    std::vector<Checkpoint> cks;
    for (const auto& p : checkpoint_paths) cks.push_back(load_checkpoint(p));
    std::vector<std::size_t> steps;
    for (const auto& ck : cks) steps.push_back(ck.step);

    const auto betas = log_beta_grid(cfg.train.beta_min, cfg.train.beta_max, cfg.beta_steps);
    Thresholds th = thresholds_for(cfg);
    TaskBatch eval = eval_batch_for(cfg, cks.front().target_spec.inputs(), cfg.gen_eval_samples);

    auto generator = [&](std::size_t si, double beta) {
        const Checkpoint& ck = cks[si];
        HyperNetLayout layout(ck.target_spec);
        HyperWeights hw = hyperweights_value(ck.hhw, layout, beta);
        GeneratedPair pair;
        RngStream g1(cfg.phase_seed * 2, "phase-gen");
        RngStream g2(cfg.phase_seed * 2 + 1, "phase-gen");
        Generated a = generate_weights(hw, ck.target_spec, g1, GenMode::WithEncoder);
        Generated b = generate_weights(hw, ck.target_spec, g2, GenMode::WithEncoder);
        pair.first = a.weights;
        pair.second = b.weights;
        pair.kl = a.kl_total.item();
        pair.loss = evaluate_mse(a.weights, eval);
        return pair;
    };

    PhasesOutputs out;
    out.grid = phase_grid(steps, betas, th, generator);

    out.csv_path = cfg.out_dir / "phases.csv";
    auto csv = detail::open_artifact(out.csv_path, cfg);
    csv << "# " << detail::artifact_stamp(cfg) << "\n";
    csv << "step,beta,seed,alpha1,alpha2,alpha3,label,loss,kl\n";
    for (const auto& c : out.grid.cells)
        csv << c.step << "," << detail::num(c.beta) << "," << cfg.phase_seed << ","
            << detail::num(c.params.alpha1) << "," << detail::num(c.params.alpha2) << ","
            << detail::num(c.params.alpha3) << "," << to_string(c.label) << ","
            << detail::num(c.loss) << "," << detail::num(c.kl) << "\n";
    csv.close();

    std::filesystem::create_directories(cfg.out_dir);
    out.svg_path = resolve_output(cfg.out_dir / "phases.svg", cfg.overwrite);
    write_svg(out.svg_path, render_phase_grid_svg(out.grid, detail::artifact_stamp(cfg)));
    return out;
}

// ---------------------------------------------------------------------------
// draw
// ---------------------------------------------------------------------------

struct DrawOutputs {
    std::filesystem::path svg_path;
    std::filesystem::path sidecar_path;
    LayoutResult layout;
    NeuronGraph graph;
};

inline DrawOutputs draw_weights(const RunConfig& cfg, const MlpWeights& w,
                                const std::string& stem, std::uint64_t seed) {
    DrawOutputs out;
    out.graph = NeuronGraph::from_weights(w, /*normalize=*/true);
    LayoutConfig lc;
    out.layout = run_layout(out.graph, lc, seed);
    RenderConfig rc;
    rc.comment = detail::artifact_stamp(cfg) + " edge_floor_frac=" +
                 detail::num(rc.edge_floor_frac);
    std::filesystem::create_directories(cfg.out_dir);
    out.svg_path = resolve_output(cfg.out_dir / (stem + ".svg"), cfg.overwrite);
    write_svg(out.svg_path, render_svg(out.layout.positions2d, out.graph, rc));

    nlohmann::json side;
    side["version"] = version_string();
    side["config_hash"] = run_config_hash(cfg);
    side["seed"] = seed;
    side["layout"] = {{"iterations", lc.iterations}, {"step", lc.step},
                      {"decay_strength", lc.decay_strength}, {"epsilon", lc.epsilon},
                      {"view_size", lc.view_size}};
    side["edge_floor_frac"] = rc.edge_floor_frac;
    side["restarts"] = out.layout.restarts;
    side["positions"] = nlohmann::json::array();
    for (std::size_t p = 0; p < out.graph.nodes.size(); ++p)
        side["positions"].push_back({{"level", out.graph.nodes[p].level},
                                     {"index", out.graph.nodes[p].index},
                                     {"x", out.layout.positions2d[p * 2]},
                                     {"y", out.layout.positions2d[p * 2 + 1]}});
    out.sidecar_path = cfg.out_dir / (stem + ".layout.json");
    auto js = detail::open_artifact(out.sidecar_path, cfg);
    js << side.dump(2) << "\n";
    return out;
}

inline DrawOutputs cmd_draw(const RunConfig& cfg, const std::filesystem::path& weights_path) {
    MlpWeights w = load_weights_json(weights_path);
    return draw_weights(cfg, w, weights_path.stem().string(), cfg.train.seed);
}

// ---------------------------------------------------------------------------
// baseline
// ---------------------------------------------------------------------------

struct BaselineOutputs {
    double baseline_loss = 0;
    double best_hyper_loss = 0;
    OrderParams baseline_params;
    std::filesystem::path summary_path;
    std::filesystem::path baseline_svg;
    std::filesystem::path hyper_svg;
};

inline BaselineOutputs cmd_baseline(const RunConfig& cfg,
                                    const std::filesystem::path& checkpoint,
                                    std::ostream* log = nullptr) {
    Checkpoint ck = load_checkpoint(checkpoint);
    if (ck.target_spec.layer_sizes != cfg.spec.layer_sizes)
        throw ConfigError("baseline spec does not match checkpoint target spec");
    BaselineOutputs out;

    MlpWeights baseline = train_baseline_adam(cfg.spec, cfg.baseline);
    TaskBatch eval = eval_batch_for(cfg, cfg.spec.inputs(), cfg.eval_samples);
    out.baseline_loss = evaluate_mse(baseline, eval);
    out.baseline_params = order_params(baseline);

    // Paired hypernetwork counterpart: best loss across the sweep grid.
    HyperNetLayout layout(ck.target_spec);
    const auto betas = log_beta_grid(cfg.train.beta_min, cfg.train.beta_max, cfg.beta_steps);
    std::vector<std::uint64_t> seeds(cfg.sweep_seeds);
    for (std::size_t s = 0; s < seeds.size(); ++s) seeds[s] = s;
    auto rows = evaluate_frontier(ck.hhw, layout, ck.target_spec, betas, seeds,
                                  GenMode::WithEncoder, eval);
    out.best_hyper_loss = std::numeric_limits<double>::infinity();
    double best_beta = betas.front();
    std::uint64_t best_seed = 0;
    for (const auto& r : rows)
        if (r.loss < out.best_hyper_loss) {
            out.best_hyper_loss = r.loss;
            best_beta = r.beta;
            best_seed = r.seed;
        }
    HyperWeights hw = hyperweights_value(ck.hhw, layout, best_beta);
    RngStream gen(best_seed, "frontier-gen");
    Generated g = generate_weights(hw, ck.target_spec, gen, GenMode::WithEncoder);

    auto bdraw = draw_weights(cfg, baseline, "baseline_adam", cfg.train.seed);
    auto hdraw = draw_weights(cfg, g.weights, "hypernet_counterpart", cfg.train.seed);
    out.baseline_svg = bdraw.svg_path;
    out.hyper_svg = hdraw.svg_path;

    nlohmann::json j;
    j["version"] = version_string();
    j["config_hash"] = run_config_hash(cfg);
    j["baseline"] = {{"loss", out.baseline_loss},
                     {"alpha1", out.baseline_params.alpha1},
                     {"alpha2", out.baseline_params.alpha2},
                     {"steps", cfg.baseline.steps},
                     {"lr", cfg.baseline.lr},
                     {"batch_size", cfg.baseline.batch_size}};
    j["hypernet"] = {{"best_loss", out.best_hyper_loss},
                     {"beta", best_beta},
                     {"seed", best_seed},
                     {"checkpoint_step", ck.step}};
    out.summary_path = cfg.out_dir / "baseline.json";
    auto js = detail::open_artifact(out.summary_path, cfg);
    js << j.dump(2) << "\n";
    if (log)
        (*log) << "baseline loss " << out.baseline_loss << " vs best hypernet loss "
               << out.best_hyper_loss << "\n";
    return out;
}

// ---------------------------------------------------------------------------
// calibrate
// ---------------------------------------------------------------------------

struct CalibrateOutputs {
    Thresholds thresholds;
    CalibrationRanges ranges;
    std::filesystem::path path;
};

inline CalibrateOutputs cmd_calibrate(const RunConfig& cfg) {
    CalibrateOutputs out;
    out.thresholds = thresholds_for(cfg, &out.ranges);
    nlohmann::json j;
    j["version"] = version_string();
    j["config_hash"] = run_config_hash(cfg);
    j["theta1"] = out.thresholds.theta1;
    j["theta2"] = out.thresholds.theta2;
    j["ranges"] = {{"convexity_alpha2_max", out.ranges.convexity_a2_max},
                   {"strong_alpha2_min", out.ranges.strong_a2_min},
                   {"pudding_alpha1_max", out.ranges.pudding_a1_max},
                   {"double_sided_alpha1_min", out.ranges.double_sided_a1_min}};
    j["per_class_samples"] = cfg.calibration_per_class;
    out.path = cfg.out_dir / "thresholds.json";
    auto js = detail::open_artifact(out.path, cfg);
    js << j.dump(2) << "\n";
    return out;
}

}  // namespace hyperl1
