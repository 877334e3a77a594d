#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stitchkit/config.hpp"
#include "stitchkit/errors.hpp"
#include "stitchkit/pipeline.hpp"

namespace {

using namespace stitchkit;

struct CommonFlags {
    std::string config_path;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> preset;
};

void add_common(CLI::App* cmd, CommonFlags& common) {
    cmd->add_option("--config", common.config_path,
                    "Config file, one key = value per line");
    cmd->add_option("--set", common.sets, "Override a single config key=value")
        ->type_name("KEY=VALUE");
    cmd->add_option("--seed", common.seed, "Master seed");
    cmd->add_option("--preset", common.preset, "Hyperparameter preset: paper or desk");
}

// Precedence, lowest to highest: STITCHKIT_SEED, --preset, config file,
// --set overrides, --seed.
ExperimentConfig resolve_config(const CommonFlags& common) {
    ExperimentConfig cfg;
    if (const char* env_seed = std::getenv("STITCHKIT_SEED")) {
        try {
            cfg.set("seed", env_seed);
        } catch (const ConfigError& e) {
            throw ConfigError(std::string("STITCHKIT_SEED: ") + e.what());
        }
    }
    if (common.preset) cfg.apply_preset(*common.preset);
    if (!common.config_path.empty()) load_config_file(cfg, common.config_path);
    for (const auto& kv : common.sets)
        apply_config_line(cfg, kv, "--set", 0);
    if (common.seed) cfg.seed = *common.seed;
    return cfg;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << text;
    if (!out) throw IoError("write failed: " + path);
}

void write_sidecar(const ExperimentConfig& cfg, const std::string& output_path) {
    write_text(output_path + ".resolved.config", cfg.resolved());
}

PolicyEvaluator env_evaluator(const PointMassEnv& env, int episodes,
                              std::uint64_t seed) {
    const PointMassEnv env_copy = env;
    return [env_copy, episodes, seed](const Policy& p) {
        return evaluate_policy(env_copy, p, episodes, 1, seed).mean;
    };
}

int cmd_gen_data(const CommonFlags& common, const std::string& out_path) {
    ExperimentConfig cfg = resolve_config(common);
    write_sidecar(cfg, out_path);
    PointMassEnv env;
    env.horizon = cfg.env_horizon;
    const ExpertPolicy expert;
    Rng rng(cfg.seed);
    const Dataset ds = generate_mixture_dataset(
        env, expert,
        {cfg.mixture_expert_fraction_pct, cfg.mixture_noise_std,
         cfg.mixture_trajectories},
        rng);
    save_dataset(ds, out_path);
    std::cout << "wrote " << ds.trajectories.size() << " trajectories ("
              << ds.transition_count() << " transitions) to " << out_path << "\n";
    return 0;
}

int cmd_train_models(const CommonFlags& common, const std::string& data_path,
                     const std::string& prefix,
                     const std::vector<std::string>& skip) {
    ExperimentConfig cfg = resolve_config(common);
    for (const auto& s : skip)
        if (s != "dynamics" && s != "inverse" && s != "reward" && s != "value")
            throw ConfigError("--skip: unknown model '" + s +
                              "' (dynamics, inverse, reward, value)");
    auto skipped = [&](const std::string& name) {
        for (const auto& s : skip)
            if (s == name) return true;
        return false;
    };
    write_sidecar(cfg, prefix);
    const Dataset ds = load_dataset(data_path);
    if (!skipped("dynamics")) {
        DynamicsConfig dc = cfg.stitch.dynamics;
        dc.seed = Rng(cfg.seed).derive(1).next_u64();
        save_dynamics(train_dynamics(ds, dc), prefix + ".dynamics");
        std::cout << "wrote " << prefix << ".dynamics.*\n";
    }
    if (!skipped("inverse")) {
        CvaeConfig cc = cfg.stitch.cvae;
        cc.seed = Rng(cfg.seed).derive(2).next_u64();
        save_cvae(train_cvae(ds, derive_action_bound(ds), cc),
                  prefix + ".inverse.json");
        std::cout << "wrote " << prefix << ".inverse.json\n";
    }
    if (!skipped("reward")) {
        WganConfig wc = cfg.stitch.wgan;
        wc.seed = Rng(cfg.seed).derive(3).next_u64();
        save_wgan(train_wgan(ds, wc), prefix + ".reward.json");
        std::cout << "wrote " << prefix << ".reward.json\n";
    }
    if (!skipped("value")) {
        ValueConfig vc = cfg.stitch.value;
        vc.seed = Rng(cfg.seed).derive(4).next_u64();
        save_value(train_value(ds, vc), prefix + ".value.json");
        std::cout << "wrote " << prefix << ".value.json\n";
    }
    return 0;
}

int cmd_stitch(const CommonFlags& common, const std::string& data_path,
               const std::string& models_prefix, const std::string& out_path,
               std::string report_path) {
    ExperimentConfig cfg = resolve_config(common);
    write_sidecar(cfg, out_path);
    const Dataset ds = load_dataset(data_path);
    StitchConfig sc = cfg.stitch;
    sc.seed = cfg.seed;
    if (report_path.empty()) report_path = out_path + ".report.json";

    Dataset augmented;
    StitchReport report;
    if (models_prefix.empty()) {
        auto result = run_ts(ds, sc);
        augmented = std::move(result.first);
        report = std::move(result.second);
    } else {
        // Pre-trained checkpoints; the value function is still refit per
        // iteration on the evolving dataset.
        const DynamicsEnsemble dynamics = load_dynamics(models_prefix + ".dynamics");
        const InverseCVAE cvae = load_cvae(models_prefix + ".inverse.json");
        const RewardGAN wgan = load_wgan(models_prefix + ".reward.json");
        if (sc.action_bound.empty()) sc.action_bound = derive_action_bound(ds);
        const EnsembleReachability reach(dynamics);
        const CvaeActionModel action(cvae, sc.latent_mode);
        const WganRewardModel reward(wgan);
        ModelSet models;
        models.reachability = &reach;
        models.action = &action;
        models.reward = &reward;
        auto result = run_ts_with_models(ds, sc, models, /*refit_value=*/true);
        augmented = std::move(result.first);
        report = std::move(result.second);
    }
    save_dataset(augmented, out_path);
    write_text(report_path, report.to_json() + "\n");
    std::cout << "wrote " << out_path << " and " << report_path << "\n";
    for (const auto& it : report.iterations)
        std::cout << "iteration " << it.iteration << ": accepted " << it.accepted
                  << "/" << it.trajectories << " trajectories, " << it.events
                  << " events\n";
    return 0;
}

int cmd_train_bc(const CommonFlags& common, const std::string& data_path,
                 const std::string& out_path, bool gaussian, bool weighted,
                 const std::string& value_path, const std::string& log_path) {
    ExperimentConfig cfg = resolve_config(common);
    if (weighted && value_path.empty())
        throw ConfigError("--weighted requires --value");
    if (weighted && gaussian)
        throw ConfigError("--weighted and --gaussian are mutually exclusive");
    write_sidecar(cfg, out_path);
    const Dataset ds = load_dataset(data_path);
    PointMassEnv env;
    env.horizon = cfg.env_horizon;
    BcConfig bcc = cfg.bc;
    bcc.seed = cfg.seed;
    const Vec bound = derive_action_bound(ds);
    Policy policy;
    BCTrainLog log;
    if (gaussian) {
        policy = train_bc_gaussian(ds, bound, bcc);
    } else if (weighted) {
        const TwinValue vmodel = load_value(value_path);
        auto result = train_weighted_bc(
            ds, vmodel, bound, bcc,
            env_evaluator(env, cfg.eval_episodes, Rng(cfg.seed).derive(9).next_u64()));
        policy = std::move(result.first);
        log = std::move(result.second);
    } else {
        auto result = train_bc(
            ds, bound, bcc,
            env_evaluator(env, cfg.eval_episodes, Rng(cfg.seed).derive(9).next_u64()));
        policy = std::move(result.first);
        log = std::move(result.second);
    }
    save_policy(policy, out_path);
    if (!log_path.empty()) write_text(log_path, log.to_json() + "\n");
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

int cmd_eval(const CommonFlags& common, const std::string& policy_path,
             int episodes, int seeds, const std::string& out_path) {
    ExperimentConfig cfg = resolve_config(common);
    const Policy policy = load_policy(policy_path);
    PointMassEnv env;
    env.horizon = cfg.env_horizon;
    const EvalResult res = evaluate_policy(env, policy, episodes, seeds, cfg.seed);
    std::string json = "{\n  \"mean\": " + std::to_string(res.mean) +
                       ",\n  \"std\": " + std::to_string(res.std) +
                       ",\n  \"per_seed\": [";
    for (std::size_t i = 0; i < res.per_seed.size(); ++i)
        json += (i ? ", " : "") + std::to_string(res.per_seed[i]);
    json += "]\n}\n";
    std::cout << json;
    if (!out_path.empty()) {
        write_sidecar(cfg, out_path);
        write_text(out_path, json);
    }
    return 0;
}

int cmd_pipeline(const CommonFlags& common, const std::string& out_dir) {
    ExperimentConfig cfg = resolve_config(common);
    std::filesystem::create_directories(out_dir);
    write_text(out_dir + "/resolved.config", cfg.resolved());
    const PipelineArtifacts artifacts = run_pipeline(cfg, &std::cerr);
    write_text(out_dir + "/metrics.json", artifacts.report.to_json());
    write_text(out_dir + "/metrics.csv", artifacts.report.to_csv());
    write_text(out_dir + "/stitch_reports.json", artifacts.stitch_reports_json);
    std::cout << "wrote " << out_dir << "/metrics.json, metrics.csv, "
              << "stitch_reports.json\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Trajectory stitching toolkit for offline RL datasets"};
    app.require_subcommand(1);

    CommonFlags common;
    std::string out_path, data_path, models_prefix, report_path, value_path;
    std::string policy_path, log_path, out_dir;
    std::vector<std::string> skip;
    bool gaussian = false, weighted = false;
    int episodes = 10, seeds = 5;

    auto* gen = app.add_subcommand("gen-data", "Generate a mixture dataset");
    add_common(gen, common);
    gen->add_option("--out", out_path, "Output dataset (JSONL)")->required();
    gen->add_option("--expert-frac", [&common](const std::vector<std::string>& v) {
        common.sets.push_back("mixture.expert_fraction_pct=" + v[0]);
        return true;
    }, "Expert trajectory percentage");
    gen->add_option("--trajs", [&common](const std::vector<std::string>& v) {
        common.sets.push_back("mixture.trajectories=" + v[0]);
        return true;
    }, "Trajectory count");
    gen->add_option("--noise-std", [&common](const std::vector<std::string>& v) {
        common.sets.push_back("mixture.noise_std=" + v[0]);
        return true;
    }, "Noise std for non-expert trajectories");

    auto* tm = app.add_subcommand("train-models", "Train the four stitching models");
    add_common(tm, common);
    tm->add_option("--data", data_path, "Input dataset")->required();
    tm->add_option("--out-prefix", models_prefix, "Checkpoint path prefix")->required();
    tm->add_option("--skip", skip, "Skip a model: dynamics, inverse, reward, value");

    auto* st = app.add_subcommand("stitch", "Run iterated trajectory stitching");
    add_common(st, common);
    st->add_option("--data", data_path, "Input dataset")->required();
    st->add_option("--out", out_path, "Augmented dataset output")->required();
    st->add_option("--models", models_prefix,
                   "Checkpoint prefix from train-models (default: train in-run)");
    st->add_option("--report-path", report_path, "StitchReport output path");
    st->add_option("--iterations", [&common](const std::vector<std::string>& v) {
        common.sets.push_back("stitch.iterations=" + v[0]);
        return true;
    }, "Stitching iterations");
    st->add_option("--accept-threshold", [&common](const std::vector<std::string>& v) {
        common.sets.push_back("stitch.accept_threshold=" + v[0]);
        return true;
    }, "Reward-sum acceptance margin");
    st->add_option("--epsilon", [&common](const std::vector<std::string>& v) {
        common.sets.push_back("stitch.epsilon=" + v[0]);
        return true;
    }, "Neighborhood radius (negative: data-driven default)");
    st->add_option("--max-stitches", [&common](const std::vector<std::string>& v) {
        common.sets.push_back("stitch.max_stitches_per_traj=" + v[0]);
        return true;
    }, "Stitch limit per trajectory (negative: unlimited)");
    st->add_option("--latent-mode", [&common](const std::vector<std::string>& v) {
        common.sets.push_back("stitch.latent_mode=" + v[0]);
        return true;
    }, "Inverse-model latent: sample or mean");

    auto* tb = app.add_subcommand("train-bc", "Behavioural cloning");
    add_common(tb, common);
    tb->add_option("--data", data_path, "Input dataset")->required();
    tb->add_option("--out", out_path, "Policy output path")->required();
    tb->add_flag("--gaussian", gaussian, "Gaussian policy by maximum likelihood");
    tb->add_flag("--weighted", weighted, "Value-weighted BC (needs --value)");
    tb->add_option("--value", value_path, "Value-function checkpoint");
    tb->add_option("--log", log_path, "Write the checkpoint log JSON here");

    auto* ev = app.add_subcommand("eval", "Evaluate a policy on the toy env");
    add_common(ev, common);
    ev->add_option("--policy", policy_path, "Policy checkpoint")->required();
    ev->add_option("--episodes", episodes, "Episodes per seed");
    ev->add_option("--seeds", seeds, "Evaluation seeds");
    ev->add_option("--out", out_path, "Optional JSON output path");

    auto* pl = app.add_subcommand("pipeline", "Full expert-fraction sweep");
    add_common(pl, common);
    pl->add_option("--out-dir", out_dir, "Output directory")->required();
    pl->add_option("--fractions", [&common](const std::vector<std::string>& v) {
        common.sets.push_back("pipeline.fractions=" + v[0]);
        return true;
    }, "Comma-separated expert percentages");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(common, out_path);
        if (tm->parsed()) return cmd_train_models(common, data_path, models_prefix, skip);
        if (st->parsed())
            return cmd_stitch(common, data_path, models_prefix, out_path, report_path);
        if (tb->parsed())
            return cmd_train_bc(common, data_path, out_path, gaussian, weighted,
                                value_path, log_path);
        if (ev->parsed())
            return cmd_eval(common, policy_path, episodes, seeds, out_path);
        if (pl->parsed()) return cmd_pipeline(common, out_dir);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const IntegrityError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
