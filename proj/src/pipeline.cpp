#include "stitchkit/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include <json.hpp>

#include "stitchkit/errors.hpp"
#include "stitchkit/pipeline.hpp"

namespace stitchkit {

namespace {

std::uint64_t sub_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b,
                       std::uint64_t c) {
    return Rng(master).derive(a).derive(b).derive(c).next_u64();
}

double mean_of(const Vec& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double sample_std(const Vec& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

std::string csv_num(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

struct Stage {
    const ExperimentConfig& cfg;
    PointMassEnv env;
    ExpertPolicy expert;
    std::vector<Vec> expert_states;  // shared state set for the MSE metric
    std::ostream* progress;

    void note(const std::string& line) const {
        if (progress != nullptr) *progress << line << "\n" << std::flush;
    }

    PolicyEvaluator checkpoint_evaluator(std::uint64_t seed) const {
        const PointMassEnv env_copy = env;
        const int episodes = cfg.eval_episodes;
        return [env_copy, episodes, seed](const Policy& p) {
            return evaluate_policy(env_copy, p, episodes, 1, seed).mean;
        };
    }

    // Trains the deterministic BC policies for one dataset and returns their
    // evaluation means, plus KL (Gaussian refits) and action-MSE metrics.
    struct BcBundle {
        Vec returns;
        Vec kls;
        Vec mses;
    };

    BcBundle bc_runs(const Dataset& ds, std::uint64_t tag, int n_seeds,
                     bool with_kl) const {
        BcBundle out;
        for (int s = 0; s < n_seeds; ++s) {
            BcConfig bcc = cfg.bc;
            bcc.seed = sub_seed(cfg.seed, 0xbc, tag, static_cast<std::uint64_t>(s));
            const auto [policy, log] =
                train_bc(ds, {1.0, 1.0}, bcc, checkpoint_evaluator(bcc.seed));
            out.returns.push_back(
                evaluate_policy(env, policy, cfg.eval_episodes, cfg.eval_seeds,
                                sub_seed(cfg.seed, 0xe7a1, tag,
                                         static_cast<std::uint64_t>(s)))
                    .mean);
            out.mses.push_back(action_mse(env, expert, policy, expert_states));
            if (with_kl) {
                BcConfig gcc = cfg.bc;
                gcc.seed =
                    sub_seed(cfg.seed, 0x6a55, tag, static_cast<std::uint64_t>(s));
                const Policy gauss = train_bc_gaussian(ds, {1.0, 1.0}, gcc);
                out.kls.push_back(
                    kl_divergence_estimate(env, expert, gauss, cfg.kl_episodes,
                                           sub_seed(cfg.seed, 0x3172, tag,
                                                    static_cast<std::uint64_t>(s)))
                        .estimate);
            }
        }
        return out;
    }
};

}  // namespace

PipelineArtifacts run_pipeline(const ExperimentConfig& cfg, std::ostream* progress) {
    if (cfg.pipeline_fractions.empty())
        throw ConfigError("pipeline.fractions must be nonempty");
    int ablation_index = -1;
    for (std::size_t i = 0; i < cfg.pipeline_fractions.size(); ++i)
        if (std::abs(cfg.pipeline_fractions[i] - cfg.pipeline_ablation_fraction) < 1e-9)
            ablation_index = static_cast<int>(i);
    if (ablation_index < 0)
        throw ConfigError("pipeline.ablation_fraction must be one of pipeline.fractions");

    Stage stage{cfg, PointMassEnv{}, ExpertPolicy{}, {}, progress};
    stage.env.horizon = cfg.env_horizon;
    stage.expert_states = collect_expert_states(stage.env, stage.expert, 10,
                                                sub_seed(cfg.seed, 0x57, 0, 0));

    PipelineArtifacts artifacts;
    PipelineReport& rep = artifacts.report;
    rep.fractions = cfg.pipeline_fractions;
    rep.ablation_fraction = cfg.pipeline_ablation_fraction;
    nlohmann::json stitch_reports = nlohmann::json::array();

    Dataset ablation_dataset;
    std::vector<Dataset> ablation_intermediates;

    for (std::size_t fi = 0; fi < cfg.pipeline_fractions.size(); ++fi) {
        const double fraction = cfg.pipeline_fractions[fi];
        const std::uint64_t tag = fi;
        Rng data_rng(sub_seed(cfg.seed, 0xda7a, tag, 0));
        const Dataset ds = generate_mixture_dataset(
            stage.env, stage.expert,
            {fraction, cfg.mixture_noise_std, cfg.mixture_trajectories}, data_rng);
        stage.note("fraction " + std::to_string(fraction) + ": dataset with " +
                   std::to_string(ds.trajectories.size()) + " trajectories");

        const Stage::BcBundle bc = stage.bc_runs(ds, tag * 2, cfg.pipeline_bc_seeds,
                                                 /*with_kl=*/true);
        rep.bc_return.push_back(mean_of(bc.returns));
        rep.bc_return_std.push_back(sample_std(bc.returns));
        rep.bc_kl.push_back(mean_of(bc.kls));
        rep.bc_mse.push_back(mean_of(bc.mses));
        stage.note("fraction " + std::to_string(fraction) +
                   ": BC return " + std::to_string(rep.bc_return.back()));

        Vec ts_returns, ts_kls, ts_mses;
        for (int t = 0; t < cfg.pipeline_ts_seeds; ++t) {
            StitchConfig sc = cfg.stitch;
            sc.seed = sub_seed(cfg.seed, 0x715, tag, static_cast<std::uint64_t>(t));
            std::vector<Dataset>* keep =
                (static_cast<int>(fi) == ablation_index && t == 0)
                    ? &ablation_intermediates
                    : nullptr;
            auto [augmented, report] = run_ts(ds, sc, keep);
            stitch_reports.push_back(
                {{"fraction", fraction},
                 {"ts_seed", t},
                 {"report", nlohmann::json::parse(report.to_json())}});
            const Stage::BcBundle ts_bc = stage.bc_runs(
                augmented, tag * 2 + 1 + 0x100 * static_cast<std::uint64_t>(t),
                cfg.pipeline_bc_seeds, /*with_kl=*/true);
            for (double r : ts_bc.returns) ts_returns.push_back(r);
            for (double k : ts_bc.kls) ts_kls.push_back(k);
            for (double m : ts_bc.mses) ts_mses.push_back(m);
            stage.note("fraction " + std::to_string(fraction) + ": TS seed " +
                       std::to_string(t) + " done");
        }
        rep.tsbc_return.push_back(mean_of(ts_returns));
        rep.tsbc_return_std.push_back(sample_std(ts_returns));
        rep.tsbc_kl.push_back(mean_of(ts_kls));
        rep.tsbc_mse.push_back(mean_of(ts_mses));
        stage.note("fraction " + std::to_string(fraction) +
                   ": TS+BC return " + std::to_string(rep.tsbc_return.back()));

        if (static_cast<int>(fi) == ablation_index) ablation_dataset = ds;
    }

    rep.scaled_kl_diff = scaled_kl_difference(rep.bc_kl, rep.tsbc_kl);

    // Ablation: value-weighted BC on the unaugmented ablation dataset.
    rep.ablation_bc_return = rep.bc_return[static_cast<std::size_t>(ablation_index)];
    rep.ablation_bc_std = rep.bc_return_std[static_cast<std::size_t>(ablation_index)];
    rep.ablation_tsbc_return =
        rep.tsbc_return[static_cast<std::size_t>(ablation_index)];
    rep.ablation_tsbc_std =
        rep.tsbc_return_std[static_cast<std::size_t>(ablation_index)];
    {
        ValueConfig vc = cfg.stitch.value;
        vc.seed = sub_seed(cfg.seed, 0x4a1, 0, 0);
        const TwinValue vmodel = train_value(ablation_dataset, vc);
        Vec returns;
        for (int s = 0; s < cfg.pipeline_bc_seeds; ++s) {
            BcConfig bcc = cfg.bc;
            bcc.seed = sub_seed(cfg.seed, 0x3b, 0, static_cast<std::uint64_t>(s));
            const auto [policy, log] =
                train_weighted_bc(ablation_dataset, vmodel, {1.0, 1.0}, bcc,
                                  stage.checkpoint_evaluator(bcc.seed));
            returns.push_back(
                evaluate_policy(stage.env, policy, cfg.eval_episodes, cfg.eval_seeds,
                                sub_seed(cfg.seed, 0x3c, 0,
                                         static_cast<std::uint64_t>(s)))
                    .mean);
        }
        rep.ablation_weighted_return = mean_of(returns);
        rep.ablation_weighted_std = sample_std(returns);
        stage.note("ablation: weighted BC return " +
                   std::to_string(rep.ablation_weighted_return));
    }

    // Iteration study: BC quality after each stitching pass (seed 0 run).
    rep.iteration_returns.push_back(rep.ablation_bc_return);
    rep.iteration_stds.push_back(rep.ablation_bc_std);
    for (std::size_t k = 0; k < ablation_intermediates.size(); ++k) {
        const Stage::BcBundle it_bc =
            stage.bc_runs(ablation_intermediates[k], 0x9000 + k,
                          cfg.pipeline_bc_seeds, /*with_kl=*/false);
        rep.iteration_returns.push_back(mean_of(it_bc.returns));
        rep.iteration_stds.push_back(sample_std(it_bc.returns));
        stage.note("iteration " + std::to_string(k + 1) + ": BC return " +
                   std::to_string(rep.iteration_returns.back()));
    }

    artifacts.stitch_reports_json = stitch_reports.dump(2) + "\n";
    return artifacts;
}

std::string PipelineReport::to_json() const {
    nlohmann::json j;
    j["fractions"] = fractions;
    j["bc"] = {{"returns", bc_return},
               {"return_stds", bc_return_std},
               {"kl", bc_kl},
               {"mse", bc_mse}};
    j["tsbc"] = {{"returns", tsbc_return},
                 {"return_stds", tsbc_return_std},
                 {"kl", tsbc_kl},
                 {"mse", tsbc_mse}};
    j["scaled_kl_diff"] = scaled_kl_diff;
    j["weighted_bc"] = {{"fraction", ablation_fraction},
                        {"bc_return", ablation_bc_return},
                        {"bc_std", ablation_bc_std},
                        {"weighted_return", ablation_weighted_return},
                        {"weighted_std", ablation_weighted_std},
                        {"tsbc_return", ablation_tsbc_return},
                        {"tsbc_std", ablation_tsbc_std}};
    j["iterations"] = {{"returns", iteration_returns}, {"stds", iteration_stds}};
    return j.dump(2) + "\n";
}

std::string PipelineReport::to_csv() const {
    std::string out =
        "fraction,bc_return,bc_return_std,bc_kl,bc_mse,"
        "tsbc_return,tsbc_return_std,tsbc_kl,tsbc_mse,scaled_kl_diff\n";
    for (std::size_t i = 0; i < fractions.size(); ++i) {
        out += csv_num(fractions[i]) + "," + csv_num(bc_return[i]) + "," +
               csv_num(bc_return_std[i]) + "," + csv_num(bc_kl[i]) + "," +
               csv_num(bc_mse[i]) + "," + csv_num(tsbc_return[i]) + "," +
               csv_num(tsbc_return_std[i]) + "," + csv_num(tsbc_kl[i]) + "," +
               csv_num(tsbc_mse[i]) + "," + csv_num(scaled_kl_diff[i]) + "\n";
    }
    return out;
}

}  // namespace stitchkit
