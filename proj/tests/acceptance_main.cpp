// Acceptance suite: one PASS/FAIL line per criterion, exit 0 iff all pass.
// argv[1] (optional) is the path to the stitchkit CLI binary used by the
// determinism criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <unistd.h>
#include <string>
#include <vector>

#include "stitchkit/bc.hpp"
#include "stitchkit/config.hpp"
#include "stitchkit/cvae.hpp"
#include "stitchkit/data.hpp"
#include "stitchkit/dynamics.hpp"
#include "stitchkit/env.hpp"
#include "stitchkit/nn.hpp"
#include "stitchkit/pipeline.hpp"
#include "stitchkit/rng.hpp"
#include "stitchkit/stitcher.hpp"
#include "stitchkit/value.hpp"
#include "stitchkit/wgan.hpp"

using namespace stitchkit;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

int failures = 0;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

void report(int id, const std::string& label, bool pass, double elapsed,
            const std::string& detail) {
    std::printf("%s criterion %d (%s) [%.1fs]%s%s\n", pass ? "PASS" : "FAIL", id,
                label.c_str(), elapsed, detail.empty() ? "" : ": ",
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
}

std::string fmt(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4g", x);
    return buf;
}

// ---------------------------------------------------------------- criterion 1

void criterion_gradients() {
    const auto start = Clock::now();
    struct Arch {
        std::vector<int> sizes;
        Head head;
        Vec scale;
        double ls_min, ls_max;
    };
    const std::vector<Arch> archs = {
        {{3, 16, 8, 2}, Head::Linear, {}, -10.0, 2.0},
        {{5, 8}, Head::Linear, {}, -10.0, 2.0},
        {{4, 32, 32, 2}, Head::TanhScaled, {1.0, 0.7}, -10.0, 2.0},
        {{6, 32, 8}, Head::Gaussian, {}, -3.0, 2.0},   // dynamics-style bounds
        {{8, 32, 32, 4}, Head::Gaussian, {}, -10.0, 2.0},  // policy-style
    };
    double worst = 0.0;
    for (const auto& arch : archs) {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            Rng rng(seed);
            const Network net = make_network(arch.sizes, arch.head, rng, arch.scale,
                                             arch.ls_min, arch.ls_max);
            Vec input(static_cast<std::size_t>(net.input_dim()));
            for (auto& x : input) x = rng.uniform(-1.0, 1.0);
            worst = std::max(worst, grad_check(net, input));
        }
    }
    const double elapsed = seconds_since(start);
    report(1, "gradient correctness", worst < 1e-4 && elapsed < 60.0, elapsed,
           "max relative gradient error " + fmt(worst) +
           " over 5 architectures x 10 seeds (limit 1e-4)");
}

// ---------------------------------------------------------------- criterion 2

StitchConfig desk_stitch_config(std::uint64_t seed) {
    ExperimentConfig cfg;
    cfg.apply_preset("desk");
    StitchConfig sc = cfg.stitch;
    sc.seed = seed;
    return sc;
}

struct VecLess {
    bool operator()(const Vec& a, const Vec& b) const { return a < b; }
};

void criterion_invariants() {
    const auto start = Clock::now();
    PointMassEnv env;
    const ExpertPolicy expert;
    Rng rng(Rng(2026).derive(2).next_u64());
    const Dataset d0 =
        generate_mixture_dataset(env, expert, {10.0, 0.5, 200}, rng);

    const StitchConfig sc = desk_stitch_config(11);
    std::vector<Dataset> gens;
    const auto [dk, rep] = run_ts(d0, sc, &gens);

    std::vector<std::string> violations;
    auto violate = [&](const std::string& what) {
        if (violations.size() < 5) violations.push_back(what);
    };

    std::set<Vec, VecLess> known_states;
    for (const auto& ref : d0.state_index) known_states.insert(d0.state_at(ref));

    if (gens.size() != static_cast<std::size_t>(sc.iterations))
        violate("iteration count mismatch");
    const Dataset* prev = &d0;
    for (std::size_t k = 0; k < gens.size(); ++k) {
        const Dataset& cur = gens[k];
        if (cur.trajectories.size() != d0.trajectories.size())
            violate("trajectory count changed at iteration " + std::to_string(k + 1));
        int changed = 0;
        for (std::size_t i = 0; i < cur.trajectories.size(); ++i) {
            const Trajectory& before = prev->trajectories[i];
            const Trajectory& after = cur.trajectories[i];
            bool same = before.transitions.size() == after.transitions.size();
            if (same)
                for (std::size_t j = 0; j < after.transitions.size(); ++j)
                    if (!(before.transitions[j] == after.transitions[j])) {
                        same = false;
                        break;
                    }
            if (same) continue;
            ++changed;
            // Acceptance rule at replacement time.
            if (!(after.reward_sum() >
                  (1.0 + sc.accept_threshold) * before.reward_sum()))
                violate("accepted trajectory " + std::to_string(i) +
                        " fails the reward-sum margin at iteration " +
                        std::to_string(k + 1));
            for (const auto& tr : after.transitions) {
                if (!known_states.count(tr.state) || !known_states.count(tr.next_state))
                    violate("imagined state in trajectory " + std::to_string(i));
            }
        }
        if (k < rep.iterations.size() && changed != rep.iterations[k].accepted)
            violate("accepted count mismatch at iteration " + std::to_string(k + 1));
        prev = &cur;
    }
    if (!(gens.empty() || gens.back() == dk)) violate("final generation mismatch");
    int total_events = 0;
    for (const auto& ev : rep.events) {
        ++total_events;
        if (!(ev.log_margin > 0.0)) violate("non-positive likelihood margin");
        if (!(ev.value_gain > 0.0)) violate("non-positive value gain");
    }
    int accepted_total = 0;
    for (const auto& it : rep.iterations) accepted_total += it.accepted;

    const double elapsed = seconds_since(start);
    std::string detail = std::to_string(accepted_total) + " replacements, " +
                         std::to_string(total_events) + " events, " +
                         std::to_string(violations.size()) + " violations";
    for (const auto& v : violations) detail += "; " + v;
    report(2, "stitch invariants on a 200-trajectory mixture",
           violations.empty() && elapsed < 600.0, elapsed, detail);
}

// ---------------------------------------------------------------- criterion 3

// 1-D toy MDP with known dynamics s' ~ peaked at s + 1, reward 2*(s'-s) and
// inverse map a = s' - s. Values are exact DP under V(s) = s (monotone chain).
struct OracleReach final : ReachabilityModel {
    double log_margin(const Vec& s, const Vec& obs, const Vec& cand) const override {
        auto logp = [&](double x) {
            const double d = x - (s[0] + 1.0);
            return -4.0 * d * d;
        };
        return logp(cand[0]) - logp(obs[0]);
    }
};
struct OracleValue final : StateValueModel {
    double state_value(const Vec& s) const override { return s[0]; }
};
struct OracleInverse final : ActionModel {
    Vec connect(const Vec& s, const Vec& s_next, Rng&) const override {
        return {s_next[0] - s[0]};
    }
};
struct OracleReward final : RewardModel {
    double reward(const Vec& s, const Vec&, const Vec& s_next, Rng&) const override {
        return 2.0 * (s_next[0] - s[0]);
    }
};

Trajectory chain2(int id, double s0, double s1, double s2, double r0, double r1) {
    Trajectory t;
    t.traj_id = id;
    Transition a;
    a.traj_id = id;
    a.t = 0;
    a.state = {s0};
    a.action = {s1 - s0};
    a.reward = r0;
    a.next_state = {s1};
    Transition b;
    b.traj_id = id;
    b.t = 1;
    b.state = {s1};
    b.action = {s2 - s1};
    b.reward = r1;
    b.next_state = {s2};
    b.done = true;
    t.transitions = {a, b};
    return t;
}

void criterion_oracle_splice() {
    const auto start = Clock::now();
    Dataset ds;
    ds.d_s = 1;
    ds.d_a = 1;
    // A walks off-model (0 -> 0.7); B is the high-value branch; C a lesser
    // survivor; D has the highest value but is dynamics-implausible.
    ds.trajectories = {
        chain2(0, 0.00, 0.70, 1.40, 0.1, 0.1),  // A
        chain2(1, 0.05, 1.20, 6.00, 0.0, 5.0),  // B
        chain2(2, 0.04, 1.10, 3.00, 0.0, 1.0),  // C
        chain2(3, 0.06, 1.45, 5.00, 0.0, 4.0),  // D
    };
    ds.rebuild_index();
    ds.validate();

    const OracleReach reach;
    const OracleValue val;
    const OracleInverse inv;
    const OracleReward rew;
    ModelSet models;
    models.reachability = &reach;
    models.value = &val;
    models.action = &inv;
    models.reward = &rew;

    StitchConfig sc;
    sc.seed = 0;
    Rng rng(0);
    const StitchOutcome out =
        stitch_trajectory(ds.trajectories[0], ds, models, sc, 0.25, rng);

    // Hand computation: at (0,0) the candidate set is {B@1: 1.2, C@1: 1.1,
    // D@1: 1.45}. D fails reachability (margin 4*(0.09 - 0.2025) < 0); B and
    // C pass reachability and V > V(0.7); argmax-V survivor is B@1. Synthetic
    // transition 0 -> 1.2 with a = 1.2, r = 2.4, then B's suffix is adopted.
    // At (1,1) both tail candidates pass reachability but fail the strict
    // value test against 6.0, so the walk ends after B's final transition.
    bool ok = out.events.size() == 1 && out.trajectory.transitions.size() == 2;
    std::string detail;
    if (ok) {
        const StitchEvent& ev = out.events[0];
        ok = ev.source_traj == 0 && ev.source_t == 0 && ev.candidate_traj == 1 &&
             ev.candidate_t == 1 && !ev.candidate_tail &&
             ev.action == Vec{1.2 - 0.0} && ev.reward == 2.4 &&
             std::abs(ev.log_margin - 4.0 * (0.09 - 0.04)) < 1e-12 &&
             std::abs(ev.value_gain - 0.5) < 1e-12;
        const Transition& t0 = out.trajectory.transitions[0];
        const Transition& t1 = out.trajectory.transitions[1];
        ok = ok && t0.state == Vec{0.0} && t0.next_state == Vec{1.2} &&
             t0.action == Vec{1.2} && t0.reward == 2.4 && !t0.done &&
             t1.state == Vec{1.2} && t1.next_state == Vec{6.0} &&
             t1.reward == 5.0 && t1.done &&
             t1.action == ds.trajectories[1].transitions[1].action;
        // Whole-trajectory acceptance: 7.4 > 1.1 * 0.2.
        const Trajectory& chosen =
            accept_or_reject(ds.trajectories[0], out.trajectory, 0.1);
        ok = ok && &chosen == &out.trajectory;
        detail = "splice (0,0) -> B@1 matched the hand computation exactly";
    } else {
        detail = "expected 1 event / 2 transitions, got " +
                 std::to_string(out.events.size()) + " / " +
                 std::to_string(out.trajectory.transitions.size());
    }
    const double elapsed = seconds_since(start);
    report(3, "oracle stitcher equivalence", ok && elapsed < 1.0, elapsed, detail);
}

// ---------------------------------------------------------------- criterion 4

Dataset pair_dataset_linear(int n, std::uint64_t seed) {
    // Length-1 trajectories with s' = 0.5 s + 0.2 on [-1,1]^2, a = s' - s.
    Rng rng(seed);
    Dataset ds;
    ds.d_s = 2;
    ds.d_a = 2;
    for (int k = 0; k < n; ++k) {
        Transition tr;
        tr.traj_id = k;
        tr.t = 0;
        tr.state = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        tr.next_state = {0.5 * tr.state[0] + 0.2, 0.5 * tr.state[1] + 0.2};
        tr.action = {tr.next_state[0] - tr.state[0], tr.next_state[1] - tr.state[1]};
        tr.reward = -std::hypot(tr.next_state[0], tr.next_state[1]);
        tr.done = true;
        Trajectory t;
        t.traj_id = k;
        t.transitions = {tr};
        ds.trajectories.push_back(std::move(t));
    }
    ds.rebuild_index();
    return ds;
}

Dataset invertible_action_dataset(int n, std::uint64_t seed) {
    // s' = s + 0.1 a with a in [-1,1]^2; inverse map a = 10 (s' - s).
    Rng rng(seed);
    Dataset ds;
    ds.d_s = 2;
    ds.d_a = 2;
    for (int k = 0; k < n; ++k) {
        Transition tr;
        tr.traj_id = k;
        tr.t = 0;
        tr.state = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        tr.action = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        tr.next_state = {tr.state[0] + 0.1 * tr.action[0],
                         tr.state[1] + 0.1 * tr.action[1]};
        tr.reward = -std::hypot(tr.next_state[0], tr.next_state[1]);
        tr.done = true;
        Trajectory t;
        t.traj_id = k;
        t.transitions = {tr};
        ds.trajectories.push_back(std::move(t));
    }
    ds.rebuild_index();
    return ds;
}

void criterion_model_recovery() {
    const auto start = Clock::now();
    std::vector<std::string> fails;

    // Dynamics: deterministic linear system, elite mean error < 0.01.
    {
        const Dataset ds = pair_dataset_linear(600, 41);
        DynamicsConfig dc;
        dc.hidden = {32, 32};
        dc.batch = 64;
        dc.max_epochs = 300;
        dc.patience = 30;
        dc.ensemble_size = 3;
        dc.n_elites = 2;
        dc.seed = 41;
        const DynamicsEnsemble ens = train_dynamics(ds, dc);
        Rng rng(7);
        double worst = 0.0;
        for (int rep = 0; rep < 100; ++rep) {
            const Vec s{rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9)};
            const Vec out =
                forward(ens.members[static_cast<std::size_t>(ens.elites[0])].net,
                        ens.norm.normalize(s));
            const Vec mu = ens.norm.denormalize({out[0], out[1]});
            worst = std::max({worst, std::abs(mu[0] - (0.5 * s[0] + 0.2)),
                              std::abs(mu[1] - (0.5 * s[1] + 0.2))});
        }
        if (!(worst < 0.01))
            fails.push_back("dynamics mean error " + fmt(worst) + " >= 0.01");
    }

    // Inverse dynamics: action MSE < 0.05 * range^2 (range 2 per dim).
    {
        const Dataset ds = invertible_action_dataset(600, 43);
        CvaeConfig cc;
        cc.hidden = {32, 32};
        cc.lr = 1e-3;
        cc.batch = 64;
        cc.steps = 12000;
        cc.seed = 43;
        const InverseCVAE cvae = train_cvae(ds, {1.0, 1.0}, cc);
        Rng rng(8);
        double mse = 0.0;
        const int reps = 200;
        for (int rep = 0; rep < reps; ++rep) {
            const Vec s{rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8)};
            const Vec a{rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9)};
            const Vec sn{s[0] + 0.1 * a[0], s[1] + 0.1 * a[1]};
            const Vec ah = generate_action(cvae, s, sn, rng, LatentMode::Mean);
            mse += ((ah[0] - a[0]) * (ah[0] - a[0]) +
                    (ah[1] - a[1]) * (ah[1] - a[1])) / 2.0;
        }
        mse /= reps;
        if (!(mse < 0.05 * 2.0 * 2.0))
            fails.push_back("inverse-action MSE " + fmt(mse) + " >= 0.2");
    }

    // Reward generator: held-out MAE < 10% of the observed reward range.
    {
        const Dataset train = invertible_action_dataset(800, 45);
        const Dataset held = invertible_action_dataset(100, 46);
        WganConfig wc;
        wc.hidden = {32, 32};
        wc.batch = 64;
        wc.gen_steps = 4000;
        wc.clip = 0.05;
        wc.lr = 3e-4;
        wc.seed = 45;
        const RewardGAN gan = train_wgan(train, wc);
        double lo = 1e300, hi = -1e300, mae = 0.0;
        for (const auto& t : train.trajectories) {
            lo = std::min(lo, t.transitions[0].reward);
            hi = std::max(hi, t.transitions[0].reward);
        }
        for (const auto& t : held.trajectories) {
            const Transition& tr = t.transitions[0];
            mae += std::abs(predict_reward_mean(gan, tr.state, tr.action,
                                                tr.next_state) - tr.reward);
        }
        mae /= static_cast<double>(held.trajectories.size());
        if (!(mae < 0.1 * (hi - lo)))
            fails.push_back("reward MAE " + fmt(mae) + " >= 10% of range " +
                            fmt(hi - lo));
    }

    // Value: 3-state chain 0 -> 1 -> 2 with rewards 0 then 1, gamma 0.9.
    // Exact DP: V(1) = 1, V(0) = 0.9; tolerance 0.05 * max|V|.
    {
        Dataset ds;
        ds.d_s = 1;
        ds.d_a = 1;
        for (int k = 0; k < 80; ++k) {
            Trajectory t = chain2(k, 0.0, 1.0, 2.0, 0.0, 1.0);
            t.traj_id = k;
            for (auto& tr : t.transitions) tr.traj_id = k;
            ds.trajectories.push_back(std::move(t));
        }
        ds.rebuild_index();
        ValueConfig vc;
        vc.hidden = {32, 32};
        vc.batch = 64;
        vc.steps = 4000;
        vc.gamma = 0.9;
        vc.target_period = 250;
        vc.seed = 47;
        const TwinValue tv = train_value(ds, vc);
        const double v0 = value(tv, {0.0});
        const double v1 = value(tv, {1.0});
        if (!(std::abs(v0 - 0.9) < 0.05 && std::abs(v1 - 1.0) < 0.05))
            fails.push_back("value vs DP: V(0) = " + fmt(v0) + " (want 0.9), V(1) = " +
                            fmt(v1) + " (want 1.0), tolerance 0.05");
    }

    const double elapsed = seconds_since(start);
    std::string detail = fails.empty()
                             ? "dynamics, inverse, reward, and value all in tolerance"
                             : "";
    for (const auto& f : fails) detail += (detail.empty() ? "" : "; ") + f;
    report(4, "model recovery", fails.empty() && elapsed < 900.0, elapsed, detail);
}

// ------------------------------------------------------- criteria 5, 6, 7, 8

double pooled_se(double s1, int n1, double s2, int n2) {
    return std::sqrt(s1 * s1 / std::max(1, n1) + s2 * s2 / std::max(1, n2));
}

struct PipelineOutcome {
    double seconds = 0.0;
};

PipelineOutcome criterion_pipeline_block() {
    const auto start = Clock::now();
    ExperimentConfig cfg;
    cfg.apply_preset("desk");
    cfg.seed = 2026;
    const PipelineArtifacts art = run_pipeline(cfg, &std::cerr);
    const PipelineReport& r = art.report;
    const double elapsed = seconds_since(start);

    // Criterion 5: TS+BC >= BC on every fraction, strictly greater on >= 3.
    {
        bool all_ge = true;
        int strict = 0;
        std::string detail;
        for (std::size_t i = 0; i < r.fractions.size(); ++i) {
            all_ge = all_ge && r.tsbc_return[i] >= r.bc_return[i];
            if (r.tsbc_return[i] > r.bc_return[i]) ++strict;
            detail += (i ? ", " : "") + fmt(r.fractions[i]) + "%: " +
                      fmt(r.bc_return[i]) + " -> " + fmt(r.tsbc_return[i]);
        }
        report(5, "TS+BC improves on BC across expertise levels",
               all_ge && strict >= 3 && r.fractions.size() == 5 && elapsed < 3600.0,
               elapsed, detail + " (" + std::to_string(strict) + "/5 strict)");
    }

    // Criterion 6: scaled KL difference positive on the majority of fractions.
    {
        int positive = 0;
        std::string detail;
        for (std::size_t i = 0; i < r.scaled_kl_diff.size(); ++i) {
            if (r.scaled_kl_diff[i] > 0.0) ++positive;
            detail += (i ? ", " : "") + fmt(r.scaled_kl_diff[i]);
        }
        report(6, "scaled KL difference favors TS+BC",
               2 * positive > static_cast<int>(r.scaled_kl_diff.size()), 0.0,
               detail + " (" + std::to_string(positive) + "/" +
                   std::to_string(r.scaled_kl_diff.size()) + " positive)");
    }

    // Criterion 7: BC <= weighted-BC <= TS+BC within one pooled standard
    // error at the ablation fraction.
    {
        const int nb = cfg.pipeline_bc_seeds;
        const int nt = cfg.pipeline_bc_seeds * cfg.pipeline_ts_seeds;
        const double se_bw =
            pooled_se(r.ablation_bc_std, nb, r.ablation_weighted_std, nb);
        const double se_wt =
            pooled_se(r.ablation_weighted_std, nb, r.ablation_tsbc_std, nt);
        const bool ok =
            r.ablation_weighted_return >= r.ablation_bc_return - se_bw &&
            r.ablation_tsbc_return >= r.ablation_weighted_return - se_wt;
        report(7, "ablation ordering BC <= weighted-BC <= TS+BC", ok, 0.0,
               "BC " + fmt(r.ablation_bc_return) + ", weighted " +
                   fmt(r.ablation_weighted_return) + ", TS+BC " +
                   fmt(r.ablation_tsbc_return) + " (pooled SEs " + fmt(se_bw) +
                   ", " + fmt(se_wt) + ")");
    }

    // Criterion 8: iteration 1 beats iteration 0, and iteration K stays
    // within 2 pooled standard deviations of the best iteration.
    {
        bool ok = r.iteration_returns.size() >= 2 &&
                  r.iteration_returns[1] > r.iteration_returns[0];
        std::string detail = "returns";
        for (std::size_t i = 0; i < r.iteration_returns.size(); ++i)
            detail += (i ? ", " : " ") + fmt(r.iteration_returns[i]);
        if (ok) {
            std::size_t best = 1;
            for (std::size_t i = 1; i < r.iteration_returns.size(); ++i)
                if (r.iteration_returns[i] > r.iteration_returns[best]) best = i;
            const std::size_t last = r.iteration_returns.size() - 1;
            const double pooled =
                std::sqrt((r.iteration_stds[best] * r.iteration_stds[best] +
                           r.iteration_stds[last] * r.iteration_stds[last]) /
                          2.0);
            ok = r.iteration_returns[last] >=
                 r.iteration_returns[best] - 2.0 * pooled;
            detail += " (best at iteration " + std::to_string(best) +
                      ", pooled std " + fmt(pooled) + ")";
        }
        report(8, "iteration behavior", ok, 0.0, detail);
    }

    return {elapsed};
}

// ---------------------------------------------------------------- criterion 9

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void criterion_determinism(const char* cli_path, double pipeline_seconds) {
    const auto start = Clock::now();
    if (cli_path == nullptr) {
        report(9, "pipeline determinism", false, 0.0,
               "CLI binary path not supplied as argv[1]");
        return;
    }
    const fs::path base =
        fs::temp_directory_path() / ("stitchkit_accept_" + std::to_string(::getpid()));
    fs::create_directories(base);
    // A trimmed pipeline exercising the same command end to end.
    const fs::path cfg_path = base / "pipeline.config";
    {
        std::ofstream cfg(cfg_path);
        cfg << "preset = desk\n"
               "seed = 7\n"
               "mixture.trajectories = 24\n"
               "pipeline.fractions = 5, 20\n"
               "pipeline.ablation_fraction = 20\n"
               "pipeline.bc_seeds = 2\n"
               "pipeline.ts_seeds = 1\n"
               "dynamics.max_epochs = 25\n"
               "cvae.steps = 2000\n"
               "wgan.gen_steps = 600\n"
               "value.steps = 1200\n"
               "bc.steps = 1200\n"
               "bc.checkpoint_start = 400\n"
               "bc.checkpoint_every = 400\n";
    }
    bool ok = true;
    std::string detail;
    for (int run = 0; run < 2 && ok; ++run) {
        const fs::path out = base / ("run" + std::to_string(run));
        const std::string cmd = std::string("'") + cli_path + "' pipeline --config '" +
                                cfg_path.string() + "' --out-dir '" + out.string() +
                                "' 2> /dev/null";
        if (std::system(cmd.c_str()) != 0) {
            ok = false;
            detail = "pipeline command failed on run " + std::to_string(run);
        }
    }
    if (ok) {
        for (const char* name : {"metrics.json", "metrics.csv",
                                 "stitch_reports.json", "resolved.config"}) {
            const std::string a = slurp(base / "run0" / name);
            const std::string b = slurp(base / "run1" / name);
            if (a.empty() || a != b) {
                ok = false;
                detail = std::string(name) + (a.empty() ? " missing" : " differs") +
                         " between runs";
                break;
            }
        }
        if (ok) detail = "both runs byte-identical across all four artifacts";
    }
    fs::remove_all(base);
    const double elapsed = seconds_since(start);
    report(9, "pipeline determinism",
           ok && elapsed < 2.0 * std::max(1.0, pipeline_seconds), elapsed, detail);
}

}  // namespace

int main(int argc, char** argv) {
    auto guarded = [](int id, const std::string& label, auto&& fn) {
        try {
            fn();
        } catch (const std::exception& e) {
            report(id, label, false, 0.0, std::string("unhandled exception: ") + e.what());
        }
    };
    guarded(1, "gradient correctness", criterion_gradients);
    guarded(3, "oracle stitcher equivalence", criterion_oracle_splice);
    guarded(4, "model recovery", criterion_model_recovery);
    guarded(2, "stitch invariants", criterion_invariants);
    PipelineOutcome pipe;
    try {
        pipe = criterion_pipeline_block();
    } catch (const std::exception& e) {
        for (int id : {5, 6, 7, 8})
            report(id, "pipeline block", false, 0.0,
                   std::string("unhandled exception: ") + e.what());
    }
    guarded(9, "pipeline determinism", [&] {
        criterion_determinism(argc > 1 ? argv[1] : nullptr, pipe.seconds);
    });
    std::printf("%s: %d criterion(s) failing\n", failures == 0 ? "ALL PASS" : "FAILURES",
                failures);
    return failures == 0 ? 0 : 1;
}
