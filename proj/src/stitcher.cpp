#include "stitchkit/stitcher.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include <json.hpp>

#include "stitchkit/errors.hpp"

namespace stitchkit {

namespace {

std::uint64_t position_key(int traj_id, int step) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(traj_id)) << 32) |
           static_cast<std::uint32_t>(step);
}

struct Survivor {
    const CandidateSet::Entry* entry;
    double margin;
    double val;
};

}  // namespace

StitchOutcome stitch_trajectory(const Trajectory& traj, const Dataset& dataset,
                                const ModelSet& models, const StitchConfig& config,
                                double epsilon, Rng& rng) {
    if (models.reachability == nullptr || models.value == nullptr ||
        models.action == nullptr || models.reward == nullptr)
        throw ConfigError("stitch_trajectory: incomplete model set");
    if (!traj.transitions.empty() &&
        traj.transitions.front().state.size() != static_cast<std::size_t>(dataset.d_s))
        throw ConfigError("stitch_trajectory: state dimension mismatch");

    StitchOutcome out;
    out.trajectory.traj_id = traj.traj_id;
    std::unordered_set<std::uint64_t> visited;

    const Trajectory* cur = &traj;
    int idx = 0;
    int out_t = 0;
    int stitches = 0;
    while (idx >= 0 && idx < static_cast<int>(cur->transitions.size())) {
        const Transition& tr = cur->transitions[static_cast<std::size_t>(idx)];
        visited.insert(position_key(cur->traj_id, idx));

        const CandidateSet::Entry* chosen = nullptr;
        double chosen_margin = 0.0;
        double chosen_gain = 0.0;
        const bool may_stitch =
            config.max_stitches_per_traj < 0 || stitches < config.max_stitches_per_traj;
        CandidateSet cands;  // must outlive `chosen`, which points into it
        if (may_stitch) {
            const StateRef exclude{tr.traj_id, tr.t, true};
            cands = candidate_next_states(
                dataset, tr.state, tr.next_state, epsilon, &exclude, config.candidate_cap);
            if (cands.capped) ++out.capped_queries;
            if (!cands.entries.empty()) {
                const double v_obs = models.value->state_value(tr.next_state);
                std::vector<Survivor> survivors;
                for (const auto& entry : cands.entries) {
                    // Loop prevention: never jump to an already-walked position.
                    if (!entry.tail && visited.count(position_key(entry.traj_id, entry.step)))
                        continue;
                    const double margin =
                        models.reachability->log_margin(tr.state, tr.next_state, entry.state);
                    if (!(margin > 0.0)) continue;
                    const double v = models.value->state_value(entry.state);
                    if (!(v > v_obs)) continue;
                    survivors.push_back({&entry, margin, v});
                }
                if (!survivors.empty()) {
                    // argmax V; ties resolved toward the lowest (traj_id, step).
                    const Survivor* best = &survivors.front();
                    for (const auto& s : survivors) {
                        if (s.val > best->val ||
                            (s.val == best->val &&
                             (s.entry->traj_id < best->entry->traj_id ||
                              (s.entry->traj_id == best->entry->traj_id &&
                               s.entry->step < best->entry->step))))
                            best = &s;
                    }
                    chosen = best->entry;
                    chosen_margin = best->margin;
                    chosen_gain = best->val - v_obs;
                }
            }
        }

        if (chosen != nullptr) {
            Vec action = models.action->connect(tr.state, chosen->state, rng);
            const double reward = models.reward->reward(tr.state, action, chosen->state, rng);
            Transition synth;
            synth.traj_id = traj.traj_id;
            synth.t = out_t++;
            synth.state = tr.state;
            synth.action = action;
            synth.reward = reward;
            synth.next_state = chosen->state;
            synth.done = false;
            out.trajectory.transitions.push_back(std::move(synth));
            StitchEvent event;
            event.source_traj = cur->traj_id;
            event.source_t = tr.t;
            event.candidate_traj = chosen->traj_id;
            event.candidate_t = chosen->step;
            event.candidate_tail = chosen->tail;
            event.action = out.trajectory.transitions.back().action;
            event.reward = reward;
            event.log_margin = chosen_margin;
            event.value_gain = chosen_gain;
            out.events.push_back(std::move(event));
            ++stitches;
            if (chosen->tail) break;  // stitched onto a trajectory's final state
            cur = dataset.find_trajectory(chosen->traj_id);
            idx = chosen->step;
        } else {
            Transition copy = tr;
            copy.traj_id = traj.traj_id;
            copy.t = out_t++;
            out.trajectory.transitions.push_back(std::move(copy));
            if (tr.done) break;
            ++idx;
        }
    }
    return out;
}

const Trajectory& accept_or_reject(const Trajectory& original,
                                   const Trajectory& candidate,
                                   double accept_threshold) {
    if (original.transitions.empty() || candidate.transitions.empty())
        throw ConfigError("accept_or_reject: empty trajectory");
    if (!std::isfinite(accept_threshold)) return original;  // reject-all sentinel
    return candidate.reward_sum() > (1.0 + accept_threshold) * original.reward_sum()
               ? candidate
               : original;
}

Vec derive_action_bound(const Dataset& dataset) {
    Vec bound(static_cast<std::size_t>(dataset.d_a), 1e-6);
    for (const auto& traj : dataset.trajectories)
        for (const auto& tr : traj.transitions)
            for (std::size_t i = 0; i < bound.size(); ++i)
                bound[i] = std::max(bound[i], std::abs(tr.action[i]));
    return bound;
}

std::pair<Dataset, StitchReport> run_ts_with_models(
    const Dataset& dataset, const StitchConfig& config, const ModelSet& fixed_models,
    bool refit_value, std::vector<Dataset>* intermediates) {
    if (config.iterations < 1) throw ConfigError("run_ts: iterations must be >= 1");
    if (config.accept_threshold < 0.0 && std::isfinite(config.accept_threshold))
        throw ConfigError("run_ts: accept threshold must be >= 0");

    const double epsilon =
        config.epsilon >= 0.0 ? config.epsilon : default_epsilon(dataset);

    StitchReport report;
    report.epsilon = epsilon;
    report.candidate_cap = config.candidate_cap;
    report.seed = config.seed;

    Dataset current = dataset;
    for (int k = 1; k <= config.iterations; ++k) {
        ModelSet models = fixed_models;
        TwinValue refit;
        if (refit_value) {
            ValueConfig vc = config.value;
            vc.seed = Rng(config.seed).derive(0x100 + static_cast<std::uint64_t>(k)).next_u64();
            refit = train_value(current, vc);
            models.value = nullptr;
        }
        const TwinValueAdapter refit_adapter(refit);
        if (refit_value) models.value = &refit_adapter;

        IterationStats stats;
        stats.iteration = k;
        stats.trajectories = static_cast<int>(current.trajectories.size());
        Dataset next = current;
        next.trajectories.clear();
        for (std::size_t ti = 0; ti < current.trajectories.size(); ++ti) {
            const Trajectory& original = current.trajectories[ti];
            Rng traj_rng = Rng(config.seed).derive(
                (static_cast<std::uint64_t>(k) << 32) | static_cast<std::uint64_t>(ti));
            StitchOutcome outcome =
                stitch_trajectory(original, current, models, config, epsilon, traj_rng);
            report.capped_queries += outcome.capped_queries;
            stats.return_sum_before += original.reward_sum();
            const bool has_events = !outcome.events.empty();
            if (has_events) ++stats.proposed;
            // Only an actual candidate (>= 1 stitch event) faces the
            // acceptance test; an event-free walk copies the original, which
            // the signed rule would otherwise "accept" on negative sums.
            const Trajectory& kept =
                has_events ? accept_or_reject(original, outcome.trajectory,
                                              config.accept_threshold)
                           : original;
            const bool replaced = (&kept == &outcome.trajectory);
            if (replaced) {
                ++stats.accepted;
                stats.events += static_cast<int>(outcome.events.size());
                for (auto& e : outcome.events) {
                    e.iteration = k;
                    report.events.push_back(std::move(e));
                }
            }
            stats.return_sum_after += kept.reward_sum();
            next.trajectories.push_back(kept);
        }
        next.rebuild_index();
        report.iterations.push_back(stats);
        current = std::move(next);
        if (intermediates != nullptr) intermediates->push_back(current);
    }
    return {std::move(current), std::move(report)};
}

std::pair<Dataset, StitchReport> run_ts(const Dataset& dataset,
                                        const StitchConfig& config,
                                        std::vector<Dataset>* intermediates) {
    StitchConfig cfg = config;
    if (cfg.action_bound.empty()) cfg.action_bound = derive_action_bound(dataset);

    DynamicsConfig dc = cfg.dynamics;
    dc.seed = Rng(cfg.seed).derive(1).next_u64();
    const DynamicsEnsemble dynamics = train_dynamics(dataset, dc);

    CvaeConfig cc = cfg.cvae;
    cc.seed = Rng(cfg.seed).derive(2).next_u64();
    const InverseCVAE cvae = train_cvae(dataset, cfg.action_bound, cc);

    WganConfig wc = cfg.wgan;
    wc.seed = Rng(cfg.seed).derive(3).next_u64();
    const RewardGAN wgan = train_wgan(dataset, wc);

    const EnsembleReachability reach(dynamics);
    const CvaeActionModel action(cvae, cfg.latent_mode);
    const WganRewardModel reward(wgan);
    ModelSet models;
    models.reachability = &reach;
    models.action = &action;
    models.reward = &reward;
    return run_ts_with_models(dataset, cfg, models, /*refit_value=*/true, intermediates);
}

std::string StitchReport::to_json() const {
    nlohmann::json j;
    j["epsilon"] = epsilon;
    j["candidate_cap"] = candidate_cap;
    j["seed"] = seed;
    j["capped_queries"] = capped_queries;
    nlohmann::json iters = nlohmann::json::array();
    for (const auto& it : iterations) {
        iters.push_back({{"iteration", it.iteration},
                         {"trajectories", it.trajectories},
                         {"proposed", it.proposed},
                         {"accepted", it.accepted},
                         {"events", it.events},
                         {"return_sum_before", it.return_sum_before},
                         {"return_sum_after", it.return_sum_after}});
    }
    j["iterations"] = iters;
    nlohmann::json evs = nlohmann::json::array();
    for (const auto& e : events) {
        evs.push_back({{"iteration", e.iteration},
                       {"source", {e.source_traj, e.source_t}},
                       {"candidate", {e.candidate_traj, e.candidate_t}},
                       {"candidate_tail", e.candidate_tail},
                       {"action", e.action},
                       {"reward", e.reward},
                       {"log_margin", e.log_margin},
                       {"value_gain", e.value_gain}});
    }
    j["events"] = evs;
    return j.dump(2);
}

}  // namespace stitchkit
