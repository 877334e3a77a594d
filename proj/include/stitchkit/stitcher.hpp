#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stitchkit/cvae.hpp"
#include "stitchkit/data.hpp"
#include "stitchkit/dynamics.hpp"
#include "stitchkit/value.hpp"
#include "stitchkit/wgan.hpp"

namespace stitchkit {

// Model surfaces the stitcher depends on. Production adapters wrap the
// learned models; tests may inject exact oracles instead.
struct ReachabilityModel {
    virtual ~ReachabilityModel() = default;
    // min-elite log density of the candidate minus mean-elite log density of
    // the observed next state; a stitch is admissible when this is > 0.
    virtual double log_margin(const Vec& s, const Vec& s_next_observed,
                              const Vec& s_next_candidate) const = 0;
};

struct StateValueModel {
    virtual ~StateValueModel() = default;
    virtual double state_value(const Vec& s) const = 0;
};

struct ActionModel {
    virtual ~ActionModel() = default;
    virtual Vec connect(const Vec& s, const Vec& s_next, Rng& rng) const = 0;
};

struct RewardModel {
    virtual ~RewardModel() = default;
    virtual double reward(const Vec& s, const Vec& a, const Vec& s_next,
                          Rng& rng) const = 0;
};

struct ModelSet {
    const ReachabilityModel* reachability = nullptr;
    const StateValueModel* value = nullptr;
    const ActionModel* action = nullptr;
    const RewardModel* reward = nullptr;
};

// Adapters over the learned models.
struct EnsembleReachability final : ReachabilityModel {
    const DynamicsEnsemble* ensemble;
    explicit EnsembleReachability(const DynamicsEnsemble& e) : ensemble(&e) {}
    double log_margin(const Vec& s, const Vec& obs, const Vec& cand) const override {
        return reachability_margin(*ensemble, s, obs, cand);
    }
};

struct TwinValueAdapter final : StateValueModel {
    const TwinValue* model;
    explicit TwinValueAdapter(const TwinValue& m) : model(&m) {}
    double state_value(const Vec& s) const override { return value(*model, s); }
};

struct CvaeActionModel final : ActionModel {
    const InverseCVAE* model;
    LatentMode mode = LatentMode::Sample;
    explicit CvaeActionModel(const InverseCVAE& m, LatentMode lm = LatentMode::Sample)
        : model(&m), mode(lm) {}
    Vec connect(const Vec& s, const Vec& s_next, Rng& rng) const override {
        return generate_action(*model, s, s_next, rng, mode);
    }
};

struct WganRewardModel final : RewardModel {
    const RewardGAN* model;
    explicit WganRewardModel(const RewardGAN& m) : model(&m) {}
    double reward(const Vec& s, const Vec& a, const Vec& s_next, Rng& rng) const override {
        return predict_reward(*model, s, a, s_next, rng);
    }
};

struct StitchConfig {
    double accept_threshold = 0.1;  // the (1 + p~) margin
    int iterations = 5;
    double epsilon = -1.0;  // < 0 selects the data-driven default
    int candidate_cap = kCandidateCap;
    int max_stitches_per_traj = -1;  // < 0 means unlimited
    std::uint64_t seed = 0;
    LatentMode latent_mode = LatentMode::Sample;
    Vec action_bound;  // empty: per-dim max |a| over the dataset

    DynamicsConfig dynamics;
    CvaeConfig cvae;
    WganConfig wgan;
    ValueConfig value;
};

struct StitchEvent {
    int iteration = 0;
    int source_traj = 0;
    int source_t = 0;
    int candidate_traj = 0;
    int candidate_t = 0;
    bool candidate_tail = false;
    Vec action;
    double reward = 0.0;
    double log_margin = 0.0;  // > 0 for every recorded event
    double value_gain = 0.0;  // V(candidate) - V(observed), > 0
};

struct IterationStats {
    int iteration = 0;
    int trajectories = 0;
    int proposed = 0;  // trajectories with at least one stitch event
    int accepted = 0;  // trajectories replaced after the reward-sum test
    int events = 0;    // events inside accepted trajectories
    double return_sum_before = 0.0;
    double return_sum_after = 0.0;
};

struct StitchReport {
    double epsilon = 0.0;
    int candidate_cap = 0;
    std::uint64_t seed = 0;
    long capped_queries = 0;  // candidate searches truncated by the cap
    std::vector<IterationStats> iterations;
    std::vector<StitchEvent> events;  // events of accepted trajectories only

    std::string to_json() const;
};

struct StitchOutcome {
    Trajectory trajectory;
    std::vector<StitchEvent> events;
    long capped_queries = 0;
};

// Walks `traj` once against `dataset`, stitching wherever the reachability,
// value, and neighborhood criteria all pass. States in the result are all
// dataset states; only actions/rewards at stitch points are synthetic.
StitchOutcome stitch_trajectory(const Trajectory& traj, const Dataset& dataset,
                                const ModelSet& models, const StitchConfig& config,
                                double epsilon, Rng& rng);

// Candidate replaces the original iff its reward sum strictly exceeds
// (1 + accept_threshold) times the original's. A non-finite threshold is the
// reject-all sentinel.
const Trajectory& accept_or_reject(const Trajectory& original,
                                   const Trajectory& candidate,
                                   double accept_threshold);

// Full iterated TS: dynamics/CVAE/WGAN trained once on the input dataset, the
// value function refit each iteration. When `intermediates` is non-null it
// receives D_1..D_K.
std::pair<Dataset, StitchReport> run_ts(const Dataset& dataset,
                                        const StitchConfig& config,
                                        std::vector<Dataset>* intermediates = nullptr);

// Variant with pre-trained fixed models (value still refit per iteration
// unless `fixed_value` is set). Used by run_ts and by the oracle tests.
std::pair<Dataset, StitchReport> run_ts_with_models(
    const Dataset& dataset, const StitchConfig& config, const ModelSet& fixed_models,
    bool refit_value, std::vector<Dataset>* intermediates = nullptr);

Vec derive_action_bound(const Dataset& dataset);

}  // namespace stitchkit
