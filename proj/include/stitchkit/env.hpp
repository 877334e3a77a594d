#pragma once

#include <cstdint>
#include <vector>

#include "stitchkit/bc.hpp"
#include "stitchkit/data.hpp"
#include "stitchkit/rng.hpp"

namespace stitchkit {

// Deterministic 2-D point mass: state [x, y, vx, vy], action [ax, ay] in
// [-1, 1]^2. Position integrates the old velocity, then velocity integrates
// the action. Reward is the negative distance of the new position from the
// goal. Episodes are truncated at `horizon` steps.
struct PointMassEnv {
    static constexpr int state_dim = 4;
    static constexpr int action_dim = 2;
    double dt = 0.1;
    double vel_clip = 2.0;
    int horizon = 50;
    Vec goal{1.0, 1.0};

    Vec reset(Rng& rng) const;  // start uniform in [-1, 0]^2, zero velocity

    struct StepResult {
        Vec next_state;
        double reward = 0.0;
        bool done = false;
    };
    // `t` is the zero-based step index; done fires at the horizon.
    StepResult step(const Vec& s, const Vec& a, int t) const;
};

// PD controller on position error; the Gaussian wrapper (std 0.01) provides a
// continuous expert for the KL comparison.
struct ExpertPolicy {
    double kp = 2.0;
    double kd = 1.0;
    double gaussian_std = 0.01;

    Vec mean_action(const PointMassEnv& env, const Vec& s) const;
    Vec sample_action(const PointMassEnv& env, const Vec& s, Rng& rng) const;
    double log_density(const PointMassEnv& env, const Vec& s, const Vec& a) const;
};

struct MixtureSpec {
    double expert_fraction_pct = 10.0;  // x in {0, 0.1, 2.5, 5, 10, 20, 30, 40}
    double noise_std = 0.5;
    int n_trajectories = 100;
};

// Noisy trajectories use a = clip(expert(s) + eps), expert ones the expert
// mean; the realized expert count is round(x% * n).
Dataset generate_mixture_dataset(const PointMassEnv& env, const ExpertPolicy& expert,
                                 const MixtureSpec& spec, Rng& rng);

struct EvalResult {
    double mean = 0.0;
    double std = 0.0;
    Vec per_seed;
};

// Mean over `seeds` of the mean undiscounted return over `episodes`.
EvalResult evaluate_policy(const PointMassEnv& env, const Policy& policy,
                           int episodes = 10, int seeds = 5,
                           std::uint64_t base_seed = 0);

struct KlEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
    long samples = 0;
};

// Monte-Carlo E_{s~rho_pi*, a~pi*(s)}[log pi*(a|s) - log pi(a|s)] along
// expert rollouts. `policy` must be Gaussian.
KlEstimate kl_divergence_estimate(const PointMassEnv& env, const ExpertPolicy& expert,
                                  const Policy& policy, int episodes,
                                  std::uint64_t seed);

// States visited by expert rollouts, for the action-MSE metric.
std::vector<Vec> collect_expert_states(const PointMassEnv& env,
                                       const ExpertPolicy& expert, int episodes,
                                       std::uint64_t seed);

// Mean over states of ||expert_mean(s) - policy(s)||^2.
double action_mse(const PointMassEnv& env, const ExpertPolicy& expert,
                  const Policy& policy, const std::vector<Vec>& states);

// Min-max scales the pooled KL values to [0, 1] and returns
// scaled(bc) - scaled(tsbc) per fraction; positive means TS+BC is closer to
// the expert. Degenerate (constant) pooled series yield all zeros.
Vec scaled_kl_difference(const Vec& bc_kls, const Vec& tsbc_kls);

}  // namespace stitchkit
