#include "stitchkit/env.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

#include "stitchkit/errors.hpp"

namespace stitchkit {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

}  // namespace

Vec PointMassEnv::reset(Rng& rng) const {
    return {rng.uniform(-1.0, 0.0), rng.uniform(-1.0, 0.0), 0.0, 0.0};
}

PointMassEnv::StepResult PointMassEnv::step(const Vec& s, const Vec& a, int t) const {
    StepResult res;
    const double ax = std::clamp(a[0], -1.0, 1.0);
    const double ay = std::clamp(a[1], -1.0, 1.0);
    res.next_state = {s[0] + s[2] * dt, s[1] + s[3] * dt,
                      std::clamp(s[2] + ax * dt, -vel_clip, vel_clip),
                      std::clamp(s[3] + ay * dt, -vel_clip, vel_clip)};
    const double dx = res.next_state[0] - goal[0];
    const double dy = res.next_state[1] - goal[1];
    res.reward = -std::sqrt(dx * dx + dy * dy);
    res.done = (t + 1 >= horizon);
    return res;
}

Vec ExpertPolicy::mean_action(const PointMassEnv& env, const Vec& s) const {
    return {std::clamp(kp * (env.goal[0] - s[0]) - kd * s[2], -1.0, 1.0),
            std::clamp(kp * (env.goal[1] - s[1]) - kd * s[3], -1.0, 1.0)};
}

Vec ExpertPolicy::sample_action(const PointMassEnv& env, const Vec& s, Rng& rng) const {
    Vec a = mean_action(env, s);
    for (double& v : a) v += gaussian_std * rng.normal();
    return a;
}

double ExpertPolicy::log_density(const PointMassEnv& env, const Vec& s,
                                 const Vec& a) const {
    const Vec mu = mean_action(env, s);
    double logp = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const double r = (a[j] - mu[j]) / gaussian_std;
        logp -= 0.5 * (r * r + kLog2Pi) + std::log(gaussian_std);
    }
    return logp;
}

Dataset generate_mixture_dataset(const PointMassEnv& env, const ExpertPolicy& expert,
                                 const MixtureSpec& spec, Rng& rng) {
    if (spec.n_trajectories <= 0)
        throw ConfigError("generate_mixture_dataset: need at least one trajectory");
    const int n_expert = static_cast<int>(
        std::llround(spec.expert_fraction_pct / 100.0 * spec.n_trajectories));
    std::vector<bool> is_expert(static_cast<std::size_t>(spec.n_trajectories), false);
    for (int i = 0; i < n_expert; ++i) is_expert[static_cast<std::size_t>(i)] = true;
    for (std::size_t i = is_expert.size(); i > 1; --i) {
        const std::size_t j = rng.uniform_index(i);
        const bool tmp = is_expert[i - 1];
        is_expert[i - 1] = is_expert[j];
        is_expert[j] = tmp;
    }

    Dataset ds;
    ds.d_s = PointMassEnv::state_dim;
    ds.d_a = PointMassEnv::action_dim;
    for (int id = 0; id < spec.n_trajectories; ++id) {
        Trajectory traj;
        traj.traj_id = id;
        Vec s = env.reset(rng);
        for (int t = 0; t < env.horizon; ++t) {
            Vec a = expert.mean_action(env, s);
            if (!is_expert[static_cast<std::size_t>(id)]) {
                for (double& v : a)
                    v = std::clamp(v + spec.noise_std * rng.normal(), -1.0, 1.0);
            }
            const auto res = env.step(s, a, t);
            traj.transitions.push_back(
                {id, t, s, a, res.reward, res.next_state, res.done});
            s = res.next_state;
            if (res.done) break;
        }
        ds.trajectories.push_back(std::move(traj));
    }
    ds.rebuild_index();
    return ds;
}

EvalResult evaluate_policy(const PointMassEnv& env, const Policy& policy,
                           int episodes, int seeds, std::uint64_t base_seed) {
    EvalResult result;
    for (int i = 0; i < seeds; ++i) {
        Rng rng = Rng(base_seed).derive(0xe7a1 + static_cast<std::uint64_t>(i));
        double sum = 0.0;
        for (int ep = 0; ep < episodes; ++ep) {
            Vec s = env.reset(rng);
            for (int t = 0; t < env.horizon; ++t) {
                const Vec a = act(policy, s, ActMode::Mean);
                const auto res = env.step(s, a, t);
                sum += res.reward;
                s = res.next_state;
                if (res.done) break;
            }
        }
        result.per_seed.push_back(sum / episodes);
    }
    result.mean = std::accumulate(result.per_seed.begin(), result.per_seed.end(), 0.0) /
                  static_cast<double>(seeds);
    double var = 0.0;
    for (double v : result.per_seed) var += (v - result.mean) * (v - result.mean);
    result.std = seeds > 1 ? std::sqrt(var / static_cast<double>(seeds - 1)) : 0.0;
    return result;
}

KlEstimate kl_divergence_estimate(const PointMassEnv& env, const ExpertPolicy& expert,
                                  const Policy& policy, int episodes,
                                  std::uint64_t seed) {
    if (policy.variant != PolicyVariant::Gaussian)
        throw ConfigError("kl_divergence_estimate: policy must be Gaussian");
    Rng rng = Rng(seed).derive(0x77);
    double sum = 0.0;
    double sum_sq = 0.0;
    long n = 0;
    for (int ep = 0; ep < episodes; ++ep) {
        Vec s = env.reset(rng);
        for (int t = 0; t < env.horizon; ++t) {
            const Vec a = expert.sample_action(env, s, rng);
            const double x = expert.log_density(env, s, a) - policy_log_density(policy, s, a);
            sum += x;
            sum_sq += x * x;
            ++n;
            const auto res = env.step(s, a, t);
            s = res.next_state;
            if (res.done) break;
        }
    }
    KlEstimate est;
    est.samples = n;
    est.estimate = sum / static_cast<double>(n);
    const double var =
        std::max(0.0, sum_sq / static_cast<double>(n) - est.estimate * est.estimate);
    est.std_error = std::sqrt(var / static_cast<double>(n));
    return est;
}

std::vector<Vec> collect_expert_states(const PointMassEnv& env,
                                       const ExpertPolicy& expert, int episodes,
                                       std::uint64_t seed) {
    Rng rng = Rng(seed).derive(0x57a7e5);
    std::vector<Vec> states;
    for (int ep = 0; ep < episodes; ++ep) {
        Vec s = env.reset(rng);
        for (int t = 0; t < env.horizon; ++t) {
            states.push_back(s);
            const auto res = env.step(s, expert.mean_action(env, s), t);
            s = res.next_state;
            if (res.done) break;
        }
    }
    return states;
}

double action_mse(const PointMassEnv& env, const ExpertPolicy& expert,
                  const Policy& policy, const std::vector<Vec>& states) {
    if (states.empty()) throw ConfigError("action_mse: no states");
    double total = 0.0;
    for (const Vec& s : states) {
        const Vec mu = expert.mean_action(env, s);
        const Vec a = act(policy, s, ActMode::Mean);
        for (std::size_t j = 0; j < mu.size(); ++j) {
            const double r = mu[j] - a[j];
            total += r * r;
        }
    }
    return total / static_cast<double>(states.size());
}

Vec scaled_kl_difference(const Vec& bc_kls, const Vec& tsbc_kls) {
    if (bc_kls.size() != tsbc_kls.size())
        throw ConfigError("scaled_kl_difference: series length mismatch");
    double lo = bc_kls.empty() ? 0.0 : bc_kls.front();
    double hi = lo;
    for (const Vec* series : {&bc_kls, &tsbc_kls})
        for (double v : *series) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    Vec diff(bc_kls.size(), 0.0);
    if (hi - lo <= 0.0) {
        std::cerr << "warning: scaled_kl_difference on a constant series\n";
        return diff;
    }
    const double span = hi - lo;
    for (std::size_t i = 0; i < diff.size(); ++i)
        diff[i] = (bc_kls[i] - lo) / span - (tsbc_kls[i] - lo) / span;
    return diff;
}

}  // namespace stitchkit
