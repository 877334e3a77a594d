#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "stitchkit/data.hpp"
#include "stitchkit/nn.hpp"
#include "stitchkit/value.hpp"

namespace stitchkit {

enum class PolicyVariant { Deterministic, Gaussian };

struct Policy {
    PolicyVariant variant = PolicyVariant::Deterministic;
    Network net;  // tanh_scaled at the action bounds, or gaussian (mean + log_std)
    Vec action_bound;
    NormStats norm;
};

struct BcConfig {
    std::vector<int> hidden = {256, 256};
    double lr = 1e-3;
    int batch = 256;
    long steps = 100000;
    long checkpoint_start = 40000;
    long checkpoint_every = 10000;
    double weight_shift_delta = 1e-3;  // weighted BC: weights = V - min(V) + delta
    std::uint64_t seed = 0;
};

struct BCTrainLog {
    struct Checkpoint {
        long step = 0;
        double score = 0.0;
        double train_loss = 0.0;
    };
    std::vector<Checkpoint> checkpoints;
    long selected_step = 0;

    std::string to_json() const;
};

// Scores a candidate policy; typically mean return over evaluation episodes.
using PolicyEvaluator = std::function<double(const Policy&)>;

// Deterministic BC: minimizes E[(pi(s) - a)^2], keeps the checkpoint the
// evaluator scores highest. Evaluator failure falls back to the final
// checkpoint with a warning.
std::pair<Policy, BCTrainLog> train_bc(const Dataset& dataset, const Vec& action_bound,
                                       const BcConfig& config,
                                       const PolicyEvaluator& evaluator);

// Gaussian BC by maximum likelihood (for the KL comparison).
Policy train_bc_gaussian(const Dataset& dataset, const Vec& action_bound,
                         const BcConfig& config);

// Value-weighted BC: E[w(s) (pi(s) - a)^2] with w = V - min(V) + delta.
std::pair<Policy, BCTrainLog> train_weighted_bc(const Dataset& dataset,
                                                const TwinValue& value_model,
                                                const Vec& action_bound,
                                                const BcConfig& config,
                                                const PolicyEvaluator& evaluator);

enum class ActMode { Mean, Sample };

Vec act(const Policy& policy, const Vec& s, ActMode mode, Rng* rng = nullptr);

// Gaussian-policy log density of an action; ConfigError for deterministic.
double policy_log_density(const Policy& policy, const Vec& s, const Vec& a);

void save_policy(const Policy& policy, const std::string& path);
Policy load_policy(const std::string& path);

}  // namespace stitchkit
