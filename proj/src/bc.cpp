#include "stitchkit/bc.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>

#include <json.hpp>

#include "stitchkit/errors.hpp"

namespace stitchkit {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

struct Row {
    Vec s;  // normalized
    const Vec* a;
    double weight = 1.0;
};

std::vector<Row> collect_rows(const Dataset& dataset, const NormStats& norm) {
    std::vector<Row> rows;
    rows.reserve(dataset.transition_count());
    for (const auto& traj : dataset.trajectories)
        for (const auto& tr : traj.transitions)
            rows.push_back({norm.normalize(tr.state), &tr.action, 1.0});
    return rows;
}

// Shared loop for plain and weighted deterministic BC.
std::pair<Policy, BCTrainLog> train_bc_impl(const Dataset& dataset,
                                            const Vec& action_bound,
                                            const BcConfig& config,
                                            const PolicyEvaluator& evaluator,
                                            std::vector<Row> rows) {
    Policy policy;
    policy.variant = PolicyVariant::Deterministic;
    policy.action_bound = action_bound;
    policy.norm = normalization_stats(dataset);
    for (auto& row : rows) row.s = policy.norm.normalize(row.s);

    Rng rng = Rng(config.seed).derive(0xbc);
    std::vector<int> sizes{dataset.d_s};
    for (int h : config.hidden) sizes.push_back(h);
    sizes.push_back(dataset.d_a);
    policy.net = make_network(sizes, Head::TanhScaled, rng, action_bound);
    OptimizerState opt = make_adam(policy.net, config.lr);

    BCTrainLog log;
    Network best = policy.net;
    double best_score = -std::numeric_limits<double>::infinity();
    long best_step = 0;
    double running_loss = 0.0;
    long running_count = 0;
    bool evaluator_failed = false;

    for (long step = 1; step <= config.steps; ++step) {
        Gradients grads = zero_gradients(policy.net);
        double loss = 0.0;
        for (int k = 0; k < config.batch; ++k) {
            const Row& row = rows[rng.uniform_index(rows.size())];
            const ForwardTrace trace = forward_trace(policy.net, row.s);
            Vec up(trace.output.size());
            for (std::size_t j = 0; j < up.size(); ++j) {
                const double r = trace.output[j] - (*row.a)[j];
                loss += row.weight * r * r;
                up[j] = 2.0 * row.weight * r;
            }
            backward_accumulate(policy.net, trace, up, grads);
        }
        loss /= config.batch;
        if (!std::isfinite(loss))
            throw TrainingFault("bc: non-finite loss at step " + std::to_string(step));
        running_loss += loss;
        ++running_count;
        scale_gradients(grads, 1.0 / config.batch);
        adam_step(policy.net, grads, opt);

        const bool at_checkpoint =
            step >= config.checkpoint_start &&
            (step - config.checkpoint_start) % config.checkpoint_every == 0;
        if (at_checkpoint || step == config.steps) {
            BCTrainLog::Checkpoint ck;
            ck.step = step;
            ck.train_loss = running_loss / static_cast<double>(running_count);
            running_loss = 0.0;
            running_count = 0;
            if (!evaluator_failed && evaluator) {
                Policy snapshot = policy;
                try {
                    ck.score = evaluator(snapshot);
                } catch (const std::exception& e) {
                    std::cerr << "warning: bc evaluator failed (" << e.what()
                              << "); falling back to final checkpoint\n";
                    evaluator_failed = true;
                    ck.score = -std::numeric_limits<double>::infinity();
                }
            } else {
                ck.score = -std::numeric_limits<double>::infinity();
            }
            if (at_checkpoint) log.checkpoints.push_back(ck);
            if (ck.score > best_score) {
                best_score = ck.score;
                best = policy.net;
                best_step = step;
            }
        }
    }
    if (evaluator_failed || !evaluator || log.checkpoints.empty() ||
        !std::isfinite(best_score)) {
        log.selected_step = config.steps;  // final checkpoint fallback
    } else {
        policy.net = best;
        log.selected_step = best_step;
    }
    return {std::move(policy), std::move(log)};
}

}  // namespace

std::pair<Policy, BCTrainLog> train_bc(const Dataset& dataset, const Vec& action_bound,
                                       const BcConfig& config,
                                       const PolicyEvaluator& evaluator) {
    if (dataset.transition_count() < 2) throw ConfigError("train_bc: dataset too small");
    std::vector<Row> rows;
    rows.reserve(dataset.transition_count());
    for (const auto& traj : dataset.trajectories)
        for (const auto& tr : traj.transitions)
            rows.push_back({tr.state, &tr.action, 1.0});
    return train_bc_impl(dataset, action_bound, config, evaluator, std::move(rows));
}

std::pair<Policy, BCTrainLog> train_weighted_bc(const Dataset& dataset,
                                                const TwinValue& value_model,
                                                const Vec& action_bound,
                                                const BcConfig& config,
                                                const PolicyEvaluator& evaluator) {
    if (dataset.transition_count() < 2)
        throw ConfigError("train_weighted_bc: dataset too small");
    std::vector<Row> rows;
    rows.reserve(dataset.transition_count());
    double min_v = std::numeric_limits<double>::infinity();
    for (const auto& traj : dataset.trajectories)
        for (const auto& tr : traj.transitions) {
            const double v = value(value_model, tr.state);
            min_v = std::min(min_v, v);
            rows.push_back({tr.state, &tr.action, v});
        }
    double total = 0.0;
    for (auto& row : rows) {
        row.weight = row.weight - min_v + config.weight_shift_delta;
        total += row.weight;
    }
    if (!(total > 0.0)) throw ConfigError("train_weighted_bc: all-zero weights");
    // Mean-1 normalization keeps the effective learning rate independent of
    // the value function's scale (and makes constant values exactly plain BC).
    const double mean_w = total / static_cast<double>(rows.size());
    for (auto& row : rows) row.weight /= mean_w;
    return train_bc_impl(dataset, action_bound, config, evaluator, std::move(rows));
}

Policy train_bc_gaussian(const Dataset& dataset, const Vec& action_bound,
                         const BcConfig& config) {
    if (dataset.transition_count() < 2)
        throw ConfigError("train_bc_gaussian: dataset too small");
    Policy policy;
    policy.variant = PolicyVariant::Gaussian;
    policy.action_bound = action_bound;
    policy.norm = normalization_stats(dataset);
    const std::vector<Row> rows = collect_rows(dataset, policy.norm);

    Rng rng = Rng(config.seed).derive(0xbc6);
    const int d_a = dataset.d_a;
    std::vector<int> sizes{dataset.d_s};
    for (int h : config.hidden) sizes.push_back(h);
    sizes.push_back(2 * d_a);
    policy.net = make_network(sizes, Head::Gaussian, rng);
    OptimizerState opt = make_adam(policy.net, config.lr);

    for (long step = 1; step <= config.steps; ++step) {
        Gradients grads = zero_gradients(policy.net);
        double loss = 0.0;
        for (int k = 0; k < config.batch; ++k) {
            const Row& row = rows[rng.uniform_index(rows.size())];
            const ForwardTrace trace = forward_trace(policy.net, row.s);
            Vec up(static_cast<std::size_t>(2 * d_a));
            for (int j = 0; j < d_a; ++j) {
                const double mu = trace.output[static_cast<std::size_t>(j)];
                const double ls = trace.output[static_cast<std::size_t>(d_a + j)];
                const double inv_var = std::exp(-2.0 * ls);
                const double r = mu - (*row.a)[static_cast<std::size_t>(j)];
                loss += 0.5 * (r * r * inv_var + 2.0 * ls + kLog2Pi);
                up[static_cast<std::size_t>(j)] = r * inv_var;
                up[static_cast<std::size_t>(d_a + j)] = -r * r * inv_var + 1.0;
            }
            backward_accumulate(policy.net, trace, up, grads);
        }
        if (!std::isfinite(loss))
            throw TrainingFault("bc_gaussian: non-finite loss at step " +
                                std::to_string(step));
        scale_gradients(grads, 1.0 / config.batch);
        adam_step(policy.net, grads, opt);
    }
    return policy;
}

Vec act(const Policy& policy, const Vec& s, ActMode mode, Rng* rng) {
    const Vec x = policy.norm.normalize(s);
    const Vec out = forward(policy.net, x);
    if (policy.variant == PolicyVariant::Deterministic) return out;
    const std::size_t d_a = policy.action_bound.size();
    Vec a(out.begin(), out.begin() + static_cast<long>(d_a));
    if (mode == ActMode::Sample) {
        if (rng == nullptr) throw ConfigError("act: sample mode needs an rng");
        for (std::size_t j = 0; j < d_a; ++j) {
            a[j] += std::exp(out[d_a + j]) * rng->normal();
            a[j] = std::clamp(a[j], -policy.action_bound[j], policy.action_bound[j]);
        }
    }
    return a;
}

double policy_log_density(const Policy& policy, const Vec& s, const Vec& a) {
    if (policy.variant != PolicyVariant::Gaussian)
        throw ConfigError("policy_log_density: policy has no density");
    const Vec out = forward(policy.net, policy.norm.normalize(s));
    const std::size_t d_a = a.size();
    double logp = 0.0;
    for (std::size_t j = 0; j < d_a; ++j) {
        const double r = a[j] - out[j];
        const double ls = out[d_a + j];
        logp -= 0.5 * (r * r * std::exp(-2.0 * ls) + 2.0 * ls + kLog2Pi);
    }
    return logp;
}

std::string BCTrainLog::to_json() const {
    nlohmann::json j;
    nlohmann::json cks = nlohmann::json::array();
    for (const auto& ck : checkpoints)
        cks.push_back({{"step", ck.step},
                       {"score", std::isfinite(ck.score) ? ck.score : -1e300},
                       {"train_loss", ck.train_loss}});
    j["checkpoints"] = cks;
    j["selected_step"] = selected_step;
    return j.dump(2);
}

void save_policy(const Policy& policy, const std::string& path) {
    nlohmann::json j;
    j["variant"] =
        policy.variant == PolicyVariant::Deterministic ? "deterministic" : "gaussian";
    j["net"] = nlohmann::json::parse(network_to_json(policy.net));
    j["action_bound"] = policy.action_bound;
    j["state_mean"] = policy.norm.mean;
    j["state_std"] = policy.norm.std;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << j.dump() << "\n";
}

Policy load_policy(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    Policy policy;
    const std::string variant = j.at("variant").get<std::string>();
    if (variant == "deterministic") policy.variant = PolicyVariant::Deterministic;
    else if (variant == "gaussian") policy.variant = PolicyVariant::Gaussian;
    else throw ParseError("unknown policy variant: " + variant);
    policy.net = network_from_json(j.at("net").dump());
    policy.action_bound = j.at("action_bound").get<Vec>();
    policy.norm.mean = j.at("state_mean").get<Vec>();
    policy.norm.std = j.at("state_std").get<Vec>();
    return policy;
}

}  // namespace stitchkit
