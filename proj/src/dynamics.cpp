#include "stitchkit/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "stitchkit/errors.hpp"

namespace stitchkit {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

struct Pair {
    Vec s;   // normalized state
    Vec s2;  // normalized next state
};

std::vector<Pair> collect_pairs(const Dataset& dataset, const NormStats& norm) {
    std::vector<Pair> pairs;
    pairs.reserve(dataset.transition_count());
    for (const auto& traj : dataset.trajectories)
        for (const auto& tr : traj.transitions)
            pairs.push_back({norm.normalize(tr.state), norm.normalize(tr.next_state)});
    return pairs;
}

// Eq.-style Gaussian NLL without the 2pi constant; used for both training
// gradients and the validation score that picks elites.
double nll_and_upstream(const Vec& out, const Vec& target, Vec* upstream) {
    const std::size_t d = target.size();
    double loss = 0.0;
    if (upstream != nullptr) upstream->assign(2 * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        const double mu = out[i];
        const double ls = out[d + i];
        const double inv_var = std::exp(-2.0 * ls);
        const double r = mu - target[i];
        loss += r * r * inv_var + 2.0 * ls;
        if (upstream != nullptr) {
            (*upstream)[i] = 2.0 * r * inv_var;
            (*upstream)[d + i] = -2.0 * r * r * inv_var + 2.0;
        }
    }
    return loss;
}

double member_log_density(const Network& net, const NormStats& norm, const Vec& s,
                          const Vec& s_next) {
    const Vec out = forward(net, norm.normalize(s));
    const Vec y = norm.normalize(s_next);
    const std::size_t d = y.size();
    double logp = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double r = y[i] - out[i];
        const double ls = out[d + i];
        logp -= 0.5 * (r * r * std::exp(-2.0 * ls) + 2.0 * ls + kLog2Pi);
    }
    return logp;
}

}  // namespace

DynamicsEnsemble train_dynamics(const Dataset& dataset, const DynamicsConfig& config) {
    if (dataset.transition_count() < 2) throw ConfigError("train_dynamics: dataset too small");
    if (config.n_elites > config.ensemble_size)
        throw ConfigError("train_dynamics: n_elites exceeds ensemble size");
    DynamicsEnsemble ensemble;
    ensemble.norm = normalization_stats(dataset);
    const auto pairs = collect_pairs(dataset, ensemble.norm);
    const int d_s = dataset.d_s;

    Rng split_rng = Rng(config.seed).derive(0x511);
    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[split_rng.uniform_index(i)]);
    std::size_t n_val = static_cast<std::size_t>(
        std::llround(config.val_fraction * static_cast<double>(pairs.size())));
    n_val = std::min(std::max<std::size_t>(n_val, 1), pairs.size() - 1);
    const std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<long>(n_val));
    const std::vector<std::size_t> train_idx(order.begin() + static_cast<long>(n_val), order.end());

    std::vector<int> sizes;
    sizes.push_back(d_s);
    for (int h : config.hidden) sizes.push_back(h);
    sizes.push_back(2 * d_s);

    for (int m = 0; m < config.ensemble_size; ++m) {
        Rng rng = Rng(config.seed).derive(0x0d1 + static_cast<std::uint64_t>(m));
        Network net = make_network(sizes, Head::Gaussian, rng, {}, config.log_std_min,
                                   config.log_std_max);
        OptimizerState opt = make_adam(net, config.lr);
        Network best = net;
        double best_nll = std::numeric_limits<double>::infinity();
        int stale = 0;
        const std::size_t batches_per_epoch =
            std::max<std::size_t>(1, train_idx.size() / static_cast<std::size_t>(config.batch));
        Vec upstream;
        for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
            for (std::size_t b = 0; b < batches_per_epoch; ++b) {
                Gradients grads = zero_gradients(net);
                double batch_loss = 0.0;
                for (int k = 0; k < config.batch; ++k) {
                    const Pair& p = pairs[train_idx[rng.uniform_index(train_idx.size())]];
                    const ForwardTrace trace = forward_trace(net, p.s);
                    batch_loss += nll_and_upstream(trace.output, p.s2, &upstream);
                    backward_accumulate(net, trace, upstream, grads);
                }
                if (!std::isfinite(batch_loss))
                    throw TrainingFault("dynamics member " + std::to_string(m) +
                                        ": non-finite training loss");
                scale_gradients(grads, 1.0 / config.batch);
                adam_step(net, grads, opt);
            }
            double val = 0.0;
            for (std::size_t i : val_idx)
                val += nll_and_upstream(forward(net, pairs[i].s), pairs[i].s2, nullptr);
            val /= static_cast<double>(val_idx.size());
            if (!std::isfinite(val))
                throw TrainingFault("dynamics member " + std::to_string(m) +
                                    ": non-finite validation loss");
            if (val < best_nll - 1e-9) {
                best_nll = val;
                best = net;
                stale = 0;
            } else if (++stale >= config.patience) {
                break;
            }
        }
        ensemble.members.push_back({std::move(best), best_nll});
    }

    std::vector<int> idx(ensemble.members.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        return ensemble.members[static_cast<std::size_t>(a)].val_nll <
               ensemble.members[static_cast<std::size_t>(b)].val_nll;
    });
    ensemble.elites.assign(idx.begin(), idx.begin() + config.n_elites);
    return ensemble;
}

double log_density(const DynamicsEnsemble& ensemble, int member, const Vec& s,
                   const Vec& s_next) {
    return member_log_density(ensemble.members[static_cast<std::size_t>(member)].net,
                              ensemble.norm, s, s_next);
}

double reachability_margin(const DynamicsEnsemble& ensemble, const Vec& s,
                           const Vec& s_next_observed, const Vec& s_next_candidate) {
    double min_cand = std::numeric_limits<double>::infinity();
    Vec obs_logp;
    obs_logp.reserve(ensemble.elites.size());
    for (int e : ensemble.elites) {
        min_cand = std::min(min_cand, log_density(ensemble, e, s, s_next_candidate));
        obs_logp.push_back(log_density(ensemble, e, s, s_next_observed));
    }
    // mean of densities computed in the log domain:
    // logsumexp(l_obs) - log(n_elites).
    const double peak = *std::max_element(obs_logp.begin(), obs_logp.end());
    double acc = 0.0;
    for (double l : obs_logp) acc += std::exp(l - peak);
    const double log_mean_obs =
        peak + std::log(acc) - std::log(static_cast<double>(obs_logp.size()));
    return min_cand - log_mean_obs;
}

bool reachability_check(const DynamicsEnsemble& ensemble, const Vec& s,
                        const Vec& s_next_observed, const Vec& s_next_candidate) {
    return reachability_margin(ensemble, s, s_next_observed, s_next_candidate) > 0.0;
}

void save_dynamics(const DynamicsEnsemble& ensemble, const std::string& prefix) {
    nlohmann::json manifest;
    manifest["elites"] = ensemble.elites;
    manifest["state_mean"] = ensemble.norm.mean;
    manifest["state_std"] = ensemble.norm.std;
    nlohmann::json members = nlohmann::json::array();
    for (std::size_t m = 0; m < ensemble.members.size(); ++m) {
        const std::string path = prefix + ".member" + std::to_string(m) + ".json";
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw IoError("cannot write " + path);
        out << network_to_json(ensemble.members[m].net) << "\n";
        members.push_back({{"file", path}, {"val_nll", ensemble.members[m].val_nll}});
    }
    manifest["members"] = members;
    const std::string path = prefix + ".manifest.json";
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << manifest.dump(2) << "\n";
}

DynamicsEnsemble load_dynamics(const std::string& prefix) {
    const std::string manifest_path = prefix + ".manifest.json";
    std::ifstream in(manifest_path);
    if (!in) throw ParseError("cannot open " + manifest_path);
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(manifest_path + ": " + e.what());
    }
    DynamicsEnsemble ensemble;
    ensemble.elites = manifest.at("elites").get<std::vector<int>>();
    ensemble.norm.mean = manifest.at("state_mean").get<Vec>();
    ensemble.norm.std = manifest.at("state_std").get<Vec>();
    for (const auto& member : manifest.at("members")) {
        std::ifstream min(member.at("file").get<std::string>());
        if (!min) throw ParseError("cannot open member checkpoint");
        std::string text((std::istreambuf_iterator<char>(min)),
                         std::istreambuf_iterator<char>());
        ensemble.members.push_back(
            {network_from_json(text), member.value("val_nll", 0.0)});
    }
    return ensemble;
}

}  // namespace stitchkit
