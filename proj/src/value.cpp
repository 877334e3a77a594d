#include "stitchkit/value.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>

#include <json.hpp>

#include "stitchkit/errors.hpp"

namespace stitchkit {

namespace {

struct Row {
    Vec s;   // normalized
    Vec s2;  // normalized
    double r = 0.0;
    bool done = false;
};

double median_of(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

}  // namespace

TwinValue train_value(const Dataset& dataset, const ValueConfig& config) {
    if (dataset.transition_count() < 1) throw ConfigError("train_value: empty dataset");
    TwinValue model;
    model.gamma = config.gamma;
    model.norm = normalization_stats(dataset);

    std::vector<Row> rows;
    rows.reserve(dataset.transition_count());
    for (const auto& traj : dataset.trajectories)
        for (const auto& tr : traj.transitions)
            rows.push_back({model.norm.normalize(tr.state),
                            model.norm.normalize(tr.next_state), tr.reward, tr.done});

    Rng rng = Rng(config.seed).derive(0x7a1);
    std::vector<int> sizes{dataset.d_s};
    for (int h : config.hidden) sizes.push_back(h);
    sizes.push_back(1);
    model.v1 = make_network(sizes, Head::Linear, rng);
    model.v2 = make_network(sizes, Head::Linear, rng);
    model.target1 = model.v1;
    model.target2 = model.v2;

    OptimizerState opt1 = make_adam(model.v1, config.lr);
    OptimizerState opt2 = make_adam(model.v2, config.lr);

    // Divergence detector: abort when the running (smoothed) loss exceeds 10x
    // its median over the most recent 1k steps. Instantaneous batch losses
    // spike after every hard target copy, so they are smoothed first.
    std::deque<double> window;
    double running = 0.0;
    for (long step = 0; step < config.steps; ++step) {
        Gradients g1 = zero_gradients(model.v1);
        Gradients g2 = zero_gradients(model.v2);
        double loss = 0.0;
        for (int k = 0; k < config.batch; ++k) {
            const Row& row = rows[rng.uniform_index(rows.size())];
            double target = row.r;
            if (!row.done) {
                const double tv = std::min(forward(model.target1, row.s2)[0],
                                           forward(model.target2, row.s2)[0]);
                target += config.gamma * tv;
            }
            const ForwardTrace t1 = forward_trace(model.v1, row.s);
            const ForwardTrace t2 = forward_trace(model.v2, row.s);
            const double r1 = t1.output[0] - target;
            const double r2 = t2.output[0] - target;
            loss += r1 * r1 + r2 * r2;
            backward_accumulate(model.v1, t1, Vec{2.0 * r1}, g1);
            backward_accumulate(model.v2, t2, Vec{2.0 * r2}, g2);
        }
        loss /= config.batch;
        if (!std::isfinite(loss))
            throw TrainingFault("value: non-finite loss at step " + std::to_string(step));
        running = step == 0 ? loss : 0.98 * running + 0.02 * loss;
        if (window.size() >= 100) {
            const double med = median_of({window.begin(), window.end()});
            if (med > 0.0 && running > 10.0 * med && step > 1000)
                throw TrainingFault("value: divergence detected at step " +
                                    std::to_string(step));
        }
        window.push_back(running);
        if (window.size() > 1000) window.pop_front();

        scale_gradients(g1, 1.0 / config.batch);
        scale_gradients(g2, 1.0 / config.batch);
        adam_step(model.v1, g1, opt1);
        adam_step(model.v2, g2, opt2);

        if ((step + 1) % config.target_period == 0) {
            model.target1 = model.v1;
            model.target2 = model.v2;
        }
    }
    return model;
}

double value(const TwinValue& model, const Vec& s) {
    const Vec x = model.norm.normalize(s);
    return std::min(forward(model.v1, x)[0], forward(model.v2, x)[0]);
}

void save_value(const TwinValue& model, const std::string& path) {
    nlohmann::json j;
    j["v1"] = nlohmann::json::parse(network_to_json(model.v1));
    j["v2"] = nlohmann::json::parse(network_to_json(model.v2));
    j["gamma"] = model.gamma;
    j["state_mean"] = model.norm.mean;
    j["state_std"] = model.norm.std;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << j.dump() << "\n";
}

TwinValue load_value(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    TwinValue model;
    model.v1 = network_from_json(j.at("v1").dump());
    model.v2 = network_from_json(j.at("v2").dump());
    model.target1 = model.v1;
    model.target2 = model.v2;
    model.gamma = j.at("gamma").get<double>();
    model.norm.mean = j.at("state_mean").get<Vec>();
    model.norm.std = j.at("state_std").get<Vec>();
    return model;
}

}  // namespace stitchkit
