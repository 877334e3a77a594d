#include "stitchkit/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include <json.hpp>

#include "stitchkit/errors.hpp"

namespace stitchkit {

namespace {

void check_architecture(const Network& net) {
    if (net.layer_sizes.size() < 2) throw ConfigError("network needs at least one layer");
    if (net.weights.size() != net.layer_sizes.size() - 1 ||
        net.biases.size() != net.weights.size()) {
        throw ConfigError("layer count mismatch between sizes and parameters");
    }
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        const std::size_t rows = static_cast<std::size_t>(net.layer_sizes[l + 1]);
        const std::size_t cols = static_cast<std::size_t>(net.layer_sizes[l]);
        if (net.weights[l].size() != rows * cols || net.biases[l].size() != rows) {
            throw ConfigError("weight shape does not chain with layer_sizes at layer " +
                              std::to_string(l));
        }
    }
    if (net.head == Head::TanhScaled &&
        net.scale.size() != static_cast<std::size_t>(net.layer_sizes.back())) {
        throw ConfigError("tanh_scaled head needs one scale per output dim");
    }
    if (net.head == Head::Gaussian && net.layer_sizes.back() % 2 != 0) {
        throw ConfigError("gaussian head needs an even output layer");
    }
}

Vec apply_head(const Network& net, const Vec& pre) {
    switch (net.head) {
        case Head::Linear:
            return pre;
        case Head::TanhScaled: {
            Vec out(pre.size());
            for (std::size_t i = 0; i < pre.size(); ++i)
                out[i] = net.scale[i] * std::tanh(pre[i]);
            return out;
        }
        case Head::Gaussian: {
            Vec out = pre;
            const std::size_t half = pre.size() / 2;
            for (std::size_t i = half; i < pre.size(); ++i)
                out[i] = std::clamp(out[i], net.log_std_min, net.log_std_max);
            return out;
        }
    }
    return pre;
}

// d(loss)/d(pre_last) given d(loss)/d(head output).
Vec head_backward(const Network& net, const Vec& pre, const Vec& upstream) {
    switch (net.head) {
        case Head::Linear:
            return upstream;
        case Head::TanhScaled: {
            Vec d(pre.size());
            for (std::size_t i = 0; i < pre.size(); ++i) {
                const double th = std::tanh(pre[i]);
                d[i] = upstream[i] * net.scale[i] * (1.0 - th * th);
            }
            return d;
        }
        case Head::Gaussian: {
            Vec d = upstream;
            const std::size_t half = pre.size() / 2;
            for (std::size_t i = half; i < pre.size(); ++i) {
                if (pre[i] <= net.log_std_min || pre[i] >= net.log_std_max) d[i] = 0.0;
            }
            return d;
        }
    }
    return upstream;
}

}  // namespace

std::size_t Network::param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l)
        n += weights[l].size() + biases[l].size();
    return n;
}

Network make_network(const std::vector<int>& layer_sizes, Head head, Rng& rng,
                     Vec scale, double log_std_min, double log_std_max) {
    Network net;
    net.layer_sizes = layer_sizes;
    net.head = head;
    net.scale = std::move(scale);
    net.log_std_min = log_std_min;
    net.log_std_max = log_std_max;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        const int fan_in = layer_sizes[l];
        const int fan_out = layer_sizes[l + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        Vec w(static_cast<std::size_t>(fan_in) * fan_out);
        for (double& x : w) x = rng.uniform(-bound, bound);
        net.weights.push_back(std::move(w));
        net.biases.emplace_back(fan_out, 0.0);
    }
    check_architecture(net);
    return net;
}

ForwardTrace forward_trace(const Network& net, const Vec& input) {
    check_architecture(net);
    if (input.size() != static_cast<std::size_t>(net.input_dim()))
        throw ConfigError("forward: input length " + std::to_string(input.size()) +
                          " != first layer size " + std::to_string(net.input_dim()));
    ForwardTrace trace;
    trace.post.reserve(net.layer_count());
    trace.post.push_back(input);
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        const Vec& x = trace.post.back();
        const int rows = net.layer_sizes[l + 1];
        const int cols = net.layer_sizes[l];
        Vec y(net.biases[l]);
        const double* w = net.weights[l].data();
        for (int r = 0; r < rows; ++r) {
            double acc = 0.0;
            const double* wr = w + static_cast<std::size_t>(r) * cols;
            for (int c = 0; c < cols; ++c) acc += wr[c] * x[c];
            y[r] += acc;
        }
        if (l + 1 < net.layer_count()) {
            for (double& v : y) v = v > 0.0 ? v : 0.0;  // ReLU
            trace.post.push_back(std::move(y));
        } else {
            trace.pre_last = std::move(y);
        }
    }
    trace.output = apply_head(net, trace.pre_last);
    return trace;
}

Vec forward(const Network& net, const Vec& input) {
    return forward_trace(net, input).output;
}

Gradients zero_gradients(const Network& net) {
    Gradients g;
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        g.weights.emplace_back(net.weights[l].size(), 0.0);
        g.biases.emplace_back(net.biases[l].size(), 0.0);
    }
    g.input.assign(net.input_dim(), 0.0);
    return g;
}

void backward_accumulate(const Network& net, const ForwardTrace& trace,
                         const Vec& upstream, Gradients& acc) {
    if (upstream.size() != trace.output.size())
        throw ConfigError("backward: upstream gradient length does not match output");
    Vec delta = head_backward(net, trace.pre_last, upstream);
    for (std::size_t li = net.layer_count(); li-- > 0;) {
        const int rows = net.layer_sizes[li + 1];
        const int cols = net.layer_sizes[li];
        const Vec& x = trace.post[li];
        double* gw = acc.weights[li].data();
        for (int r = 0; r < rows; ++r) {
            const double d = delta[r];
            acc.biases[li][r] += d;
            double* gwr = gw + static_cast<std::size_t>(r) * cols;
            for (int c = 0; c < cols; ++c) gwr[c] += d * x[c];
        }
        Vec prev(cols, 0.0);
        const double* w = net.weights[li].data();
        for (int r = 0; r < rows; ++r) {
            const double d = delta[r];
            const double* wr = w + static_cast<std::size_t>(r) * cols;
            for (int c = 0; c < cols; ++c) prev[c] += d * wr[c];
        }
        if (li > 0) {
            // ReLU mask of the producing layer.
            for (int c = 0; c < cols; ++c)
                if (x[c] <= 0.0) prev[c] = 0.0;
            delta = std::move(prev);
        } else {
            for (int c = 0; c < cols; ++c) acc.input[c] += prev[c];
        }
    }
}

Gradients backward(const Network& net, const Vec& input, const Vec& upstream) {
    Gradients g = zero_gradients(net);
    backward_accumulate(net, forward_trace(net, input), upstream, g);
    return g;
}

void scale_gradients(Gradients& grads, double factor) {
    for (auto& w : grads.weights)
        for (double& v : w) v *= factor;
    for (auto& b : grads.biases)
        for (double& v : b) v *= factor;
    for (double& v : grads.input) v *= factor;
}

OptimizerState make_adam(const Network& net, double learning_rate, double beta1,
                         double beta2, double eps, double l2_coeff) {
    OptimizerState opt;
    opt.learning_rate = learning_rate;
    opt.beta1 = beta1;
    opt.beta2 = beta2;
    opt.eps = eps;
    opt.l2_coeff = l2_coeff;
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        opt.first_moment_w.emplace_back(net.weights[l].size(), 0.0);
        opt.second_moment_w.emplace_back(net.weights[l].size(), 0.0);
        opt.first_moment_b.emplace_back(net.biases[l].size(), 0.0);
        opt.second_moment_b.emplace_back(net.biases[l].size(), 0.0);
    }
    return opt;
}

namespace {

void adam_update(Vec& params, const Vec& grads, Vec& m, Vec& v,
                 const OptimizerState& opt, double bc1, double bc2) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        double g = grads[i];
        if (!std::isfinite(g)) throw TrainingFault("non-finite gradient in adam_step");
        if (opt.l2_coeff > 0.0) g += opt.l2_coeff * params[i];
        m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g;
        v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g * g;
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        params[i] -= opt.learning_rate * m_hat / (std::sqrt(v_hat) + opt.eps);
    }
}

}  // namespace

void adam_step(Network& net, const Gradients& grads, OptimizerState& opt) {
    if (grads.weights.size() != net.layer_count())
        throw ConfigError("adam_step: gradient layer count mismatch");
    // Validate all gradients before touching any state so a rejected update
    // leaves both the network and the optimizer untouched.
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        for (double g : grads.weights[l])
            if (!std::isfinite(g)) throw TrainingFault("non-finite gradient in adam_step");
        for (double g : grads.biases[l])
            if (!std::isfinite(g)) throw TrainingFault("non-finite gradient in adam_step");
    }
    const long t = opt.step_count + 1;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(t));
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        adam_update(net.weights[l], grads.weights[l], opt.first_moment_w[l],
                    opt.second_moment_w[l], opt, bc1, bc2);
        adam_update(net.biases[l], grads.biases[l], opt.first_moment_b[l],
                    opt.second_moment_b[l], opt, bc1, bc2);
    }
    opt.step_count = t;
}

double grad_check(const Network& net, const Vec& input) {
    const Vec ones(net.output_dim(), 1.0);
    Gradients analytic = backward(net, input, ones);
    Network probe = net;
    const double h = 1e-5;
    auto loss = [&]() {
        const Vec out = forward(probe, input);
        double s = 0.0;
        for (double v : out) s += v;
        return s;
    };
    double worst = 0.0;
    auto check = [&](Vec& params, const Vec& grads) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            const double saved = params[i];
            params[i] = saved + h;
            const double up = loss();
            params[i] = saved - h;
            const double down = loss();
            params[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double a = grads[i];
            const double rel = std::abs(a - numeric) /
                               std::max(1e-8, std::abs(a) + std::abs(numeric));
            worst = std::max(worst, rel);
        }
    };
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        check(probe.weights[l], analytic.weights[l]);
        check(probe.biases[l], analytic.biases[l]);
    }
    return worst;
}

std::string network_to_json(const Network& net, std::uint64_t seed, long steps) {
    nlohmann::json j;
    j["layer_sizes"] = net.layer_sizes;
    switch (net.head) {
        case Head::Linear: j["head"] = "linear"; break;
        case Head::TanhScaled: j["head"] = "tanh_scaled"; break;
        case Head::Gaussian: j["head"] = "gaussian"; break;
    }
    j["weights"] = net.weights;
    j["biases"] = net.biases;
    if (net.head == Head::TanhScaled) j["scale"] = net.scale;
    if (net.head == Head::Gaussian) {
        j["log_std_min"] = net.log_std_min;
        j["log_std_max"] = net.log_std_max;
    }
    j["meta"] = {{"seed", seed}, {"steps", steps}};
    return j.dump();
}

Network network_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad network checkpoint: ") + e.what());
    }
    Network net;
    try {
        net.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
        const std::string head = j.at("head").get<std::string>();
        if (head == "linear") net.head = Head::Linear;
        else if (head == "tanh_scaled") net.head = Head::TanhScaled;
        else if (head == "gaussian") net.head = Head::Gaussian;
        else throw ParseError("unknown head: " + head);
        net.weights = j.at("weights").get<std::vector<Vec>>();
        net.biases = j.at("biases").get<std::vector<Vec>>();
        if (net.head == Head::TanhScaled) net.scale = j.at("scale").get<Vec>();
        if (net.head == Head::Gaussian) {
            net.log_std_min = j.value("log_std_min", -10.0);
            net.log_std_max = j.value("log_std_max", 2.0);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad network checkpoint: ") + e.what());
    }
    check_architecture(net);
    return net;
}

}  // namespace stitchkit
