#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "stitchkit/rng.hpp"

namespace stitchkit {

using Vec = std::vector<double>;

enum class Head {
    Linear,
    TanhScaled,  // out_i = scale_i * tanh(pre_i)
    Gaussian,    // first half mean, second half log_std clamped to bounds
};

// Fully-connected ReLU network. Weights are row-major [out x in] per layer.
struct Network {
    std::vector<int> layer_sizes;  // input size first, output size last
    std::vector<Vec> weights;
    std::vector<Vec> biases;
    Head head = Head::Linear;
    Vec scale;  // TanhScaled only, one bound per output dim
    double log_std_min = -10.0;
    double log_std_max = 2.0;

    int input_dim() const { return layer_sizes.front(); }
    int output_dim() const { return layer_sizes.back(); }
    std::size_t layer_count() const { return weights.size(); }
    std::size_t param_count() const;
};

// Weight init: uniform in +-1/sqrt(fan_in), biases zero.
Network make_network(const std::vector<int>& layer_sizes, Head head, Rng& rng,
                     Vec scale = {}, double log_std_min = -10.0,
                     double log_std_max = 2.0);

struct ForwardTrace {
    std::vector<Vec> post;  // post[0] = input, post[i] = activation after layer i
    Vec pre_last;           // pre-activation of the output layer
    Vec output;             // after head transform
};

Vec forward(const Network& net, const Vec& input);
ForwardTrace forward_trace(const Network& net, const Vec& input);

struct Gradients {
    std::vector<Vec> weights;
    std::vector<Vec> biases;
    Vec input;
};

Gradients zero_gradients(const Network& net);

// Accumulating form used by the batched training loops. `upstream` is the
// loss gradient w.r.t. the head output.
void backward_accumulate(const Network& net, const ForwardTrace& trace,
                         const Vec& upstream, Gradients& acc);

// One-shot form of the above (recomputes the forward pass).
Gradients backward(const Network& net, const Vec& input, const Vec& upstream);

void scale_gradients(Gradients& grads, double factor);

struct OptimizerState {
    std::vector<Vec> first_moment_w, second_moment_w;
    std::vector<Vec> first_moment_b, second_moment_b;
    long step_count = 0;
    double learning_rate = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double l2_coeff = 0.0;
};

OptimizerState make_adam(const Network& net, double learning_rate,
                         double beta1 = 0.9, double beta2 = 0.999,
                         double eps = 1e-8, double l2_coeff = 0.0);

// Bias-corrected Adam. The L2 term is added to the gradients when
// l2_coeff > 0. Throws TrainingFault on non-finite gradients.
void adam_step(Network& net, const Gradients& grads, OptimizerState& opt);

// Max over parameters of |analytic - numeric| / max(1e-8, |analytic| + |numeric|)
// for the scalar loss L = sum(head outputs), central differences h = 1e-5.
double grad_check(const Network& net, const Vec& input);

// Checkpoint (de)serialization; one JSON document per network.
std::string network_to_json(const Network& net, std::uint64_t seed = 0,
                            long steps = 0);
Network network_from_json(const std::string& text);

}  // namespace stitchkit
