#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stitchkit/data.hpp"
#include "stitchkit/nn.hpp"

namespace stitchkit {

struct CvaeConfig {
    std::vector<int> hidden = {256, 256};
    double lr = 1e-4;
    int batch = 100;
    long steps = 400000;
    double beta_kl = 0.5;
    std::uint64_t seed = 0;
};

// Inverse dynamics p(a|s,s') as a conditional VAE. Encoder maps (a,s,s') to a
// latent Gaussian of dim 2*d_a; decoder maps (z,s,s') to an action bounded by
// a tanh head at the action limits. States normalized, actions raw.
struct InverseCVAE {
    Network encoder;  // gaussian head over the latent
    Network decoder;  // tanh_scaled head at action bounds
    Vec action_bound;
    NormStats norm;
    int latent_dim = 0;
};

InverseCVAE train_cvae(const Dataset& dataset, const Vec& action_bound,
                       const CvaeConfig& config);

enum class LatentMode { Sample, Mean };

Vec generate_action(const InverseCVAE& model, const Vec& s, const Vec& s_next,
                    Rng& rng, LatentMode mode = LatentMode::Sample);

void save_cvae(const InverseCVAE& model, const std::string& path);
InverseCVAE load_cvae(const std::string& path);

}  // namespace stitchkit
