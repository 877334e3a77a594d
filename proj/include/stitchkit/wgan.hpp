#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stitchkit/data.hpp"
#include "stitchkit/nn.hpp"

namespace stitchkit {

struct WganConfig {
    std::vector<int> hidden = {512, 512};
    double lr = 1e-4;
    int batch = 256;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double l2 = 1e-4;
    int latent_dim = 2;
    double clip = 0.01;  // critic weight bound
    int n_critic = 5;    // critic updates per generator update
    long gen_steps = 50000;
    double val_fraction = 0.1;
    std::uint64_t seed = 0;
};

// Conditional WGAN over rewards. Generator maps (z, s, a, s') to a reward;
// the critic scores full transitions. Rewards are normalized for training and
// de-normalized on prediction.
struct RewardGAN {
    Network generator;
    Network critic;
    int latent_dim = 2;
    double clip = 0.01;
    NormStats state_norm;
    double reward_mean = 0.0;
    double reward_std = 1.0;
};

RewardGAN train_wgan(const Dataset& dataset, const WganConfig& config);

double predict_reward(const RewardGAN& model, const Vec& s, const Vec& a,
                      const Vec& s_next, Rng& rng);

// Deterministic (z = 0) prediction used for held-out monitoring.
double predict_reward_mean(const RewardGAN& model, const Vec& s, const Vec& a,
                           const Vec& s_next);

void save_wgan(const RewardGAN& model, const std::string& path);
RewardGAN load_wgan(const std::string& path);

}  // namespace stitchkit
