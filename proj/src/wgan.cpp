#include "stitchkit/wgan.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "stitchkit/errors.hpp"

namespace stitchkit {

namespace {

struct Sample {
    Vec s;   // normalized
    Vec a;   // raw
    Vec s2;  // normalized
    double r = 0.0;  // normalized
};

Vec gen_input(const Vec& z, const Sample& x) {
    Vec in;
    in.reserve(z.size() + x.s.size() + x.a.size() + x.s2.size());
    in.insert(in.end(), z.begin(), z.end());
    in.insert(in.end(), x.s.begin(), x.s.end());
    in.insert(in.end(), x.a.begin(), x.a.end());
    in.insert(in.end(), x.s2.begin(), x.s2.end());
    return in;
}

Vec critic_input(const Sample& x, double r) {
    Vec in;
    in.reserve(x.s.size() + x.a.size() + x.s2.size() + 1);
    in.insert(in.end(), x.s.begin(), x.s.end());
    in.insert(in.end(), x.a.begin(), x.a.end());
    in.insert(in.end(), x.s2.begin(), x.s2.end());
    in.push_back(r);
    return in;
}

void clip_network(Network& net, double bound) {
    for (auto& w : net.weights)
        for (double& v : w) v = std::clamp(v, -bound, bound);
    for (auto& b : net.biases)
        for (double& v : b) v = std::clamp(v, -bound, bound);
}

}  // namespace

RewardGAN train_wgan(const Dataset& dataset, const WganConfig& config) {
    if (dataset.transition_count() < 2) throw ConfigError("train_wgan: dataset too small");
    const int d_s = dataset.d_s;
    const int d_a = dataset.d_a;

    RewardGAN model;
    model.latent_dim = config.latent_dim;
    model.clip = config.clip;
    model.state_norm = normalization_stats(dataset);

    std::vector<Sample> data;
    data.reserve(dataset.transition_count());
    double mean = 0.0;
    for (const auto& traj : dataset.trajectories)
        for (const auto& tr : traj.transitions) {
            data.push_back({model.state_norm.normalize(tr.state), tr.action,
                            model.state_norm.normalize(tr.next_state), tr.reward});
            mean += tr.reward;
        }
    mean /= static_cast<double>(data.size());
    double var = 0.0;
    for (const auto& x : data) var += (x.r - mean) * (x.r - mean);
    model.reward_mean = mean;
    model.reward_std = std::max(1e-6, std::sqrt(var / static_cast<double>(data.size())));
    for (auto& x : data) x.r = (x.r - model.reward_mean) / model.reward_std;

    Rng rng = Rng(config.seed).derive(0x36a1);
    std::vector<int> gen_sizes{config.latent_dim + 2 * d_s + d_a};
    for (int h : config.hidden) gen_sizes.push_back(h);
    gen_sizes.push_back(1);
    std::vector<int> critic_sizes{2 * d_s + d_a + 1};
    for (int h : config.hidden) critic_sizes.push_back(h);
    critic_sizes.push_back(1);
    model.generator = make_network(gen_sizes, Head::Linear, rng);
    model.critic = make_network(critic_sizes, Head::Linear, rng);
    clip_network(model.critic, config.clip);

    OptimizerState gen_opt =
        make_adam(model.generator, config.lr, config.beta1, config.beta2, 1e-8, config.l2);
    OptimizerState critic_opt =
        make_adam(model.critic, config.lr, config.beta1, config.beta2, 1e-8, config.l2);

    // Held-out split for best-checkpoint monitoring.
    const std::size_t n_val = std::max<std::size_t>(
        1, static_cast<std::size_t>(config.val_fraction * static_cast<double>(data.size())));
    Network best_gen = model.generator;
    double best_mae = std::numeric_limits<double>::infinity();
    const long eval_every = std::max<long>(1, config.gen_steps / 20);

    Vec z(static_cast<std::size_t>(config.latent_dim));
    auto draw_fake = [&](const Sample& x) {
        for (double& v : z) v = rng.normal();
        return forward(model.generator, gen_input(z, x))[0];
    };

    for (long step = 0; step < config.gen_steps; ++step) {
        for (int c = 0; c < config.n_critic; ++c) {
            Gradients cg = zero_gradients(model.critic);
            double loss = 0.0;
            const Vec up_real{-1.0 / config.batch};
            const Vec up_fake{1.0 / config.batch};
            for (int k = 0; k < config.batch; ++k) {
                const Sample& real = data[rng.uniform_index(data.size())];
                const ForwardTrace rt = forward_trace(model.critic, critic_input(real, real.r));
                loss -= rt.output[0] / config.batch;
                backward_accumulate(model.critic, rt, up_real, cg);
                const Sample& cond = data[rng.uniform_index(data.size())];
                const double fake_r = draw_fake(cond);
                const ForwardTrace ft = forward_trace(model.critic, critic_input(cond, fake_r));
                loss += ft.output[0] / config.batch;
                backward_accumulate(model.critic, ft, up_fake, cg);
            }
            if (!std::isfinite(loss))
                throw TrainingFault("wgan: non-finite critic loss at step " +
                                    std::to_string(step));
            adam_step(model.critic, cg, critic_opt);
            clip_network(model.critic, config.clip);
        }

        Gradients gg = zero_gradients(model.generator);
        double gen_loss = 0.0;
        for (int k = 0; k < config.batch; ++k) {
            const Sample& cond = data[rng.uniform_index(data.size())];
            for (double& v : z) v = rng.normal();
            const ForwardTrace gt = forward_trace(model.generator, gen_input(z, cond));
            const double fake_r = gt.output[0];
            Gradients probe = zero_gradients(model.critic);
            const ForwardTrace ct = forward_trace(model.critic, critic_input(cond, fake_r));
            backward_accumulate(model.critic, ct, Vec{1.0}, probe);
            gen_loss -= ct.output[0] / config.batch;
            // d(-D)/dr through the critic's reward input.
            const Vec up{-probe.input.back() / config.batch};
            backward_accumulate(model.generator, gt, up, gg);
        }
        if (!std::isfinite(gen_loss))
            throw TrainingFault("wgan: non-finite generator loss at step " +
                                std::to_string(step));
        adam_step(model.generator, gg, gen_opt);

        if ((step + 1) % eval_every == 0 || step + 1 == config.gen_steps) {
            double mae = 0.0;
            for (std::size_t i = 0; i < n_val; ++i) {
                const Sample& x = data[i];
                const Vec z0(static_cast<std::size_t>(config.latent_dim), 0.0);
                mae += std::abs(forward(model.generator, gen_input(z0, x))[0] - x.r);
            }
            mae /= static_cast<double>(n_val);
            if (mae < best_mae) {
                best_mae = mae;
                best_gen = model.generator;
            }
        }
    }
    model.generator = best_gen;
    return model;
}

double predict_reward(const RewardGAN& model, const Vec& s, const Vec& a,
                      const Vec& s_next, Rng& rng) {
    Sample x{model.state_norm.normalize(s), a, model.state_norm.normalize(s_next), 0.0};
    Vec z(static_cast<std::size_t>(model.latent_dim));
    for (double& v : z) v = rng.normal();
    const double r = forward(model.generator, gen_input(z, x))[0];
    return r * model.reward_std + model.reward_mean;
}

double predict_reward_mean(const RewardGAN& model, const Vec& s, const Vec& a,
                           const Vec& s_next) {
    Sample x{model.state_norm.normalize(s), a, model.state_norm.normalize(s_next), 0.0};
    const Vec z(static_cast<std::size_t>(model.latent_dim), 0.0);
    const double r = forward(model.generator, gen_input(z, x))[0];
    return r * model.reward_std + model.reward_mean;
}

void save_wgan(const RewardGAN& model, const std::string& path) {
    nlohmann::json j;
    j["generator"] = nlohmann::json::parse(network_to_json(model.generator));
    j["critic"] = nlohmann::json::parse(network_to_json(model.critic));
    j["latent_dim"] = model.latent_dim;
    j["clip"] = model.clip;
    j["state_mean"] = model.state_norm.mean;
    j["state_std"] = model.state_norm.std;
    j["reward_mean"] = model.reward_mean;
    j["reward_std"] = model.reward_std;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << j.dump() << "\n";
}

RewardGAN load_wgan(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    RewardGAN model;
    model.generator = network_from_json(j.at("generator").dump());
    model.critic = network_from_json(j.at("critic").dump());
    model.latent_dim = j.at("latent_dim").get<int>();
    model.clip = j.at("clip").get<double>();
    model.state_norm.mean = j.at("state_mean").get<Vec>();
    model.state_norm.std = j.at("state_std").get<Vec>();
    model.reward_mean = j.at("reward_mean").get<double>();
    model.reward_std = j.at("reward_std").get<double>();
    return model;
}

}  // namespace stitchkit
