#include "stitchkit/cvae.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "stitchkit/errors.hpp"

namespace stitchkit {

namespace {

Vec concat(const Vec& a, const Vec& b, const Vec& c) {
    Vec out;
    out.reserve(a.size() + b.size() + c.size());
    out.insert(out.end(), a.begin(), a.end());
    out.insert(out.end(), b.begin(), b.end());
    out.insert(out.end(), c.begin(), c.end());
    return out;
}

}  // namespace

InverseCVAE train_cvae(const Dataset& dataset, const Vec& action_bound,
                       const CvaeConfig& config) {
    if (dataset.transition_count() < 2) throw ConfigError("train_cvae: dataset too small");
    if (action_bound.size() != static_cast<std::size_t>(dataset.d_a))
        throw ConfigError("train_cvae: action bound dim mismatch");
    const int d_s = dataset.d_s;
    const int d_a = dataset.d_a;
    const int latent = 2 * d_a;

    InverseCVAE model;
    model.action_bound = action_bound;
    model.norm = normalization_stats(dataset);
    model.latent_dim = latent;

    Rng rng = Rng(config.seed).derive(0xc4ae);
    std::vector<int> enc_sizes{d_a + 2 * d_s};
    for (int h : config.hidden) enc_sizes.push_back(h);
    enc_sizes.push_back(2 * latent);
    std::vector<int> dec_sizes{latent + 2 * d_s};
    for (int h : config.hidden) dec_sizes.push_back(h);
    dec_sizes.push_back(d_a);
    model.encoder = make_network(enc_sizes, Head::Gaussian, rng);
    model.decoder = make_network(dec_sizes, Head::TanhScaled, rng, action_bound);

    OptimizerState enc_opt = make_adam(model.encoder, config.lr);
    OptimizerState dec_opt = make_adam(model.decoder, config.lr);

    std::vector<const Transition*> flat;
    flat.reserve(dataset.transition_count());
    for (const auto& traj : dataset.trajectories)
        for (const auto& tr : traj.transitions) flat.push_back(&tr);

    Vec eps_buf(static_cast<std::size_t>(latent));
    for (long step = 0; step < config.steps; ++step) {
        Gradients enc_grads = zero_gradients(model.encoder);
        Gradients dec_grads = zero_gradients(model.decoder);
        double loss = 0.0;
        double kl_sum = 0.0;
        for (int k = 0; k < config.batch; ++k) {
            const Transition& tr = *flat[rng.uniform_index(flat.size())];
            const Vec s = model.norm.normalize(tr.state);
            const Vec s2 = model.norm.normalize(tr.next_state);

            const ForwardTrace enc_trace =
                forward_trace(model.encoder, concat(tr.action, s, s2));
            Vec z(static_cast<std::size_t>(latent));
            for (int l = 0; l < latent; ++l) {
                eps_buf[static_cast<std::size_t>(l)] = rng.normal();
                const double mu = enc_trace.output[static_cast<std::size_t>(l)];
                const double sigma =
                    std::exp(enc_trace.output[static_cast<std::size_t>(latent + l)]);
                z[static_cast<std::size_t>(l)] =
                    mu + sigma * eps_buf[static_cast<std::size_t>(l)];
            }

            const ForwardTrace dec_trace = forward_trace(model.decoder, concat(z, s, s2));
            Vec dec_up(static_cast<std::size_t>(d_a));
            for (int j = 0; j < d_a; ++j) {
                const double r = dec_trace.output[static_cast<std::size_t>(j)] -
                                 tr.action[static_cast<std::size_t>(j)];
                loss += r * r;
                dec_up[static_cast<std::size_t>(j)] = 2.0 * r;
            }
            Gradients dec_sample = zero_gradients(model.decoder);
            backward_accumulate(model.decoder, dec_trace, dec_up, dec_sample);
            for (std::size_t l = 0; l < model.decoder.weights.size(); ++l) {
                for (std::size_t i = 0; i < dec_sample.weights[l].size(); ++i)
                    dec_grads.weights[l][i] += dec_sample.weights[l][i];
                for (std::size_t i = 0; i < dec_sample.biases[l].size(); ++i)
                    dec_grads.biases[l][i] += dec_sample.biases[l][i];
            }

            Vec enc_up(static_cast<std::size_t>(2 * latent));
            double kl = 0.0;
            for (int l = 0; l < latent; ++l) {
                const double dz = dec_sample.input[static_cast<std::size_t>(l)];
                const double mu = enc_trace.output[static_cast<std::size_t>(l)];
                const double log_sigma =
                    enc_trace.output[static_cast<std::size_t>(latent + l)];
                const double sigma = std::exp(log_sigma);
                kl += 0.5 * (mu * mu + sigma * sigma - 1.0) - log_sigma;
                enc_up[static_cast<std::size_t>(l)] = dz + config.beta_kl * mu;
                enc_up[static_cast<std::size_t>(latent + l)] =
                    dz * eps_buf[static_cast<std::size_t>(l)] * sigma +
                    config.beta_kl * (sigma * sigma - 1.0);
            }
            loss += config.beta_kl * kl;
            kl_sum += kl;
            backward_accumulate(model.encoder, enc_trace, enc_up, enc_grads);
        }
        if (!std::isfinite(loss) || kl_sum < -1e-9)
            throw TrainingFault("cvae: bad loss at step " + std::to_string(step));
        scale_gradients(enc_grads, 1.0 / config.batch);
        scale_gradients(dec_grads, 1.0 / config.batch);
        adam_step(model.encoder, enc_grads, enc_opt);
        adam_step(model.decoder, dec_grads, dec_opt);
    }
    return model;
}

Vec generate_action(const InverseCVAE& model, const Vec& s, const Vec& s_next,
                    Rng& rng, LatentMode mode) {
    Vec z(static_cast<std::size_t>(model.latent_dim), 0.0);
    if (mode == LatentMode::Sample)
        for (double& v : z) v = rng.normal();
    return forward(model.decoder,
                   concat(z, model.norm.normalize(s), model.norm.normalize(s_next)));
}

void save_cvae(const InverseCVAE& model, const std::string& path) {
    nlohmann::json j;
    j["encoder"] = nlohmann::json::parse(network_to_json(model.encoder));
    j["decoder"] = nlohmann::json::parse(network_to_json(model.decoder));
    j["action_bound"] = model.action_bound;
    j["state_mean"] = model.norm.mean;
    j["state_std"] = model.norm.std;
    j["latent_dim"] = model.latent_dim;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << j.dump() << "\n";
}

InverseCVAE load_cvae(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    InverseCVAE model;
    model.encoder = network_from_json(j.at("encoder").dump());
    model.decoder = network_from_json(j.at("decoder").dump());
    model.action_bound = j.at("action_bound").get<Vec>();
    model.norm.mean = j.at("state_mean").get<Vec>();
    model.norm.std = j.at("state_std").get<Vec>();
    model.latent_dim = j.at("latent_dim").get<int>();
    return model;
}

}  // namespace stitchkit
