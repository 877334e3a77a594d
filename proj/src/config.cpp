#include "stitchkit/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "stitchkit/errors.hpp"

namespace stitchkit {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return x;
    } catch (const std::exception&) {
        throw ConfigError(key + ": cannot parse '" + value + "' as a real");
    }
}

long parse_long(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const long x = std::stol(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return x;
    } catch (const std::exception&) {
        throw ConfigError(key + ": cannot parse '" + value + "' as an integer");
    }
}

int parse_int(const std::string& key, const std::string& value) {
    return static_cast<int>(parse_long(key, value));
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const std::uint64_t x = std::stoull(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return x;
    } catch (const std::exception&) {
        throw ConfigError(key + ": cannot parse '" + value + "' as an unsigned integer");
    }
}

template <typename T, typename Parse>
std::vector<T> parse_list(const std::string& key, const std::string& value,
                          Parse parse) {
    std::vector<T> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(parse(key, item));
    }
    if (out.empty()) throw ConfigError(key + ": empty list");
    return out;
}

std::string fmt(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string fmt(const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i)
        out += (i ? "," : "") + std::to_string(v[i]);
    return out;
}

std::string fmt(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt(v[i]);
    return out;
}

}  // namespace

void ExperimentConfig::apply_preset(const std::string& name) {
    if (name == "paper") {
        stitch.dynamics = DynamicsConfig{};
        stitch.cvae = CvaeConfig{};
        stitch.wgan = WganConfig{};
        stitch.value = ValueConfig{};
        bc = BcConfig{};
        mixture_trajectories = 100;
    } else if (name == "desk") {
        stitch.dynamics = DynamicsConfig{};
        stitch.dynamics.hidden = {32, 32};
        stitch.dynamics.batch = 128;
        stitch.dynamics.max_epochs = 60;
        stitch.dynamics.patience = 8;
        stitch.cvae = CvaeConfig{};
        stitch.cvae.hidden = {32, 32};
        stitch.cvae.lr = 1e-3;
        stitch.cvae.batch = 64;
        stitch.cvae.steps = 6000;
        stitch.wgan = WganConfig{};
        stitch.wgan.hidden = {32, 32};
        stitch.wgan.batch = 64;
        stitch.wgan.gen_steps = 4000;
        // At width 32 the reference 0.01 clip leaves the critic too weak to
        // condition on (s, a, s'); a looser clip restores reward recovery.
        stitch.wgan.clip = 0.05;
        stitch.wgan.lr = 3e-4;
        stitch.value = ValueConfig{};
        stitch.value.hidden = {32, 32};
        stitch.value.batch = 64;
        stitch.value.steps = 3000;
        stitch.value.target_period = 250;
        bc = BcConfig{};
        bc.hidden = {32, 32};
        bc.batch = 64;
        bc.steps = 3000;
        bc.checkpoint_start = 1000;
        bc.checkpoint_every = 500;
        mixture_trajectories = 60;
    } else {
        throw ConfigError("unknown preset: " + name + " (expected paper or desk)");
    }
    preset = name;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
    auto parse_ints = [&] {
        return parse_list<int>(key, value,
                               [](const std::string& k, const std::string& v) {
                                   return parse_int(k, v);
                               });
    };
    if (key == "seed") seed = parse_u64(key, value);
    else if (key == "preset") apply_preset(value);
    else if (key == "env.horizon") env_horizon = parse_int(key, value);
    else if (key == "mixture.expert_fraction_pct")
        mixture_expert_fraction_pct = parse_double(key, value);
    else if (key == "mixture.noise_std") mixture_noise_std = parse_double(key, value);
    else if (key == "mixture.trajectories") mixture_trajectories = parse_int(key, value);
    else if (key == "stitch.accept_threshold")
        stitch.accept_threshold = parse_double(key, value);
    else if (key == "stitch.iterations") stitch.iterations = parse_int(key, value);
    else if (key == "stitch.epsilon") stitch.epsilon = parse_double(key, value);
    else if (key == "stitch.candidate_cap") stitch.candidate_cap = parse_int(key, value);
    else if (key == "stitch.max_stitches_per_traj")
        stitch.max_stitches_per_traj = parse_int(key, value);
    else if (key == "stitch.latent_mode") {
        if (value == "sample") stitch.latent_mode = LatentMode::Sample;
        else if (value == "mean") stitch.latent_mode = LatentMode::Mean;
        else throw ConfigError(key + ": expected sample or mean, got '" + value + "'");
    } else if (key == "dynamics.hidden") stitch.dynamics.hidden = parse_ints();
    else if (key == "dynamics.lr") stitch.dynamics.lr = parse_double(key, value);
    else if (key == "dynamics.batch") stitch.dynamics.batch = parse_int(key, value);
    else if (key == "dynamics.ensemble_size")
        stitch.dynamics.ensemble_size = parse_int(key, value);
    else if (key == "dynamics.n_elites") stitch.dynamics.n_elites = parse_int(key, value);
    else if (key == "dynamics.val_fraction")
        stitch.dynamics.val_fraction = parse_double(key, value);
    else if (key == "dynamics.max_epochs")
        stitch.dynamics.max_epochs = parse_int(key, value);
    else if (key == "dynamics.patience") stitch.dynamics.patience = parse_int(key, value);
    else if (key == "dynamics.log_std_min")
        stitch.dynamics.log_std_min = parse_double(key, value);
    else if (key == "dynamics.log_std_max")
        stitch.dynamics.log_std_max = parse_double(key, value);
    else if (key == "cvae.hidden") stitch.cvae.hidden = parse_ints();
    else if (key == "cvae.lr") stitch.cvae.lr = parse_double(key, value);
    else if (key == "cvae.batch") stitch.cvae.batch = parse_int(key, value);
    else if (key == "cvae.steps") stitch.cvae.steps = parse_long(key, value);
    else if (key == "cvae.beta_kl") stitch.cvae.beta_kl = parse_double(key, value);
    else if (key == "wgan.hidden") stitch.wgan.hidden = parse_ints();
    else if (key == "wgan.lr") stitch.wgan.lr = parse_double(key, value);
    else if (key == "wgan.batch") stitch.wgan.batch = parse_int(key, value);
    else if (key == "wgan.beta1") stitch.wgan.beta1 = parse_double(key, value);
    else if (key == "wgan.beta2") stitch.wgan.beta2 = parse_double(key, value);
    else if (key == "wgan.l2") stitch.wgan.l2 = parse_double(key, value);
    else if (key == "wgan.latent_dim") stitch.wgan.latent_dim = parse_int(key, value);
    else if (key == "wgan.clip") stitch.wgan.clip = parse_double(key, value);
    else if (key == "wgan.n_critic") stitch.wgan.n_critic = parse_int(key, value);
    else if (key == "wgan.gen_steps") stitch.wgan.gen_steps = parse_long(key, value);
    else if (key == "wgan.val_fraction")
        stitch.wgan.val_fraction = parse_double(key, value);
    else if (key == "value.hidden") stitch.value.hidden = parse_ints();
    else if (key == "value.lr") stitch.value.lr = parse_double(key, value);
    else if (key == "value.batch") stitch.value.batch = parse_int(key, value);
    else if (key == "value.steps") stitch.value.steps = parse_long(key, value);
    else if (key == "value.gamma") stitch.value.gamma = parse_double(key, value);
    else if (key == "value.target_period")
        stitch.value.target_period = parse_long(key, value);
    else if (key == "bc.hidden") bc.hidden = parse_ints();
    else if (key == "bc.lr") bc.lr = parse_double(key, value);
    else if (key == "bc.batch") bc.batch = parse_int(key, value);
    else if (key == "bc.steps") bc.steps = parse_long(key, value);
    else if (key == "bc.checkpoint_start") bc.checkpoint_start = parse_long(key, value);
    else if (key == "bc.checkpoint_every") bc.checkpoint_every = parse_long(key, value);
    else if (key == "bc.weight_shift_delta")
        bc.weight_shift_delta = parse_double(key, value);
    else if (key == "pipeline.fractions")
        pipeline_fractions = parse_list<double>(
            key, value,
            [](const std::string& k, const std::string& v) { return parse_double(k, v); });
    else if (key == "pipeline.bc_seeds") pipeline_bc_seeds = parse_int(key, value);
    else if (key == "pipeline.ts_seeds") pipeline_ts_seeds = parse_int(key, value);
    else if (key == "pipeline.ablation_fraction")
        pipeline_ablation_fraction = parse_double(key, value);
    else if (key == "eval.episodes") eval_episodes = parse_int(key, value);
    else if (key == "eval.seeds") eval_seeds = parse_int(key, value);
    else if (key == "kl.episodes") kl_episodes = parse_int(key, value);
    else throw ConfigError("unknown config key: " + key);
}

std::string ExperimentConfig::resolved() const {
    std::map<std::string, std::string> kv;
    kv["seed"] = std::to_string(seed);
    kv["env.horizon"] = std::to_string(env_horizon);
    kv["mixture.expert_fraction_pct"] = fmt(mixture_expert_fraction_pct);
    kv["mixture.noise_std"] = fmt(mixture_noise_std);
    kv["mixture.trajectories"] = std::to_string(mixture_trajectories);
    kv["stitch.accept_threshold"] = fmt(stitch.accept_threshold);
    kv["stitch.iterations"] = std::to_string(stitch.iterations);
    kv["stitch.epsilon"] = fmt(stitch.epsilon);
    kv["stitch.candidate_cap"] = std::to_string(stitch.candidate_cap);
    kv["stitch.max_stitches_per_traj"] = std::to_string(stitch.max_stitches_per_traj);
    kv["stitch.latent_mode"] =
        stitch.latent_mode == LatentMode::Sample ? "sample" : "mean";
    kv["dynamics.hidden"] = fmt(stitch.dynamics.hidden);
    kv["dynamics.lr"] = fmt(stitch.dynamics.lr);
    kv["dynamics.batch"] = std::to_string(stitch.dynamics.batch);
    kv["dynamics.ensemble_size"] = std::to_string(stitch.dynamics.ensemble_size);
    kv["dynamics.n_elites"] = std::to_string(stitch.dynamics.n_elites);
    kv["dynamics.val_fraction"] = fmt(stitch.dynamics.val_fraction);
    kv["dynamics.max_epochs"] = std::to_string(stitch.dynamics.max_epochs);
    kv["dynamics.patience"] = std::to_string(stitch.dynamics.patience);
    kv["dynamics.log_std_min"] = fmt(stitch.dynamics.log_std_min);
    kv["dynamics.log_std_max"] = fmt(stitch.dynamics.log_std_max);
    kv["cvae.hidden"] = fmt(stitch.cvae.hidden);
    kv["cvae.lr"] = fmt(stitch.cvae.lr);
    kv["cvae.batch"] = std::to_string(stitch.cvae.batch);
    kv["cvae.steps"] = std::to_string(stitch.cvae.steps);
    kv["cvae.beta_kl"] = fmt(stitch.cvae.beta_kl);
    kv["wgan.hidden"] = fmt(stitch.wgan.hidden);
    kv["wgan.lr"] = fmt(stitch.wgan.lr);
    kv["wgan.batch"] = std::to_string(stitch.wgan.batch);
    kv["wgan.beta1"] = fmt(stitch.wgan.beta1);
    kv["wgan.beta2"] = fmt(stitch.wgan.beta2);
    kv["wgan.l2"] = fmt(stitch.wgan.l2);
    kv["wgan.latent_dim"] = std::to_string(stitch.wgan.latent_dim);
    kv["wgan.clip"] = fmt(stitch.wgan.clip);
    kv["wgan.n_critic"] = std::to_string(stitch.wgan.n_critic);
    kv["wgan.gen_steps"] = std::to_string(stitch.wgan.gen_steps);
    kv["wgan.val_fraction"] = fmt(stitch.wgan.val_fraction);
    kv["value.hidden"] = fmt(stitch.value.hidden);
    kv["value.lr"] = fmt(stitch.value.lr);
    kv["value.batch"] = std::to_string(stitch.value.batch);
    kv["value.steps"] = std::to_string(stitch.value.steps);
    kv["value.gamma"] = fmt(stitch.value.gamma);
    kv["value.target_period"] = std::to_string(stitch.value.target_period);
    kv["bc.hidden"] = fmt(bc.hidden);
    kv["bc.lr"] = fmt(bc.lr);
    kv["bc.batch"] = std::to_string(bc.batch);
    kv["bc.steps"] = std::to_string(bc.steps);
    kv["bc.checkpoint_start"] = std::to_string(bc.checkpoint_start);
    kv["bc.checkpoint_every"] = std::to_string(bc.checkpoint_every);
    kv["bc.weight_shift_delta"] = fmt(bc.weight_shift_delta);
    kv["pipeline.fractions"] = fmt(pipeline_fractions);
    kv["pipeline.bc_seeds"] = std::to_string(pipeline_bc_seeds);
    kv["pipeline.ts_seeds"] = std::to_string(pipeline_ts_seeds);
    kv["pipeline.ablation_fraction"] = fmt(pipeline_ablation_fraction);
    kv["eval.episodes"] = std::to_string(eval_episodes);
    kv["eval.seeds"] = std::to_string(eval_seeds);
    kv["kl.episodes"] = std::to_string(kl_episodes);
    // The preset line comes first: re-parsing the dump must apply the preset
    // before the explicit values that override it.
    std::string out = "preset = " + preset + "\n";
    for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
    return out;
}

void apply_config_line(ExperimentConfig& config, const std::string& line,
                       const std::string& source, int line_no) {
    std::string body = line;
    const auto hash = body.find('#');
    if (hash != std::string::npos) body.erase(hash);
    body = trim(body);
    if (body.empty()) return;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
        throw ConfigError(source + ":" + std::to_string(line_no) +
                          ": expected 'key = value', got '" + body + "'");
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(line_no) +
                                       ": empty key");
    try {
        config.set(key, value);
    } catch (const ConfigError& e) {
        throw ConfigError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
}

void load_config_file(ExperimentConfig& config, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) apply_config_line(config, line, path, ++line_no);
}

}  // namespace stitchkit
