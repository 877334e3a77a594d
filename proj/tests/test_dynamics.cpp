#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "stitchkit/data.hpp"
#include "stitchkit/dynamics.hpp"
#include "stitchkit/rng.hpp"

using namespace stitchkit;

namespace {

const double kPi = std::acos(-1.0);

NormStats identity_norm(int d) {
    NormStats st;
    st.mean.assign(static_cast<std::size_t>(d), 0.0);
    st.std.assign(static_cast<std::size_t>(d), 1.0);
    return st;
}

// Single linear layer d -> 2d so mean and log-std are set directly via biases.
Network gaussian_net(int d, const Vec& mu_bias, const Vec& log_std_bias) {
    Rng rng(0);
    Network net = make_network({d, 2 * d}, Head::Gaussian, rng);
    for (auto& w : net.weights[0]) w = 0.0;
    for (int i = 0; i < d; ++i) {
        net.biases[0][static_cast<std::size_t>(i)] = mu_bias[static_cast<std::size_t>(i)];
        net.biases[0][static_cast<std::size_t>(d + i)] =
            log_std_bias[static_cast<std::size_t>(i)];
    }
    return net;
}

DynamicsEnsemble hand_ensemble(int d, const std::vector<Network>& nets) {
    DynamicsEnsemble ens;
    for (const auto& net : nets) ens.members.push_back({net, 0.0});
    for (int i = 0; i < static_cast<int>(nets.size()); ++i) ens.elites.push_back(i);
    ens.norm = identity_norm(d);
    return ens;
}

// Length-1 trajectories mapping s -> f(s); keeps continuity trivially valid.
Dataset pair_dataset(int n, int d, std::uint64_t seed, double noise_std,
                     bool identity_map) {
    Rng rng(seed);
    Dataset ds;
    ds.d_s = d;
    ds.d_a = 1;
    for (int k = 0; k < n; ++k) {
        Transition tr;
        tr.traj_id = k;
        tr.t = 0;
        tr.state.resize(static_cast<std::size_t>(d));
        for (auto& x : tr.state) x = rng.uniform(-1.0, 1.0);
        tr.next_state = tr.state;
        if (!identity_map)
            for (auto& x : tr.next_state) x += 0.3;  // constant shift
        for (auto& x : tr.next_state) x += noise_std * rng.normal();
        tr.action = {0.0};
        tr.reward = 0.0;
        tr.done = true;
        ds.trajectories.push_back({k, {tr}});
    }
    ds.rebuild_index();
    ds.validate();
    return ds;
}

DynamicsConfig small_config(std::uint64_t seed) {
    DynamicsConfig cfg;
    cfg.hidden = {32, 32};
    cfg.batch = 64;
    cfg.max_epochs = 250;
    cfg.patience = 25;
    cfg.ensemble_size = 3;
    cfg.n_elites = 2;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("log_density: standard normal at the mean is -log(2pi) in 2-D") {
    const Vec mu{0.0, 0.0}, ls{0.0, 0.0};
    DynamicsEnsemble ens = hand_ensemble(2, {gaussian_net(2, mu, ls)});
    CHECK(log_density(ens, 0, {0.5, -0.5}, {0.0, 0.0}) ==
          doctest::Approx(-std::log(2.0 * kPi)).epsilon(1e-12));
}

TEST_CASE("log_density: unit residual on one dim subtracts one half") {
    const Vec mu{0.0, 0.0}, ls{0.0, 0.0};
    DynamicsEnsemble ens = hand_ensemble(2, {gaussian_net(2, mu, ls)});
    CHECK(log_density(ens, 0, {0.0, 0.0}, {1.0, 0.0}) ==
          doctest::Approx(-std::log(2.0 * kPi) - 0.5).epsilon(1e-12));
}

TEST_CASE("log_density: random member matches a direct pdf oracle") {
    Rng rng(7);
    const int d = 3;
    Network net = make_network({d, 16, 2 * d}, Head::Gaussian, rng);
    NormStats norm;
    norm.mean = {0.2, -0.1, 0.4};
    norm.std = {1.5, 0.7, 2.0};
    DynamicsEnsemble ens;
    ens.members.push_back({net, 0.0});
    ens.elites = {0};
    ens.norm = norm;
    for (int rep = 0; rep < 200; ++rep) {
        Vec s(d), s2(d);
        for (auto& x : s) x = rng.uniform(-2.0, 2.0);
        for (auto& x : s2) x = rng.uniform(-2.0, 2.0);
        const Vec out = forward(net, norm.normalize(s));
        const Vec y = norm.normalize(s2);
        double oracle = 0.0;
        for (int i = 0; i < d; ++i) {
            const double sigma = std::exp(out[static_cast<std::size_t>(d + i)]);
            const double r = y[static_cast<std::size_t>(i)] - out[static_cast<std::size_t>(i)];
            oracle += std::log(1.0 / (sigma * std::sqrt(2.0 * kPi))) -
                      0.5 * (r / sigma) * (r / sigma);
        }
        CHECK(std::abs(log_density(ens, 0, s, s2) - oracle) < 1e-10);
    }
}

TEST_CASE("reachability: candidate equal to observed fails when elites disagree") {
    const int d = 2;
    std::vector<Network> nets;
    nets.push_back(gaussian_net(d, {0.0, 0.0}, {0.0, 0.0}));
    nets.push_back(gaussian_net(d, {0.5, 0.0}, {0.0, 0.0}));
    nets.push_back(gaussian_net(d, {0.0, 0.5}, {-0.3, 0.2}));
    DynamicsEnsemble ens = hand_ensemble(d, nets);
    const Vec s{0.1, 0.1}, sp{0.3, -0.2};
    CHECK_FALSE(reachability_check(ens, s, sp, sp));
    CHECK(reachability_margin(ens, s, sp, sp) < 0.0);
}

TEST_CASE("reachability: degenerate single-model ensemble passes a likelier candidate") {
    const int d = 1;
    Network net = gaussian_net(d, {0.0}, {0.0});
    DynamicsEnsemble ens = hand_ensemble(d, {net, net, net});
    // Candidate at the mode, observed in the tail.
    CHECK(reachability_check(ens, {0.0}, {2.0}, {0.0}));
    CHECK_FALSE(reachability_check(ens, {0.0}, {0.0}, {2.0}));
}

TEST_CASE("reachability: agrees with a density-domain oracle on random triples") {
    Rng rng(11);
    const int d = 2;
    std::vector<Network> nets;
    for (int m = 0; m < 3; ++m) {
        Vec mu(d), ls(d);
        for (auto& x : mu) x = rng.uniform(-0.5, 0.5);
        for (auto& x : ls) x = rng.uniform(-0.5, 0.5);
        nets.push_back(gaussian_net(d, mu, ls));
    }
    DynamicsEnsemble ens = hand_ensemble(d, nets);
    for (int rep = 0; rep < 1000; ++rep) {
        Vec s(d), obs(d), cand(d);
        for (auto& x : s) x = rng.uniform(-1.0, 1.0);
        for (auto& x : obs) x = rng.uniform(-2.0, 2.0);
        for (auto& x : cand) x = rng.uniform(-2.0, 2.0);
        double min_cand = std::numeric_limits<double>::infinity();
        double mean_obs = 0.0;
        for (int e : ens.elites) {
            min_cand = std::min(min_cand, std::exp(log_density(ens, e, s, cand)));
            mean_obs += std::exp(log_density(ens, e, s, obs));
        }
        mean_obs /= static_cast<double>(ens.elites.size());
        CHECK(reachability_check(ens, s, obs, cand) == (min_cand > mean_obs));
    }
}

TEST_CASE("train: deterministic identity system is recovered") {
    const Dataset ds = pair_dataset(400, 1, 13, 0.0, true);
    DynamicsConfig cfg = small_config(13);
    const DynamicsEnsemble ens = train_dynamics(ds, cfg);
    REQUIRE(ens.members.size() == 3);
    REQUIRE(ens.elites.size() == 2);
    Rng rng(99);
    const int e = ens.elites[0];
    for (int rep = 0; rep < 50; ++rep) {
        const Vec s{rng.uniform(-0.9, 0.9)};
        const Vec out = forward(ens.members[static_cast<std::size_t>(e)].net,
                                ens.norm.normalize(s));
        const double mu = ens.norm.denormalize({out[0]})[0];
        CHECK(std::abs(mu - s[0]) < 0.01);
        // Log-std driven toward the clamp floor on a noiseless dim.
        CHECK(out[1] < cfg.log_std_min + 0.5);
    }
}

TEST_CASE("train: additive noise std is recovered within a 2x band") {
    const Dataset ds = pair_dataset(600, 1, 17, 0.1, true);
    const DynamicsEnsemble ens = train_dynamics(ds, small_config(17));
    Rng rng(98);
    const int e = ens.elites[0];
    double mean_std = 0.0;
    const int reps = 50;
    for (int rep = 0; rep < reps; ++rep) {
        const Vec s{rng.uniform(-0.8, 0.8)};
        const Vec out = forward(ens.members[static_cast<std::size_t>(e)].net,
                                ens.norm.normalize(s));
        mean_std += std::exp(out[1]) * ens.norm.std[0];
    }
    mean_std /= reps;
    CHECK(mean_std > 0.05);
    CHECK(mean_std < 0.2);
}

TEST_CASE("train: same seed reproduces elites and parameters bit-for-bit") {
    const Dataset ds = pair_dataset(200, 2, 19, 0.05, false);
    const DynamicsEnsemble a = train_dynamics(ds, small_config(19));
    const DynamicsEnsemble b = train_dynamics(ds, small_config(19));
    CHECK(a.elites == b.elites);
    REQUIRE(a.members.size() == b.members.size());
    for (std::size_t m = 0; m < a.members.size(); ++m) {
        CHECK(a.members[m].val_nll == b.members[m].val_nll);
        CHECK(a.members[m].net.weights == b.members[m].net.weights);
        CHECK(a.members[m].net.biases == b.members[m].net.biases);
    }
}

TEST_CASE("checkpoints: save/load preserves densities exactly") {
    const Dataset ds = pair_dataset(150, 2, 23, 0.05, false);
    DynamicsConfig cfg = small_config(23);
    cfg.max_epochs = 20;
    const DynamicsEnsemble ens = train_dynamics(ds, cfg);
    const std::string prefix =
        (std::filesystem::temp_directory_path() / "sk_dyn").string();
    save_dynamics(ens, prefix);
    const DynamicsEnsemble back = load_dynamics(prefix);
    CHECK(back.elites == ens.elites);
    Rng rng(5);
    for (int rep = 0; rep < 20; ++rep) {
        Vec s(2), s2(2);
        for (auto& x : s) x = rng.uniform(-1.0, 1.0);
        for (auto& x : s2) x = rng.uniform(-1.0, 1.0);
        for (std::size_t m = 0; m < ens.members.size(); ++m)
            CHECK(log_density(ens, static_cast<int>(m), s, s2) ==
                  log_density(back, static_cast<int>(m), s, s2));
    }
    for (std::size_t m = 0; m < ens.members.size(); ++m)
        std::remove((prefix + ".member" + std::to_string(m) + ".json").c_str());
    std::remove((prefix + ".manifest.json").c_str());
}
