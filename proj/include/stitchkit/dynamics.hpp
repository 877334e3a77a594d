#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stitchkit/data.hpp"
#include "stitchkit/nn.hpp"

namespace stitchkit {

struct DynamicsConfig {
    std::vector<int> hidden = {200, 200, 200};
    double lr = 3e-4;
    int batch = 256;
    int ensemble_size = 7;
    int n_elites = 5;
    double val_fraction = 0.1;  // held-out split used to pick elites
    int max_epochs = 200;
    int patience = 10;
    // Floor keeps densities finite-bandwidth on deterministic state dims so
    // the min/mean comparison stays discriminative rather than degenerate.
    double log_std_min = -3.0;
    double log_std_max = 2.0;
    std::uint64_t seed = 0;
};

struct DynamicsMember {
    Network net;  // gaussian head: d_s means then d_s log-stds
    double val_nll = 0.0;
};

// State-conditioned Gaussian next-state models; densities are evaluated in
// normalized state space for both candidate and observed states.
struct DynamicsEnsemble {
    std::vector<DynamicsMember> members;
    std::vector<int> elites;  // indices into members, best held-out NLL first
    NormStats norm;
};

DynamicsEnsemble train_dynamics(const Dataset& dataset, const DynamicsConfig& config);

// Exact diagonal-Gaussian log-density of s_next given s, constant included.
double log_density(const DynamicsEnsemble& ensemble, int member, const Vec& s,
                   const Vec& s_next);

// min over elites of log p(candidate|s) minus log of the arithmetic mean over
// elites of p(observed|s). Positive margin means the stitch is admissible.
double reachability_margin(const DynamicsEnsemble& ensemble, const Vec& s,
                           const Vec& s_next_observed, const Vec& s_next_candidate);

bool reachability_check(const DynamicsEnsemble& ensemble, const Vec& s,
                        const Vec& s_next_observed, const Vec& s_next_candidate);

// Member files <prefix>.member<k>.json plus a <prefix>.manifest.json holding
// elite indices and normalization stats.
void save_dynamics(const DynamicsEnsemble& ensemble, const std::string& prefix);
DynamicsEnsemble load_dynamics(const std::string& prefix);

}  // namespace stitchkit
