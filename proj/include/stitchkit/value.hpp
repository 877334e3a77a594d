#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stitchkit/data.hpp"
#include "stitchkit/nn.hpp"

namespace stitchkit {

struct ValueConfig {
    std::vector<int> hidden = {256, 256};
    double lr = 3e-4;
    int batch = 256;
    long steps = 100000;
    double gamma = 0.99;
    long target_period = 1000;  // hard target copy interval
    std::uint64_t seed = 0;
};

// Behaviour-conditioned state-value function; value(s) = min(v1(s), v2(s)).
// Both networks regress toward r + gamma * (1 - done) * min(target copies).
struct TwinValue {
    Network v1;
    Network v2;
    Network target1;
    Network target2;
    double gamma = 0.99;
    NormStats norm;
};

TwinValue train_value(const Dataset& dataset, const ValueConfig& config);

double value(const TwinValue& model, const Vec& s);

void save_value(const TwinValue& model, const std::string& path);
TwinValue load_value(const std::string& path);

}  // namespace stitchkit
