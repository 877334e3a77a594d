#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stitchkit/bc.hpp"
#include "stitchkit/env.hpp"
#include "stitchkit/stitcher.hpp"

namespace stitchkit {

// Flat key = value experiment configuration. Every tunable is addressable by
// a dotted key; unknown keys are rejected. The "paper" preset carries the
// reference hyperparameters; "desk" shrinks models and step counts to sizes
// that finish on a workstation core.
struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::string preset = "paper";

    int env_horizon = 50;

    double mixture_expert_fraction_pct = 10.0;
    double mixture_noise_std = 0.5;
    int mixture_trajectories = 100;

    StitchConfig stitch;  // includes dynamics/cvae/wgan/value sub-configs
    BcConfig bc;

    std::vector<double> pipeline_fractions{2.5, 5.0, 10.0, 20.0, 40.0};
    int pipeline_bc_seeds = 5;
    int pipeline_ts_seeds = 3;
    double pipeline_ablation_fraction = 10.0;
    int eval_episodes = 10;
    int eval_seeds = 5;
    int kl_episodes = 10;

    // Applies a named preset ("paper" or "desk") to the model sub-configs.
    void apply_preset(const std::string& name);
    // Sets one dotted key from its textual value; ConfigError on unknown keys
    // or unparsable values.
    void set(const std::string& key, const std::string& value);
    // Every key with its current value, one per line, sorted; the resolved
    // config written next to run outputs.
    std::string resolved() const;
};

// Parses `key = value` lines ('#' comments, blank lines allowed) into the
// config. `source` names the file in error messages.
void load_config_file(ExperimentConfig& config, const std::string& path);
void apply_config_line(ExperimentConfig& config, const std::string& line,
                       const std::string& source, int line_no);

}  // namespace stitchkit
