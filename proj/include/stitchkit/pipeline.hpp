#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "stitchkit/config.hpp"

namespace stitchkit {

// Full experiment sweep: mixture datasets over the expert-fraction grid,
// plain BC baselines, TS-augmented BC, the weighted-BC ablation and the
// per-iteration study at the ablation fraction.
struct PipelineReport {
    Vec fractions;

    Vec bc_return, bc_return_std, bc_kl, bc_mse;
    Vec tsbc_return, tsbc_return_std, tsbc_kl, tsbc_mse;
    Vec scaled_kl_diff;  // positive: TS+BC closer to the expert

    double ablation_fraction = 0.0;
    double ablation_bc_return = 0.0, ablation_bc_std = 0.0;
    double ablation_weighted_return = 0.0, ablation_weighted_std = 0.0;
    double ablation_tsbc_return = 0.0, ablation_tsbc_std = 0.0;

    // Index 0 is plain BC; index k is BC trained on the k-th stitching pass.
    Vec iteration_returns, iteration_stds;

    std::string to_json() const;
    std::string to_csv() const;
};

struct PipelineArtifacts {
    PipelineReport report;
    std::string stitch_reports_json;  // one entry per (fraction, ts seed)
};

// Deterministic given config.seed. `progress` (optional) receives one line
// per completed stage.
PipelineArtifacts run_pipeline(const ExperimentConfig& config,
                               std::ostream* progress = nullptr);

}  // namespace stitchkit
