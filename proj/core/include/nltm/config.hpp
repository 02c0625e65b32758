#pragma once

#include <string>
#include <vector>

#include "nltm/options.hpp"

namespace nltm {

struct SynthSpec {
    int64_t n_per_class = 0;
    int64_t num_classes = 0;
    int64_t hw = 0;
    uint64_t seed = 0;
};

/// Everything a run needs: the optimization knobs plus paths and the
/// dataset descriptor. Unknown keys are rejected.
struct CliConfig {
    OptimizationConfig opt;
    std::string model_path;
    std::string out_path;
    std::string report_path;
    std::string idx_images, idx_labels;            // train pair
    std::string idx_test_images, idx_test_labels;  // test pair
    SynthSpec synth;
    bool has_synth = false;
    int64_t train_epochs = 20;  // `train` subcommand only

    bool has_idx() const { return !idx_images.empty(); }
    std::string dataset_descriptor() const;
};

// `key = value` lines with `#` comments; overrides are the same syntax and
// win over file values. Errors name the offending line.
CliConfig parse_config(const std::string& file_path,
                       const std::vector<std::string>& overrides);

// Overrides only, no file.
CliConfig parse_config(const std::vector<std::string>& overrides);

// Echo of the effective values, sufficient to reproduce the run.
std::string config_echo(const CliConfig& cfg);

}  // namespace nltm
