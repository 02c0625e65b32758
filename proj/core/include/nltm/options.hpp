#pragma once

#include <cstdint>
#include <vector>

#include "nltm/lowrank.hpp"

namespace nltm {

struct AnnealSchedule {
    double t0 = 0.1;
    double gamma = 0.9;  // cooling factor, in (0,1)
    int64_t steps = 20;
    std::vector<double> shrink_factors{0.6, 0.8};
    double grow_factor = 1.25;
    double grow_prob = 0.2;
    double lambda = 10.0;  // infeasibility penalty weight
};

struct OptimizationConfig {
    double delta = 1.0;  // tolerable accuracy drop, absolute points
    int64_t stage = 2;   // 1 or 2
    int64_t workers = 1;
    uint64_t seed = 0;
    int64_t min_layer_params = 1000;  // weight-count threshold for selection
    double epsilon1 = 0.05;           // stage-1 reconstruction-fit threshold
    int64_t finetune_epochs_stage1 = 10;
    int64_t proxy_epochs = 2;
    int64_t final_epochs = 10;
    int64_t backoff_rounds = 5;
    AnnealSchedule anneal;
    AlsOptions als;

    // Fine-tuning hyperparameters; echoed in every report.
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 0.0;
    int64_t batch_size = 64;
    bool augment = true;

    void validate() const;
};

/// Binary vector over the optimizable layers, in optimizable_indices()
/// order; 1 = transform, 0 = frozen.
struct ComposedList {
    std::vector<int> bits;

    bool any() const {
        for (int b : bits)
            if (b) return true;
        return false;
    }
};

}  // namespace nltm
