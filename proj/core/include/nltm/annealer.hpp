#pragma once

#include <map>

#include "nltm/data.hpp"
#include "nltm/model.hpp"
#include "nltm/options.hpp"

namespace nltm {

struct EnergyTerms {
    double size_ratio = 1.0;  // compressed/original trainable parameters
    double drop = 0.0;        // validation accuracy drop, points
    double lambda = 10.0;
};

// E = size_ratio + lambda * max(0, drop - delta); lower is better.
double energy(const EnergyTerms& terms, double delta);

// One uniformly chosen layer moves: shrink by a uniformly chosen factor
// (floored, min 1) with probability 1 - grow_prob, otherwise grow by
// grow_factor (ceiled, capped at its break-even rank).
RankAssignment propose(const RankAssignment& ranks, const std::map<int64_t, int64_t>& caps,
                       const AnnealSchedule& sched, Rng& rng);

// Metropolis rule: accept if delta_E <= 0, else with prob exp(-delta_E/T).
bool accept(double delta_e, double temperature, Rng& rng);

struct Stage2Result {
    Model model;
    RankAssignment ranks;
    double val_accuracy = 0.0;
    bool any_feasible = false;  // a feasible state existed (stage-1 fallback counts)
    int64_t accepted_feasible = 0;
    std::vector<std::string> audit;
};

// Simulated annealing over the rank vector with the composed list frozen.
// Proposed layers are refit from the original pre-stage-1 weights; the best
// feasible state gets the final fine-tune. Falls back to the stage-1 model
// when no proposal is feasible.
Stage2Result stage2(const Model& original, const Model& stage1_model,
                    const RankAssignment& stage1_ranks, const ComposedList& frozen_cl,
                    const Dataset& train_set, const Dataset& val, double baseline_val_acc,
                    const OptimizationConfig& cfg);

}  // namespace nltm
