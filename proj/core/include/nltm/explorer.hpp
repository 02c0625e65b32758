#pragma once

#include <map>

#include "nltm/data.hpp"
#include "nltm/model.hpp"
#include "nltm/options.hpp"

namespace nltm {

// Largest rank at which the factorized layer still has fewer parameters
// than the dense one (diagonal counted for dense layers). 0 means no
// compressing rank exists.
int64_t break_even_rank(const LayerSpec& layer);

// Smallest rank meeting the epsilon1 reconstruction threshold per selected
// layer: singular-value tail energy for dense layers, grid search plus
// binary refinement on the CP fit for conv layers. Capped at break-even.
RankAssignment initial_ranks(const Model& model, const ComposedList& cl, double epsilon1,
                             const AlsOptions& als);

struct ExplorationState {
    RankAssignment ranks;
    int64_t rounds = 0;
    std::map<int64_t, double> fits;  // layer index -> reconstruction fit
    ComposedList cl;                 // bits may drop to 0 when a layer reverts to dense
    double val_accuracy = 0.0;       // of the returned model
    bool delta_met = false;
    std::vector<std::string> audit;
};

struct Stage1Result {
    Model model;
    ExplorationState state;
};

// Decompose, fine-tune, and back off ranks (worst fit first) until the
// validation drop is within delta or rounds run out.
Stage1Result stage1(const Model& model, const Dataset& train_set, const Dataset& val,
                    double baseline_val_acc, const ComposedList& cl,
                    const OptimizationConfig& cfg);

}  // namespace nltm
