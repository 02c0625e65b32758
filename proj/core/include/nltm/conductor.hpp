#pragma once

#include <string>

#include "nltm/data.hpp"
#include "nltm/metrics.hpp"
#include "nltm/model.hpp"
#include "nltm/options.hpp"

namespace nltm {

// c_i = 1 iff layer i is Conv2D/Dense, its weight count meets
// min_layer_params, and its break-even rank is at least 2.
ComposedList build_composed_list(const Model& model, const OptimizationConfig& cfg);

struct TerminationCheck {
    bool pass = false;
    double margin = 0.0;  // delta - drop
};

// Pass iff baseline - candidate <= delta, inclusive at the boundary.
TerminationCheck check_termination(double baseline_acc, double candidate_acc, double delta);

struct DatasetSplit {
    Dataset train;  // normalized, validation carved out
    Dataset val;    // normalized
    Dataset test;   // normalized
    ZNormStats stats;
    std::string descriptor;
};

// Z-normalizes with train statistics and carves a seeded stratified 10%
// validation split used for every search decision.
DatasetSplit prepare_datasets(const Dataset& train, const Dataset& test, uint64_t seed,
                              const std::string& descriptor);

struct PipelineResult {
    Model model;
    Report report;
    std::string table;
    bool delta_not_met = false;
    MetricsRecord original_metrics;
    MetricsRecord stage1_metrics;
    MetricsRecord stage2_metrics;  // equals stage1 when cfg.stage == 1
    EnhancementRow enh;
};

// Stage 1 (exploration), then stage 2 (annealing) when requested; emits the
// metrics pair, the enhancement row, and the audit trace.
PipelineResult run_pipeline(const Model& model, const DatasetSplit& data,
                            const OptimizationConfig& cfg);

}  // namespace nltm
