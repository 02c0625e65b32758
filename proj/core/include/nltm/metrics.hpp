#pragma once

#include <string>
#include <utility>
#include <vector>

#include "nltm/model.hpp"

namespace nltm {

/// The six reported metrics, normalized to batch size 1. Size follows the
/// 4-bytes-per-parameter convention (32-bit serialization); checkpoint
/// header overhead is excluded.
struct MetricsRecord {
    double accuracy = 0.0;         // top-1 percent
    int64_t size_bytes = 0;        // 4 * params
    int64_t macs = 0;              // multiply-accumulates per sample
    int64_t params = 0;
    int64_t memory_footprint = 0;  // bytes, params + all activations, batch 1
    double execution_time_ms = 0.0;
};

/// Original-vs-optimized comparison: signed accuracy delta plus
/// original/optimized ratios, rendered "N.NNx".
struct EnhancementRow {
    double accuracy_delta = 0.0;  // optimized - original
    double size_ratio = 1.0;
    double macs_ratio = 1.0;
    double params_ratio = 1.0;
    double footprint_ratio = 1.0;
    double time_ratio = 1.0;
};

int64_t count_macs(const LayerSpec& layer, const std::vector<int64_t>& in_shape);
int64_t count_macs(const Model& model);

int64_t memory_footprint_bytes(const Model& model);

// Median wall-clock of `runs` single-sample forward passes after `warmup`
// discarded ones. Host-dependent; never part of acceptance gating.
double measure_time_ms(const Model& model, int64_t warmup = 5, int64_t runs = 30);

EnhancementRow enhancement(const MetricsRecord& original, const MetricsRecord& optimized);

std::string format_ratio(double ratio);          // "12.34x", "inf"
std::string format_signed(double value);         // "-0.93"

/// Ordered key = value document; renders and parses losslessly.
struct Report {
    std::vector<std::pair<std::string, std::string>> fields;

    void add(const std::string& key, const std::string& value);
    void add(const std::string& key, double value);
    void add(const std::string& key, int64_t value);
    const std::string* find(const std::string& key) const;
};

std::string render_report(const Report& report);
Report parse_report(const std::string& text);

// Fixed-width table in the published column order: Model, Accuracy, Size,
// MACs, #Params, Memory Footprint, Execution Time.
std::string render_table(const std::vector<std::pair<std::string, MetricsRecord>>& rows,
                         const EnhancementRow* enh);

}  // namespace nltm
