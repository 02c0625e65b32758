#pragma once

#include <string>
#include <utility>
#include <vector>

#include "nltm/rng.hpp"
#include "nltm/tensor.hpp"

namespace nltm {

struct Dataset {
    Tensor images;                // [N,C,H,W]
    std::vector<int64_t> labels;  // class ids < num_classes
    int64_t num_classes = 0;

    int64_t size() const { return images.rank() == 4 ? images.extent(0) : 0; }
};

struct AugmentConfig {
    double crop_fraction = 0.8;  // 0 < f <= 1
    double flip_prob = 0.5;
};

struct ZNormStats {
    std::vector<double> mean;  // per channel
    std::vector<double> std;   // per channel, epsilon-floored
};

// MNIST-style IDX ingestion; pixels scaled to [0,1].
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Deterministic synthetic classification set: filled square, circle, cross,
// stripes, with jittered position/scale and pixel noise sigma 0.05.
Dataset synth_shapes(int64_t n_per_class, int64_t num_classes, int64_t hw, uint64_t seed);

ZNormStats znorm_stats(const Dataset& train);
Tensor apply_znorm(const Tensor& batch, const ZNormStats& stats);
Dataset apply_znorm(const Dataset& data, const ZNormStats& stats);

// Random crop of fraction f, bilinear resize back, then horizontal flip with
// probability flip_prob. Pure given the RNG state; shape-preserving.
Tensor augment_sample(const Tensor& chw, const AugmentConfig& cfg, Rng& rng);

// Seeded stratified split: returns (kept, held_out) with `held_out_fraction`
// of every class moved to the second set.
std::pair<Dataset, Dataset> stratified_split(const Dataset& data, double held_out_fraction,
                                             uint64_t seed);

Tensor sample_image(const Dataset& data, int64_t i);  // [C,H,W] copy

}  // namespace nltm
