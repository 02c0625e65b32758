#pragma once

#include "nltm/model.hpp"

namespace nltm {

// Small reference classifiers with seeded He-normal initialization.

// conv(C->16,3x3,pad1)-ReLU-pool2-conv(16->32,3x3,pad1)-ReLU-pool2-
// flatten-dense(->128)-ReLU-dense(->classes). Requires H,W divisible by 4.
Model make_reference_cnn(const std::vector<int64_t>& input_shape, int64_t num_classes,
                         uint64_t seed);

// flatten-dense(->256)-ReLU-dense(->classes).
Model make_reference_mlp(const std::vector<int64_t>& input_shape, int64_t num_classes,
                         uint64_t seed);

Model make_architecture(const std::string& name, const std::vector<int64_t>& input_shape,
                        int64_t num_classes, uint64_t seed);

}  // namespace nltm
