#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "nltm/tensor.hpp"

namespace nltm {

struct Conv2DLayer {
    ConvGeometry geom;
    Tensor weight;  // [out,in,kh,kw]
    Tensor bias;    // [out]
};

struct DenseLayer {
    int64_t in = 0;
    int64_t out = 0;
    Tensor weight;  // [in,out]
    Tensor bias;    // [out]
};

// CP-factorized convolution. Forward order: pointwise in->r (f3),
// vertical depthwise kh x 1 carrying stride_h/pad_h (f2), horizontal
// depthwise 1 x kw carrying stride_w/pad_w (f1), pointwise r->out (f4).
struct DecomposedConv2DLayer {
    ConvGeometry geom;
    int64_t rank = 1;
    Tensor f1;  // [r,1,1,kw]
    Tensor f2;  // [r,1,kh,1]
    Tensor f3;  // [r,in,1,1]
    Tensor f4;  // [out,r,1,1]
    Tensor bias;
};

// Truncated-SVD dense layer: y = ((x U) diag(s)) V^T + bias.
struct DecomposedDenseLayer {
    int64_t in = 0;
    int64_t out = 0;
    int64_t rank = 1;
    Tensor u;  // [in,r]
    Tensor s;  // [r]
    Tensor v;  // [out,r]
    Tensor bias;
};

struct ReLULayer {};

struct MaxPool2DLayer {
    int64_t k = 2;
    int64_t stride = 2;
};

struct FlattenLayer {};

using LayerSpec = std::variant<Conv2DLayer, DenseLayer, DecomposedConv2DLayer,
                               DecomposedDenseLayer, ReLULayer, MaxPool2DLayer, FlattenLayer>;

const char* layer_kind(const LayerSpec& layer);

// Validates that factor extents match (geom, r) / (in, out, r); throws on
// any mismatch.
void validate_layer(const LayerSpec& layer);

struct Model {
    std::string name;
    std::vector<int64_t> input_shape;  // [C,H,W]
    int64_t num_classes = 0;
    std::vector<LayerSpec> layers;
};

// Per-layer output shapes for a single sample (no batch axis). Throws on
// the first incompatible layer, naming it.
std::vector<std::vector<int64_t>> infer_shapes(const Model& model);

int64_t count_params(const LayerSpec& layer);
int64_t count_params(const Model& model);

// Indices of Conv2D and Dense layers, in order. Decomposed layers are not
// re-optimizable.
std::vector<int64_t> optimizable_indices(const Model& model);

// Value-semantic replacement; verifies the new layer keeps the model's
// shape contract intact.
Model replace_layer(const Model& model, int64_t index, LayerSpec layer);

// Pointers to the trainable tensors of a layer, in serialization order.
std::vector<Tensor*> layer_params(LayerSpec& layer);
std::vector<const Tensor*> layer_params(const LayerSpec& layer);

// Checkpoint format: magic "NLTM", little-endian u32 version, u64 header
// length, UTF-8 text header, then per-tensor float32 blobs each followed
// by a CRC32. Bit-exact across platforms.
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

uint32_t crc32(const unsigned char* data, size_t len);

}  // namespace nltm
