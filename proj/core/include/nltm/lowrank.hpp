#pragma once

#include <map>
#include <optional>

#include "nltm/model.hpp"
#include "nltm/rng.hpp"
#include "nltm/tensor.hpp"

namespace nltm {

/// Per-layer rank choice for every layer the composed list selects.
using RankAssignment = std::map<int64_t, int64_t>;

struct SvdResult {
    Tensor u;  // [m,r], orthonormal columns
    Tensor s;  // [r], non-negative, non-increasing
    Tensor v;  // [n,r], orthonormal columns
};

struct AlsOptions {
    int64_t max_iters = 200;
    double tol = 1e-7;  // stop when the fit improves by less than this
    int64_t restarts = 3;
    uint64_t seed = 0;
    std::vector<double>* trace = nullptr;  // fit after every sweep, all restarts
};

/// CP factors of a 4-D kernel in the layer's storage convention, plus the
/// relative reconstruction error achieved.
struct ConvFactorSet {
    Tensor f1;  // [r,kw]
    Tensor f2;  // [r,kh]
    Tensor f3;  // [r,in]
    Tensor f4;  // [r,out]
    double fit = 0.0;
};

// Frobenius-optimal rank-r approximation via one-sided Jacobi on the side
// with fewer columns. Throws if r is out of [1, min(m,n)].
SvdResult truncated_svd(const Tensor& a, int64_t r);

// All singular values, non-increasing.
std::vector<double> singular_values(const Tensor& a);

// Rank-r CP fit of kernel [out,in,kh,kw] by alternating least squares;
// best fit across restarts, deterministic per seed. `warm_start` seeds the
// first restart (padded with random columns when its rank is smaller).
ConvFactorSet cp_als(const Tensor& kernel, int64_t r, const AlsOptions& opts,
                     const ConvFactorSet* warm_start = nullptr);

DecomposedDenseLayer decompose_dense(const DenseLayer& layer, int64_t r);
DecomposedConv2DLayer decompose_conv(const Conv2DLayer& layer, int64_t r,
                                     const AlsOptions& opts);

// CP reconstruction of a factor set, in kernel layout [out,in,kh,kw].
Tensor reconstruct_conv_kernel(const ConvFactorSet& f);
Tensor reconstruct_conv_kernel(const DecomposedConv2DLayer& layer);
Tensor reconstruct_dense_weight(const DecomposedDenseLayer& layer);

// ||W - What||_F / ||W||_F; zero-norm originals give 0 when the
// reconstruction is also zero and throw otherwise.
double rel_error(const Tensor& original, const Tensor& reconstructed);

}  // namespace nltm
