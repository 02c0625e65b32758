#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace nltm {

/// Dense n-dimensional value tensor, 64-bit floats, row-major.
/// Immutable by convention once handed to another module; all kernels
/// below are pure functions.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int64_t> shape);
    Tensor(std::vector<int64_t> shape, std::vector<double> data);

    static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int64_t> shape, double value);
    static Tensor identity(int64_t n);

    const std::vector<int64_t>& shape() const { return shape_; }
    int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
    int64_t extent(int64_t axis) const { return shape_[static_cast<size_t>(axis)]; }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<const double> values() const { return data_; }
    std::span<double> values() { return data_; }

    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // Row-major indexers for the ranks the engine uses.
    double& at(int64_t i) { return data_[static_cast<size_t>(i)]; }
    double at(int64_t i) const { return data_[static_cast<size_t>(i)]; }
    double& at(int64_t i, int64_t j) { return data_[static_cast<size_t>(i * shape_[1] + j)]; }
    double at(int64_t i, int64_t j) const { return data_[static_cast<size_t>(i * shape_[1] + j)]; }
    double& at(int64_t i, int64_t j, int64_t k) {
        return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
    }
    double at(int64_t i, int64_t j, int64_t k) const {
        return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
    }
    double& at(int64_t i, int64_t j, int64_t k, int64_t l) {
        return data_[static_cast<size_t>(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
    }
    double at(int64_t i, int64_t j, int64_t k, int64_t l) const {
        return data_[static_cast<size_t>(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
    }

    Tensor reshape(std::vector<int64_t> new_shape) const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    std::string shape_str() const;

    double frobenius_norm() const;

private:
    std::vector<int64_t> shape_;
    std::vector<double> data_;
};

/// Geometry of a 2-D convolution: kernel extent, stride, and zero padding.
struct ConvGeometry {
    int64_t kernel_h = 1;
    int64_t kernel_w = 1;
    int64_t stride_h = 1;
    int64_t stride_w = 1;
    int64_t pad_h = 0;
    int64_t pad_w = 0;
    int64_t in_ch = 1;
    int64_t out_ch = 1;

    // Output spatial extent; throws if the division is not exact.
    int64_t out_h(int64_t in_h) const;
    int64_t out_w(int64_t in_w) const;

    bool operator==(const ConvGeometry&) const = default;
};

// Direct cross-correlation with zero padding. input [N,C,H,W],
// kernel [out,in,kh,kw] -> [N,out,H',W']. Bias is not applied here.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const ConvGeometry& geom);

// Depthwise variant: kernel [C,kh,kw], one filter per input channel.
Tensor conv2d_depthwise(const Tensor& input, const Tensor& kernel,
                        int64_t stride_h, int64_t stride_w, int64_t pad_h, int64_t pad_w);

Tensor matmul(const Tensor& a, const Tensor& b);

// Mode-n matricization: rows indexed by `mode`, columns row-major over the
// remaining axes in ascending axis order.
Tensor unfold(const Tensor& t, int64_t mode);

// Inverse of unfold for the given original shape.
Tensor fold(const Tensor& m, int64_t mode, const std::vector<int64_t>& shape);

}  // namespace nltm
