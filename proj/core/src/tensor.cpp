#include "nltm/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace nltm {

namespace {

int64_t checked_size(const std::vector<int64_t>& shape) {
    if (shape.empty() || shape.size() > 4) {
        throw std::invalid_argument("Tensor rank must be between 1 and 4, got " +
                                    std::to_string(shape.size()));
    }
    int64_t n = 1;
    for (int64_t e : shape) {
        if (e < 1) throw std::invalid_argument("Tensor extents must be >= 1");
        n *= e;
    }
    return n;
}

}  // namespace

Tensor::Tensor(std::vector<int64_t> shape)
    : shape_(std::move(shape)), data_(static_cast<size_t>(checked_size(shape_)), 0.0) {}

Tensor::Tensor(std::vector<int64_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_size(shape_) != static_cast<int64_t>(data_.size())) {
        throw std::invalid_argument("Tensor data length does not match shape product");
    }
}

Tensor Tensor::full(std::vector<int64_t> shape, double value) {
    Tensor t(std::move(shape));
    for (auto& v : t.data_) v = value;
    return t;
}

Tensor Tensor::identity(int64_t n) {
    Tensor t({n, n});
    for (int64_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

Tensor Tensor::reshape(std::vector<int64_t> new_shape) const {
    if (checked_size(new_shape) != size()) {
        throw std::invalid_argument("reshape: element count mismatch");
    }
    return Tensor(std::move(new_shape), data_);
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << 'x';
        os << shape_[i];
    }
    os << ']';
    return os.str();
}

double Tensor::frobenius_norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
}

int64_t ConvGeometry::out_h(int64_t in_h) const {
    const int64_t num = in_h + 2 * pad_h - kernel_h;
    if (num < 0 || num % stride_h != 0) {
        throw std::invalid_argument("conv geometry: output height (" + std::to_string(in_h) +
                                    " + 2*" + std::to_string(pad_h) + " - " +
                                    std::to_string(kernel_h) + ") not divisible by stride " +
                                    std::to_string(stride_h));
    }
    return num / stride_h + 1;
}

int64_t ConvGeometry::out_w(int64_t in_w) const {
    const int64_t num = in_w + 2 * pad_w - kernel_w;
    if (num < 0 || num % stride_w != 0) {
        throw std::invalid_argument("conv geometry: output width (" + std::to_string(in_w) +
                                    " + 2*" + std::to_string(pad_w) + " - " +
                                    std::to_string(kernel_w) + ") not divisible by stride " +
                                    std::to_string(stride_w));
    }
    return num / stride_w + 1;
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const ConvGeometry& geom) {
    if (input.rank() != 4) throw std::invalid_argument("conv2d: input must be [N,C,H,W]");
    if (kernel.rank() != 4) throw std::invalid_argument("conv2d: kernel must be [out,in,kh,kw]");
    const int64_t n = input.extent(0), c = input.extent(1), h = input.extent(2),
                  w = input.extent(3);
    if (c != geom.in_ch) {
        throw std::invalid_argument("conv2d: input has " + std::to_string(c) +
                                    " channels, geometry expects " + std::to_string(geom.in_ch));
    }
    if (kernel.extent(0) != geom.out_ch || kernel.extent(1) != geom.in_ch ||
        kernel.extent(2) != geom.kernel_h || kernel.extent(3) != geom.kernel_w) {
        throw std::invalid_argument("conv2d: kernel shape " + kernel.shape_str() +
                                    " does not match geometry");
    }
    const int64_t oh = geom.out_h(h), ow = geom.out_w(w);
    Tensor out({n, geom.out_ch, oh, ow});
    for (int64_t in = 0; in < n; ++in) {
        for (int64_t oc = 0; oc < geom.out_ch; ++oc) {
            for (int64_t y = 0; y < oh; ++y) {
                for (int64_t x = 0; x < ow; ++x) {
                    double acc = 0.0;
                    for (int64_t ic = 0; ic < geom.in_ch; ++ic) {
                        for (int64_t ky = 0; ky < geom.kernel_h; ++ky) {
                            const int64_t iy = y * geom.stride_h + ky - geom.pad_h;
                            if (iy < 0 || iy >= h) continue;
                            for (int64_t kx = 0; kx < geom.kernel_w; ++kx) {
                                const int64_t ix = x * geom.stride_w + kx - geom.pad_w;
                                if (ix < 0 || ix >= w) continue;
                                acc += input.at(in, ic, iy, ix) * kernel.at(oc, ic, ky, kx);
                            }
                        }
                    }
                    out.at(in, oc, y, x) = acc;
                }
            }
        }
    }
    return out;
}

Tensor conv2d_depthwise(const Tensor& input, const Tensor& kernel,
                        int64_t stride_h, int64_t stride_w, int64_t pad_h, int64_t pad_w) {
    if (input.rank() != 4) throw std::invalid_argument("depthwise: input must be [N,C,H,W]");
    if (kernel.rank() != 3 || kernel.extent(0) != input.extent(1)) {
        throw std::invalid_argument("depthwise: kernel must be [C,kh,kw] with C matching input");
    }
    const int64_t n = input.extent(0), c = input.extent(1), h = input.extent(2),
                  w = input.extent(3);
    const int64_t kh = kernel.extent(1), kw = kernel.extent(2);
    ConvGeometry g{kh, kw, stride_h, stride_w, pad_h, pad_w, c, c};
    const int64_t oh = g.out_h(h), ow = g.out_w(w);
    Tensor out({n, c, oh, ow});
    for (int64_t in = 0; in < n; ++in) {
        for (int64_t ic = 0; ic < c; ++ic) {
            for (int64_t y = 0; y < oh; ++y) {
                for (int64_t x = 0; x < ow; ++x) {
                    double acc = 0.0;
                    for (int64_t ky = 0; ky < kh; ++ky) {
                        const int64_t iy = y * stride_h + ky - pad_h;
                        if (iy < 0 || iy >= h) continue;
                        for (int64_t kx = 0; kx < kw; ++kx) {
                            const int64_t ix = x * stride_w + kx - pad_w;
                            if (ix < 0 || ix >= w) continue;
                            acc += input.at(in, ic, iy, ix) * kernel.at(ic, ky, kx);
                        }
                    }
                    out.at(in, ic, y, x) = acc;
                }
            }
        }
    }
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) throw std::invalid_argument("matmul: rank-2 operands required");
    if (a.extent(1) != b.extent(0)) {
        throw std::invalid_argument("matmul: inner extents differ, " + a.shape_str() + " vs " +
                                    b.shape_str());
    }
    const int64_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
    Tensor out({m, n});
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t p = 0; p < k; ++p) {
            const double av = a.at(i, p);
            if (av == 0.0) continue;
            for (int64_t j = 0; j < n; ++j) out.at(i, j) += av * b.at(p, j);
        }
    }
    return out;
}

namespace {

// Strides of the column index space of unfold(t, mode): row-major over the
// remaining axes in ascending axis order.
std::vector<int64_t> row_major_strides(const std::vector<int64_t>& shape) {
    std::vector<int64_t> s(shape.size(), 1);
    for (size_t i = shape.size(); i-- > 1;) s[i - 1] = s[i] * shape[i];
    return s;
}

}  // namespace

Tensor unfold(const Tensor& t, int64_t mode) {
    if (mode < 0 || mode >= t.rank()) throw std::invalid_argument("unfold: mode out of range");
    const auto& shape = t.shape();
    const auto strides = row_major_strides(shape);
    const int64_t rows = shape[static_cast<size_t>(mode)];
    const int64_t cols = t.size() / rows;
    Tensor out({rows, cols});
    std::vector<int64_t> rest;  // axes other than mode, ascending
    for (int64_t a = 0; a < t.rank(); ++a)
        if (a != mode) rest.push_back(a);
    for (int64_t r = 0; r < rows; ++r) {
        for (int64_t c = 0; c < cols; ++c) {
            int64_t lin = r * strides[static_cast<size_t>(mode)];
            int64_t rem = c;
            for (size_t k = rest.size(); k-- > 0;) {
                const int64_t ax = rest[k];
                const int64_t e = shape[static_cast<size_t>(ax)];
                lin += (rem % e) * strides[static_cast<size_t>(ax)];
                rem /= e;
            }
            out.at(r, c) = t[lin];
        }
    }
    return out;
}

Tensor fold(const Tensor& m, int64_t mode, const std::vector<int64_t>& shape) {
    if (m.rank() != 2) throw std::invalid_argument("fold: matrix required");
    Tensor out(shape);
    if (mode < 0 || mode >= out.rank()) throw std::invalid_argument("fold: mode out of range");
    if (m.extent(0) != shape[static_cast<size_t>(mode)] || m.size() != out.size()) {
        throw std::invalid_argument("fold: shape mismatch");
    }
    const auto strides = row_major_strides(shape);
    std::vector<int64_t> rest;
    for (int64_t a = 0; a < out.rank(); ++a)
        if (a != mode) rest.push_back(a);
    const int64_t rows = m.extent(0), cols = m.extent(1);
    for (int64_t r = 0; r < rows; ++r) {
        for (int64_t c = 0; c < cols; ++c) {
            int64_t lin = r * strides[static_cast<size_t>(mode)];
            int64_t rem = c;
            for (size_t k = rest.size(); k-- > 0;) {
                const int64_t ax = rest[k];
                const int64_t e = shape[static_cast<size_t>(ax)];
                lin += (rem % e) * strides[static_cast<size_t>(ax)];
                rem /= e;
            }
            out[lin] = m.at(r, c);
        }
    }
    return out;
}

}  // namespace nltm
