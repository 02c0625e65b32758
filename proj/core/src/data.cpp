#include "nltm/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace nltm {

namespace {

uint32_t read_be_u32(std::istream& in, const std::string& what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        throw std::runtime_error("idx: truncated while reading " + what);
    }
    return (static_cast<uint32_t>(b[0]) << 24) | (static_cast<uint32_t>(b[1]) << 16) |
           (static_cast<uint32_t>(b[2]) << 8) | static_cast<uint32_t>(b[3]);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream imf(images_path, std::ios::binary);
    if (!imf) throw std::runtime_error("idx: cannot open " + images_path);
    const uint32_t im_magic = read_be_u32(imf, "image magic");
    if (im_magic != 0x00000803u) {
        throw std::runtime_error("idx: bad magic in " + images_path + " (expected 0x00000803)");
    }
    const int64_t n = read_be_u32(imf, "image count");
    const int64_t h = read_be_u32(imf, "image rows");
    const int64_t w = read_be_u32(imf, "image cols");

    std::ifstream lbf(labels_path, std::ios::binary);
    if (!lbf) throw std::runtime_error("idx: cannot open " + labels_path);
    const uint32_t lb_magic = read_be_u32(lbf, "label magic");
    if (lb_magic != 0x00000801u) {
        throw std::runtime_error("idx: bad magic in " + labels_path + " (expected 0x00000801)");
    }
    const int64_t nl = read_be_u32(lbf, "label count");
    if (n != nl) {
        throw std::runtime_error("idx: image count " + std::to_string(n) +
                                 " does not match label count " + std::to_string(nl));
    }

    Dataset ds;
    ds.images = Tensor({n, 1, h, w});
    std::vector<unsigned char> row(static_cast<size_t>(h * w));
    for (int64_t i = 0; i < n; ++i) {
        if (!imf.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()))) {
            throw std::runtime_error("idx: truncated image data at sample " + std::to_string(i));
        }
        for (int64_t p = 0; p < h * w; ++p) {
            ds.images[i * h * w + p] = static_cast<double>(row[static_cast<size_t>(p)]) / 255.0;
        }
    }
    ds.labels.resize(static_cast<size_t>(n));
    std::vector<unsigned char> lab(static_cast<size_t>(n));
    if (!lbf.read(reinterpret_cast<char*>(lab.data()), static_cast<std::streamsize>(n))) {
        throw std::runtime_error("idx: truncated label data");
    }
    int64_t max_label = 0;
    for (int64_t i = 0; i < n; ++i) {
        ds.labels[static_cast<size_t>(i)] = lab[static_cast<size_t>(i)];
        max_label = std::max<int64_t>(max_label, lab[static_cast<size_t>(i)]);
    }
    ds.num_classes = max_label + 1;
    return ds;
}

namespace {

void draw_shape(Tensor& img, int64_t sample, int64_t hw, int64_t cls, Rng& rng) {
    const double cx = hw / 2.0 + rng.uniform(-hw * 0.1, hw * 0.1);
    const double cy = hw / 2.0 + rng.uniform(-hw * 0.1, hw * 0.1);
    const double radius = hw * rng.uniform(0.22, 0.34);
    for (int64_t y = 0; y < hw; ++y) {
        for (int64_t x = 0; x < hw; ++x) {
            const double dx = x - cx, dy = y - cy;
            double v = 0.0;
            switch (cls) {
                case 0:  // filled square
                    v = (std::abs(dx) <= radius && std::abs(dy) <= radius) ? 1.0 : 0.0;
                    break;
                case 1:  // filled circle
                    v = (dx * dx + dy * dy <= radius * radius) ? 1.0 : 0.0;
                    break;
                case 2:  // cross
                    v = ((std::abs(dx) <= radius * 0.35 && std::abs(dy) <= radius) ||
                         (std::abs(dy) <= radius * 0.35 && std::abs(dx) <= radius))
                            ? 1.0
                            : 0.0;
                    break;
                default:  // horizontal stripes
                    v = (std::abs(dx) <= radius && std::abs(dy) <= radius &&
                         ((y / 2) % 2 == 0))
                            ? 1.0
                            : 0.0;
                    break;
            }
            v += rng.normal(0.0, 0.05);
            img[(sample * hw + y) * hw + x] = std::clamp(v, 0.0, 1.0);
        }
    }
}

}  // namespace

Dataset synth_shapes(int64_t n_per_class, int64_t num_classes, int64_t hw, uint64_t seed) {
    if (num_classes < 1 || num_classes > 4) {
        throw std::invalid_argument("synth_shapes: num_classes must be in [1,4]");
    }
    if (hw < 12) throw std::invalid_argument("synth_shapes: hw must be >= 12");
    if (n_per_class < 1) throw std::invalid_argument("synth_shapes: n_per_class must be >= 1");
    const int64_t n = n_per_class * num_classes;
    Dataset ds;
    ds.num_classes = num_classes;
    ds.images = Tensor({n, 1, hw, hw});
    ds.labels.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        const int64_t cls = i % num_classes;
        Rng rng(Rng::mix(seed, static_cast<uint64_t>(i)));
        draw_shape(ds.images, i, hw, cls, rng);
        ds.labels[static_cast<size_t>(i)] = cls;
    }
    return ds;
}

ZNormStats znorm_stats(const Dataset& train) {
    if (train.size() == 0) throw std::invalid_argument("znorm_stats: empty dataset");
    const int64_t n = train.size(), c = train.images.extent(1), h = train.images.extent(2),
                  w = train.images.extent(3);
    ZNormStats st;
    st.mean.assign(static_cast<size_t>(c), 0.0);
    st.std.assign(static_cast<size_t>(c), 0.0);
    const int64_t per_ch = n * h * w;
    for (int64_t i = 0; i < n; ++i)
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t p = 0; p < h * w; ++p)
                st.mean[static_cast<size_t>(ch)] += train.images[(i * c + ch) * h * w + p];
    for (auto& m : st.mean) m /= static_cast<double>(per_ch);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t p = 0; p < h * w; ++p) {
                const double d =
                    train.images[(i * c + ch) * h * w + p] - st.mean[static_cast<size_t>(ch)];
                st.std[static_cast<size_t>(ch)] += d * d;
            }
    for (auto& s : st.std) s = std::max(std::sqrt(s / static_cast<double>(per_ch)), 1e-8);
    return st;
}

Tensor apply_znorm(const Tensor& batch, const ZNormStats& stats) {
    const int64_t n = batch.extent(0), c = batch.extent(1), h = batch.extent(2),
                  w = batch.extent(3);
    if (static_cast<size_t>(c) != stats.mean.size()) {
        throw std::invalid_argument("apply_znorm: channel count mismatch");
    }
    Tensor out = batch;
    for (int64_t i = 0; i < n; ++i)
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t p = 0; p < h * w; ++p) {
                double& v = out[(i * c + ch) * h * w + p];
                v = (v - stats.mean[static_cast<size_t>(ch)]) / stats.std[static_cast<size_t>(ch)];
            }
    return out;
}

Dataset apply_znorm(const Dataset& data, const ZNormStats& stats) {
    Dataset out = data;
    out.images = apply_znorm(data.images, stats);
    return out;
}

namespace {

// Bilinear resize of one channel plane from (sh,sw) within src to (h,w).
void bilinear_into(const std::vector<double>& src, int64_t sh, int64_t sw, double* dst,
                   int64_t h, int64_t w) {
    for (int64_t y = 0; y < h; ++y) {
        const double fy = (h == 1) ? 0.0 : static_cast<double>(y) * (sh - 1) / (h - 1);
        const int64_t y0 = static_cast<int64_t>(fy);
        const int64_t y1 = std::min(y0 + 1, sh - 1);
        const double wy = fy - y0;
        for (int64_t x = 0; x < w; ++x) {
            const double fx = (w == 1) ? 0.0 : static_cast<double>(x) * (sw - 1) / (w - 1);
            const int64_t x0 = static_cast<int64_t>(fx);
            const int64_t x1 = std::min(x0 + 1, sw - 1);
            const double wx = fx - x0;
            const double a = src[static_cast<size_t>(y0 * sw + x0)] * (1 - wx) +
                             src[static_cast<size_t>(y0 * sw + x1)] * wx;
            const double b = src[static_cast<size_t>(y1 * sw + x0)] * (1 - wx) +
                             src[static_cast<size_t>(y1 * sw + x1)] * wx;
            dst[y * w + x] = a * (1 - wy) + b * wy;
        }
    }
}

}  // namespace

Tensor augment_sample(const Tensor& chw, const AugmentConfig& cfg, Rng& rng) {
    if (chw.rank() != 3) throw std::invalid_argument("augment_sample: [C,H,W] expected");
    if (cfg.crop_fraction <= 0.0 || cfg.crop_fraction > 1.0) {
        throw std::invalid_argument("augment_sample: crop_fraction must be in (0,1]");
    }
    const int64_t c = chw.extent(0), h = chw.extent(1), w = chw.extent(2);
    const int64_t ch2 = std::max<int64_t>(1, static_cast<int64_t>(cfg.crop_fraction * h));
    const int64_t cw2 = std::max<int64_t>(1, static_cast<int64_t>(cfg.crop_fraction * w));
    const int64_t oy = (ch2 < h) ? rng.uniform_int(h - ch2 + 1) : 0;
    const int64_t ox = (cw2 < w) ? rng.uniform_int(w - cw2 + 1) : 0;
    const bool flip = rng.uniform() < cfg.flip_prob;

    Tensor out({c, h, w});
    std::vector<double> crop(static_cast<size_t>(ch2 * cw2));
    for (int64_t ch = 0; ch < c; ++ch) {
        for (int64_t y = 0; y < ch2; ++y)
            for (int64_t x = 0; x < cw2; ++x)
                crop[static_cast<size_t>(y * cw2 + x)] = chw.at(ch, oy + y, ox + x);
        if (ch2 == h && cw2 == w) {
            for (int64_t p = 0; p < h * w; ++p) out[ch * h * w + p] = crop[static_cast<size_t>(p)];
        } else {
            bilinear_into(crop, ch2, cw2, out.data() + ch * h * w, h, w);
        }
    }
    if (flip) {
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t y = 0; y < h; ++y)
                for (int64_t x = 0; x < w / 2; ++x)
                    std::swap(out.at(ch, y, x), out.at(ch, y, w - 1 - x));
    }
    return out;
}

std::pair<Dataset, Dataset> stratified_split(const Dataset& data, double held_out_fraction,
                                             uint64_t seed) {
    if (held_out_fraction < 0.0 || held_out_fraction >= 1.0) {
        throw std::invalid_argument("stratified_split: fraction must be in [0,1)");
    }
    std::vector<std::vector<int64_t>> by_class(static_cast<size_t>(data.num_classes));
    for (int64_t i = 0; i < data.size(); ++i)
        by_class[static_cast<size_t>(data.labels[static_cast<size_t>(i)])].push_back(i);
    std::vector<int64_t> kept_idx, held_idx;
    Rng rng(seed);
    for (auto& idx : by_class) {
        rng.shuffle(idx);
        const size_t n_held = static_cast<size_t>(held_out_fraction * idx.size());
        for (size_t i = 0; i < idx.size(); ++i) {
            (i < n_held ? held_idx : kept_idx).push_back(idx[i]);
        }
    }
    std::sort(kept_idx.begin(), kept_idx.end());
    std::sort(held_idx.begin(), held_idx.end());

    const auto subset = [&](const std::vector<int64_t>& idx) {
        Dataset out;
        out.num_classes = data.num_classes;
        const int64_t c = data.images.extent(1), h = data.images.extent(2),
                      w = data.images.extent(3);
        const int64_t per = c * h * w;
        out.images = Tensor({std::max<int64_t>(1, static_cast<int64_t>(idx.size())), c, h, w});
        out.labels.resize(idx.size());
        for (size_t i = 0; i < idx.size(); ++i) {
            std::memcpy(out.images.data() + static_cast<int64_t>(i) * per,
                        data.images.data() + idx[i] * per, static_cast<size_t>(per) * 8);
            out.labels[i] = data.labels[static_cast<size_t>(idx[i])];
        }
        return out;
    };
    return {subset(kept_idx), subset(held_idx)};
}

Tensor sample_image(const Dataset& data, int64_t i) {
    const int64_t c = data.images.extent(1), h = data.images.extent(2), w = data.images.extent(3);
    Tensor out({c, h, w});
    std::memcpy(out.data(), data.images.data() + i * c * h * w, static_cast<size_t>(c * h * w) * 8);
    return out;
}

}  // namespace nltm
