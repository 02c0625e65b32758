#include "nltm/runtime.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace nltm {

namespace {

// ---------------------------------------------------------------------------
// Forward passes with caches for backprop
// ---------------------------------------------------------------------------

struct LayerCache {
    Tensor out;
    std::vector<Tensor> aux;          // decomposed-conv stage outputs, dense inputs, ...
    std::vector<int64_t> argmax;      // maxpool winners
};

Tensor add_bias_nchw(Tensor t, const Tensor& bias) {
    const int64_t n = t.extent(0), c = t.extent(1), hw = t.extent(2) * t.extent(3);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t ch = 0; ch < c; ++ch) {
            const double b = bias[ch];
            double* p = t.data() + (i * c + ch) * hw;
            for (int64_t k = 0; k < hw; ++k) p[k] += b;
        }
    return t;
}

Tensor dw_vertical_kernel(const DecomposedConv2DLayer& dc) {
    return dc.f2.reshape({dc.rank, dc.geom.kernel_h, 1});
}

Tensor dw_horizontal_kernel(const DecomposedConv2DLayer& dc) {
    return dc.f1.reshape({dc.rank, 1, dc.geom.kernel_w});
}

LayerCache forward_layer(const LayerSpec& layer, const Tensor& in) {
    LayerCache cache;
    if (const auto* c = std::get_if<Conv2DLayer>(&layer)) {
        cache.out = add_bias_nchw(conv2d(in, c->weight, c->geom), c->bias);
    } else if (const auto* d = std::get_if<DenseLayer>(&layer)) {
        Tensor y = matmul(in, d->weight);
        for (int64_t i = 0; i < y.extent(0); ++i)
            for (int64_t j = 0; j < d->out; ++j) y.at(i, j) += d->bias[j];
        cache.out = std::move(y);
    } else if (const auto* dc = std::get_if<DecomposedConv2DLayer>(&layer)) {
        const auto& g = dc->geom;
        ConvGeometry pw_in{1, 1, 1, 1, 0, 0, g.in_ch, dc->rank};
        Tensor a = conv2d(in, dc->f3, pw_in);
        Tensor b = conv2d_depthwise(a, dw_vertical_kernel(*dc), g.stride_h, 1, g.pad_h, 0);
        Tensor c2 = conv2d_depthwise(b, dw_horizontal_kernel(*dc), 1, g.stride_w, 0, g.pad_w);
        ConvGeometry pw_out{1, 1, 1, 1, 0, 0, dc->rank, g.out_ch};
        cache.out = add_bias_nchw(conv2d(c2, dc->f4, pw_out), dc->bias);
        cache.aux = {std::move(a), std::move(b), std::move(c2)};
    } else if (const auto* dd = std::get_if<DecomposedDenseLayer>(&layer)) {
        Tensor h1 = matmul(in, dd->u);  // [N,r]
        Tensor h2 = h1;
        for (int64_t i = 0; i < h2.extent(0); ++i)
            for (int64_t r = 0; r < dd->rank; ++r) h2.at(i, r) *= dd->s[r];
        Tensor y({h2.extent(0), dd->out});
        for (int64_t i = 0; i < y.extent(0); ++i)
            for (int64_t o = 0; o < dd->out; ++o) {
                double acc = dd->bias[o];
                for (int64_t r = 0; r < dd->rank; ++r) acc += h2.at(i, r) * dd->v.at(o, r);
                y.at(i, o) = acc;
            }
        cache.out = std::move(y);
        cache.aux = {std::move(h1), std::move(h2)};
    } else if (std::holds_alternative<ReLULayer>(layer)) {
        Tensor y = in;
        for (int64_t i = 0; i < y.size(); ++i) y[i] = std::max(y[i], 0.0);
        cache.out = std::move(y);
    } else if (const auto* mp = std::get_if<MaxPool2DLayer>(&layer)) {
        const int64_t n = in.extent(0), c = in.extent(1), h = in.extent(2), w = in.extent(3);
        const int64_t oh = (h - mp->k) / mp->stride + 1, ow = (w - mp->k) / mp->stride + 1;
        Tensor y({n, c, oh, ow});
        cache.argmax.resize(static_cast<size_t>(y.size()));
        int64_t oidx = 0;
        for (int64_t i = 0; i < n; ++i)
            for (int64_t ch = 0; ch < c; ++ch)
                for (int64_t oy = 0; oy < oh; ++oy)
                    for (int64_t ox = 0; ox < ow; ++ox, ++oidx) {
                        double best = -1e300;
                        int64_t best_lin = 0;
                        for (int64_t ky = 0; ky < mp->k; ++ky)
                            for (int64_t kx = 0; kx < mp->k; ++kx) {
                                const int64_t iy = oy * mp->stride + ky;
                                const int64_t ix = ox * mp->stride + kx;
                                const int64_t lin = ((i * c + ch) * h + iy) * w + ix;
                                if (in[lin] > best) {
                                    best = in[lin];
                                    best_lin = lin;
                                }
                            }
                        y[oidx] = best;
                        cache.argmax[static_cast<size_t>(oidx)] = best_lin;
                    }
        cache.out = std::move(y);
    } else {  // Flatten
        cache.out = in.reshape({in.extent(0), in.size() / in.extent(0)});
    }
    return cache;
}

// ---------------------------------------------------------------------------
// Backward passes
// ---------------------------------------------------------------------------

void conv2d_backward(const Tensor& input, const Tensor& kernel, const ConvGeometry& g,
                     const Tensor& d_out, Tensor& d_input, Tensor& d_kernel) {
    const int64_t n = input.extent(0), h = input.extent(2), w = input.extent(3);
    const int64_t oh = d_out.extent(2), ow = d_out.extent(3);
    for (int64_t in = 0; in < n; ++in)
        for (int64_t oc = 0; oc < g.out_ch; ++oc)
            for (int64_t y = 0; y < oh; ++y)
                for (int64_t x = 0; x < ow; ++x) {
                    const double go = d_out.at(in, oc, y, x);
                    if (go == 0.0) continue;
                    for (int64_t ic = 0; ic < g.in_ch; ++ic)
                        for (int64_t ky = 0; ky < g.kernel_h; ++ky) {
                            const int64_t iy = y * g.stride_h + ky - g.pad_h;
                            if (iy < 0 || iy >= h) continue;
                            for (int64_t kx = 0; kx < g.kernel_w; ++kx) {
                                const int64_t ix = x * g.stride_w + kx - g.pad_w;
                                if (ix < 0 || ix >= w) continue;
                                d_kernel.at(oc, ic, ky, kx) += go * input.at(in, ic, iy, ix);
                                d_input.at(in, ic, iy, ix) += go * kernel.at(oc, ic, ky, kx);
                            }
                        }
                }
}

void depthwise_backward(const Tensor& input, const Tensor& kernel, int64_t stride_h,
                        int64_t stride_w, int64_t pad_h, int64_t pad_w, const Tensor& d_out,
                        Tensor& d_input, Tensor& d_kernel) {
    const int64_t n = input.extent(0), c = input.extent(1), h = input.extent(2),
                  w = input.extent(3);
    const int64_t kh = kernel.extent(1), kw = kernel.extent(2);
    const int64_t oh = d_out.extent(2), ow = d_out.extent(3);
    for (int64_t in = 0; in < n; ++in)
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t y = 0; y < oh; ++y)
                for (int64_t x = 0; x < ow; ++x) {
                    const double go = d_out.at(in, ch, y, x);
                    if (go == 0.0) continue;
                    for (int64_t ky = 0; ky < kh; ++ky) {
                        const int64_t iy = y * stride_h + ky - pad_h;
                        if (iy < 0 || iy >= h) continue;
                        for (int64_t kx = 0; kx < kw; ++kx) {
                            const int64_t ix = x * stride_w + kx - pad_w;
                            if (ix < 0 || ix >= w) continue;
                            d_kernel.at(ch, ky, kx) += go * input.at(in, ch, iy, ix);
                            d_input.at(in, ch, iy, ix) += go * kernel.at(ch, ky, kx);
                        }
                    }
                }
}

Tensor bias_grad_nchw(const Tensor& d_out) {
    Tensor g({d_out.extent(1)});
    const int64_t n = d_out.extent(0), c = d_out.extent(1), hw = d_out.extent(2) * d_out.extent(3);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t ch = 0; ch < c; ++ch) {
            const double* p = d_out.data() + (i * c + ch) * hw;
            double acc = 0.0;
            for (int64_t k = 0; k < hw; ++k) acc += p[k];
            g[ch] += acc;
        }
    return g;
}

// d_out -> (d_in, param grads in layer_params order)
Tensor backward_layer(const LayerSpec& layer, const Tensor& in, const LayerCache& cache,
                      const Tensor& d_out, std::vector<Tensor>& grads) {
    if (const auto* c = std::get_if<Conv2DLayer>(&layer)) {
        Tensor d_in(in.shape()), d_w(c->weight.shape());
        conv2d_backward(in, c->weight, c->geom, d_out, d_in, d_w);
        grads = {std::move(d_w), bias_grad_nchw(d_out)};
        return d_in;
    }
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
        const int64_t n = in.extent(0);
        Tensor d_w(d->weight.shape()), d_b({d->out}), d_in(in.shape());
        for (int64_t i = 0; i < n; ++i)
            for (int64_t o = 0; o < d->out; ++o) {
                const double go = d_out.at(i, o);
                if (go == 0.0) continue;
                d_b[o] += go;
                for (int64_t k = 0; k < d->in; ++k) {
                    d_w.at(k, o) += go * in.at(i, k);
                    d_in.at(i, k) += go * d->weight.at(k, o);
                }
            }
        grads = {std::move(d_w), std::move(d_b)};
        return d_in;
    }
    if (const auto* dc = std::get_if<DecomposedConv2DLayer>(&layer)) {
        const auto& g = dc->geom;
        const Tensor& a = cache.aux[0];
        const Tensor& b = cache.aux[1];
        const Tensor& c2 = cache.aux[2];
        // stage 4: pointwise r -> out
        ConvGeometry pw_out{1, 1, 1, 1, 0, 0, dc->rank, g.out_ch};
        Tensor d_c2(c2.shape()), d_f4(dc->f4.shape());
        conv2d_backward(c2, dc->f4, pw_out, d_out, d_c2, d_f4);
        // stage 3: horizontal depthwise
        Tensor kh1 = dw_horizontal_kernel(*dc);
        Tensor d_b(b.shape()), d_k1({dc->rank, 1, g.kernel_w});
        depthwise_backward(b, kh1, 1, g.stride_w, 0, g.pad_w, d_c2, d_b, d_k1);
        // stage 2: vertical depthwise
        Tensor kv = dw_vertical_kernel(*dc);
        Tensor d_a(a.shape()), d_k2({dc->rank, g.kernel_h, 1});
        depthwise_backward(a, kv, g.stride_h, 1, g.pad_h, 0, d_b, d_a, d_k2);
        // stage 1: pointwise in -> r
        ConvGeometry pw_in{1, 1, 1, 1, 0, 0, g.in_ch, dc->rank};
        Tensor d_in(in.shape()), d_f3(dc->f3.shape());
        conv2d_backward(in, dc->f3, pw_in, d_a, d_in, d_f3);
        grads = {d_k1.reshape(dc->f1.shape()), d_k2.reshape(dc->f2.shape()), std::move(d_f3),
                 std::move(d_f4), bias_grad_nchw(d_out)};
        return d_in;
    }
    if (const auto* dd = std::get_if<DecomposedDenseLayer>(&layer)) {
        const Tensor& h1 = cache.aux[0];
        const Tensor& h2 = cache.aux[1];
        const int64_t n = in.extent(0);
        Tensor d_u(dd->u.shape()), d_s(dd->s.shape()), d_v(dd->v.shape()), d_b({dd->out});
        Tensor d_h2({n, dd->rank}), d_in(in.shape());
        for (int64_t i = 0; i < n; ++i)
            for (int64_t o = 0; o < dd->out; ++o) {
                const double go = d_out.at(i, o);
                if (go == 0.0) continue;
                d_b[o] += go;
                for (int64_t r = 0; r < dd->rank; ++r) {
                    d_v.at(o, r) += go * h2.at(i, r);
                    d_h2.at(i, r) += go * dd->v.at(o, r);
                }
            }
        for (int64_t i = 0; i < n; ++i)
            for (int64_t r = 0; r < dd->rank; ++r) {
                const double gh2 = d_h2.at(i, r);
                d_s[r] += gh2 * h1.at(i, r);
                const double gh1 = gh2 * dd->s[r];
                if (gh1 == 0.0) continue;
                for (int64_t k = 0; k < dd->in; ++k) {
                    d_u.at(k, r) += gh1 * in.at(i, k);
                    d_in.at(i, k) += gh1 * dd->u.at(k, r);
                }
            }
        grads = {std::move(d_u), std::move(d_s), std::move(d_v), std::move(d_b)};
        return d_in;
    }
    if (std::holds_alternative<ReLULayer>(layer)) {
        Tensor d_in = d_out;
        for (int64_t i = 0; i < d_in.size(); ++i)
            if (in[i] <= 0.0) d_in[i] = 0.0;
        return d_in;
    }
    if (std::holds_alternative<MaxPool2DLayer>(layer)) {
        Tensor d_in(in.shape());
        for (int64_t i = 0; i < d_out.size(); ++i) d_in[cache.argmax[static_cast<size_t>(i)]] += d_out[i];
        return d_in;
    }
    return d_out.reshape(in.shape());  // Flatten
}

// Softmax cross-entropy, sum-reduced over the batch. d_logits left unscaled.
double ce_loss_sum(const Tensor& logits, std::span<const int64_t> labels, Tensor& d_logits) {
    const int64_t n = logits.extent(0), k = logits.extent(1);
    double loss = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        double m = logits.at(i, 0);
        for (int64_t j = 1; j < k; ++j) m = std::max(m, logits.at(i, j));
        double z = 0.0;
        for (int64_t j = 0; j < k; ++j) z += std::exp(logits.at(i, j) - m);
        const int64_t y = labels[static_cast<size_t>(i)];
        if (y < 0 || y >= k) throw std::invalid_argument("cross-entropy: label out of range");
        loss += std::log(z) - (logits.at(i, y) - m);
        for (int64_t j = 0; j < k; ++j) {
            d_logits.at(i, j) = std::exp(logits.at(i, j) - m) / z - (j == y ? 1.0 : 0.0);
        }
    }
    return loss;
}

GradientSet zero_grads(const Model& model) {
    GradientSet gs;
    gs.layers.resize(model.layers.size());
    for (size_t i = 0; i < model.layers.size(); ++i) {
        for (const Tensor* t : layer_params(model.layers[i])) {
            gs.layers[i].emplace_back(t->shape());
        }
    }
    return gs;
}

// Sum-reduced loss and gradients over one shard of samples.
double grads_sum(const Model& model, const Tensor& batch, std::span<const int64_t> labels,
                 GradientSet& gs) {
    std::vector<LayerCache> caches;
    caches.reserve(model.layers.size());
    const Tensor* cur = &batch;
    for (const auto& layer : model.layers) {
        caches.push_back(forward_layer(layer, *cur));
        cur = &caches.back().out;
    }
    Tensor d_logits(cur->shape());
    const double loss = ce_loss_sum(*cur, labels, d_logits);
    Tensor d = std::move(d_logits);
    for (size_t i = model.layers.size(); i-- > 0;) {
        const Tensor& in = (i == 0) ? batch : caches[i - 1].out;
        std::vector<Tensor> layer_grads;
        d = backward_layer(model.layers[i], in, caches[i], d, layer_grads);
        for (size_t p = 0; p < layer_grads.size(); ++p) {
            Tensor& acc = gs.layers[i][p];
            const Tensor& g = layer_grads[p];
            for (int64_t k = 0; k < acc.size(); ++k) acc[k] += g[k];
        }
    }
    return loss;
}

Tensor subbatch(const Tensor& batch, int64_t from, int64_t to) {
    const int64_t per = batch.size() / batch.extent(0);
    std::vector<int64_t> shape = batch.shape();
    shape[0] = to - from;
    Tensor out(shape);
    std::memcpy(out.data(), batch.data() + from * per, static_cast<size_t>((to - from) * per) * 8);
    return out;
}

void check_finite(double loss, const std::string& where) {
    if (!std::isfinite(loss)) {
        throw std::runtime_error("training fault: non-finite loss at " + where);
    }
}

}  // namespace

void SgdMomentum::step(const std::vector<Tensor*>& params,
                       const std::vector<const Tensor*>& grads) {
    if (velocity_.empty()) {
        velocity_.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i)
            velocity_[i].assign(static_cast<size_t>(params[i]->size()), 0.0);
    }
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = *grads[i];
        auto& v = velocity_[i];
        for (int64_t k = 0; k < p.size(); ++k) {
            v[static_cast<size_t>(k)] =
                momentum_ * v[static_cast<size_t>(k)] + g[k] + weight_decay_ * p[k];
            p[k] -= lr_ * v[static_cast<size_t>(k)];
        }
    }
}

Tensor forward(const Model& model, const Tensor& batch) {
    if (batch.rank() != 4 || batch.extent(1) != model.input_shape[0] ||
        batch.extent(2) != model.input_shape[1] || batch.extent(3) != model.input_shape[2]) {
        throw std::invalid_argument("forward: batch shape " + batch.shape_str() +
                                    " does not match model input");
    }
    Tensor cur = batch;
    for (const auto& layer : model.layers) cur = forward_layer(layer, cur).out;
    return cur;
}

std::pair<double, GradientSet> loss_and_grads(const Model& model, const Tensor& batch,
                                              const std::vector<int64_t>& labels) {
    if (batch.extent(0) != static_cast<int64_t>(labels.size())) {
        throw std::invalid_argument("loss_and_grads: batch/label count mismatch");
    }
    GradientSet gs = zero_grads(model);
    const double loss_sum = grads_sum(model, batch, labels, gs);
    const double inv = 1.0 / static_cast<double>(batch.extent(0));
    for (auto& layer : gs.layers)
        for (auto& g : layer)
            for (int64_t k = 0; k < g.size(); ++k) g[k] *= inv;
    const double loss = loss_sum * inv;
    check_finite(loss, "loss_and_grads");
    return {loss, std::move(gs)};
}

TrainResult train(const Model& model, const Dataset& data, const TrainConfig& cfg) {
    SgdMomentum opt(cfg.lr, cfg.momentum, cfg.weight_decay);
    return train(model, data, cfg, opt);
}

TrainResult train(const Model& model, const Dataset& data, const TrainConfig& cfg,
                  Optimizer& opt) {
    if (cfg.batch_size < 1 || cfg.workers < 1 || cfg.lr < 0.0) {
        throw std::invalid_argument("train: invalid configuration");
    }
    TrainResult res{model, {}};
    const int64_t n = data.size();
    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(Rng::mix(cfg.seed, 0x5075ffULL));

    const auto frozen = [&](int64_t li) {
        return std::find(cfg.freeze_layers.begin(), cfg.freeze_layers.end(), li) !=
               cfg.freeze_layers.end();
    };
    std::vector<Tensor*> params;
    for (size_t li = 0; li < res.model.layers.size(); ++li) {
        if (frozen(static_cast<int64_t>(li))) continue;
        for (Tensor* t : layer_params(res.model.layers[li])) params.push_back(t);
    }

    const int64_t per = data.images.size() / n;
    for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (cfg.shuffle) shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        int64_t seen = 0;
        for (int64_t start = 0; start < n; start += cfg.batch_size) {
            const int64_t bsz = std::min(cfg.batch_size, n - start);
            Tensor batch({bsz, data.images.extent(1), data.images.extent(2),
                          data.images.extent(3)});
            std::vector<int64_t> labels(static_cast<size_t>(bsz));
            for (int64_t i = 0; i < bsz; ++i) {
                const int64_t src = order[static_cast<size_t>(start + i)];
                if (cfg.augment) {
                    Rng arng(Rng::mix(Rng::mix(cfg.seed, static_cast<uint64_t>(epoch)),
                                      static_cast<uint64_t>(src)));
                    Tensor aug = augment_sample(sample_image(data, src), cfg.aug, arng);
                    std::memcpy(batch.data() + i * per, aug.data(), static_cast<size_t>(per) * 8);
                } else {
                    std::memcpy(batch.data() + i * per, data.images.data() + src * per,
                                static_cast<size_t>(per) * 8);
                }
                labels[static_cast<size_t>(i)] = data.labels[static_cast<size_t>(src)];
            }

            // Shard the batch across workers; reduce in fixed worker order.
            const int64_t w = std::min<int64_t>(cfg.workers, bsz);
            std::vector<GradientSet> shard_grads(static_cast<size_t>(w));
            std::vector<double> shard_loss(static_cast<size_t>(w), 0.0);
            std::vector<std::thread> threads;
            for (int64_t k = 0; k < w; ++k) {
                const int64_t from = k * bsz / w, to = (k + 1) * bsz / w;
                shard_grads[static_cast<size_t>(k)] = zero_grads(res.model);
                threads.emplace_back([&, k, from, to] {
                    Tensor sb = subbatch(batch, from, to);
                    std::span<const int64_t> sl(labels.data() + from,
                                                static_cast<size_t>(to - from));
                    shard_loss[static_cast<size_t>(k)] =
                        grads_sum(res.model, sb, sl, shard_grads[static_cast<size_t>(k)]);
                });
            }
            for (auto& t : threads) t.join();

            GradientSet total = std::move(shard_grads[0]);
            double loss_sum = shard_loss[0];
            for (int64_t k = 1; k < w; ++k) {
                loss_sum += shard_loss[static_cast<size_t>(k)];
                for (size_t li = 0; li < total.layers.size(); ++li)
                    for (size_t p = 0; p < total.layers[li].size(); ++p) {
                        Tensor& acc = total.layers[li][p];
                        const Tensor& g = shard_grads[static_cast<size_t>(k)].layers[li][p];
                        for (int64_t q = 0; q < acc.size(); ++q) acc[q] += g[q];
                    }
            }
            const double inv = 1.0 / static_cast<double>(bsz);
            const double loss = loss_sum * inv;
            try {
                check_finite(loss, "training step");
            } catch (const std::exception&) {
                throw std::runtime_error("training fault: non-finite loss at epoch " +
                                         std::to_string(epoch) + ", batch " +
                                         std::to_string(start / cfg.batch_size));
            }

            std::vector<Tensor*> grad_ptrs;
            double norm_sq = 0.0;
            for (size_t li = 0; li < total.layers.size(); ++li) {
                if (frozen(static_cast<int64_t>(li))) continue;
                for (auto& g : total.layers[li]) {
                    for (int64_t q = 0; q < g.size(); ++q) {
                        g[q] *= inv;
                        norm_sq += g[q] * g[q];
                    }
                    grad_ptrs.push_back(&g);
                }
            }
            if (cfg.clip_norm > 0.0) {
                const double norm = std::sqrt(norm_sq);
                if (norm > cfg.clip_norm) {
                    const double scale = cfg.clip_norm / norm;
                    for (Tensor* g : grad_ptrs)
                        for (int64_t q = 0; q < g->size(); ++q) (*g)[q] *= scale;
                }
            }
            opt.step(params, {grad_ptrs.begin(), grad_ptrs.end()});
            epoch_loss += loss * static_cast<double>(bsz);
            seen += bsz;
        }
        res.loss_history.push_back(epoch_loss / static_cast<double>(seen));
        if (cfg.log) {
            (*cfg.log) << "epoch " << epoch << " loss " << res.loss_history.back() << "\n";
        }
    }
    return res;
}

double evaluate_top1(const Model& model, const Dataset& data) {
    const int64_t n = data.size();
    if (n == 0) throw std::invalid_argument("evaluate_top1: empty dataset");
    int64_t correct = 0;
    const int64_t chunk = 128;
    for (int64_t start = 0; start < n; start += chunk) {
        const int64_t bsz = std::min(chunk, n - start);
        Tensor batch = subbatch(data.images, start, start + bsz);
        Tensor logits = forward(model, batch);
        for (int64_t i = 0; i < bsz; ++i) {
            int64_t arg = 0;
            double best = logits.at(i, 0);
            for (int64_t j = 1; j < logits.extent(1); ++j) {
                if (logits.at(i, j) > best) {  // ties keep the lowest index
                    best = logits.at(i, j);
                    arg = j;
                }
            }
            if (arg == data.labels[static_cast<size_t>(start + i)]) ++correct;
        }
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(n);
}

}  // namespace nltm
