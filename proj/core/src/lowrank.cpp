#include "nltm/lowrank.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace nltm {

namespace {

// One-sided Jacobi: orthogonalize the columns of B by plane rotations,
// accumulating them in V. On exit B = U * diag(s) with U's columns
// orthonormal where s > 0.
void one_sided_jacobi(Tensor& b, Tensor& v) {
    const int64_t m = b.extent(0), n = b.extent(1);
    const double eps = 1e-12;
    const int64_t max_sweeps = 60;
    for (int64_t sweep = 0; sweep < max_sweeps; ++sweep) {
        bool rotated = false;
        for (int64_t p = 0; p < n - 1; ++p) {
            for (int64_t q = p + 1; q < n; ++q) {
                double app = 0.0, aqq = 0.0, apq = 0.0;
                for (int64_t i = 0; i < m; ++i) {
                    app += b.at(i, p) * b.at(i, p);
                    aqq += b.at(i, q) * b.at(i, q);
                    apq += b.at(i, p) * b.at(i, q);
                }
                if (std::abs(apq) <= eps * std::sqrt(app * aqq) || apq == 0.0) continue;
                rotated = true;
                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (int64_t i = 0; i < m; ++i) {
                    const double bp = b.at(i, p), bq = b.at(i, q);
                    b.at(i, p) = c * bp - s * bq;
                    b.at(i, q) = s * bp + c * bq;
                }
                for (int64_t i = 0; i < n; ++i) {
                    const double vp = v.at(i, p), vq = v.at(i, q);
                    v.at(i, p) = c * vp - s * vq;
                    v.at(i, q) = s * vp + c * vq;
                }
            }
        }
        if (!rotated) return;
    }
}

Tensor transpose(const Tensor& a) {
    Tensor t({a.extent(1), a.extent(0)});
    for (int64_t i = 0; i < a.extent(0); ++i)
        for (int64_t j = 0; j < a.extent(1); ++j) t.at(j, i) = a.at(i, j);
    return t;
}

struct FullSvd {
    Tensor u, v;             // [m,k], [n,k] with k = min(m,n)
    std::vector<double> s;   // non-increasing
};

FullSvd full_svd(const Tensor& a) {
    const int64_t m = a.extent(0), n = a.extent(1);
    const bool flip = m < n;  // work on the side with fewer columns
    Tensor b = flip ? transpose(a) : a;
    const int64_t bm = b.extent(0), bn = b.extent(1);
    Tensor v = Tensor::identity(bn);
    one_sided_jacobi(b, v);

    std::vector<double> norms(static_cast<size_t>(bn), 0.0);
    for (int64_t j = 0; j < bn; ++j) {
        double acc = 0.0;
        for (int64_t i = 0; i < bm; ++i) acc += b.at(i, j) * b.at(i, j);
        norms[static_cast<size_t>(j)] = std::sqrt(acc);
    }
    std::vector<int64_t> order(static_cast<size_t>(bn));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int64_t x, int64_t y) {
        return norms[static_cast<size_t>(x)] > norms[static_cast<size_t>(y)];
    });

    FullSvd out;
    out.u = Tensor({bm, bn});
    out.v = Tensor({bn, bn});
    out.s.resize(static_cast<size_t>(bn));
    for (int64_t j = 0; j < bn; ++j) {
        const int64_t src = order[static_cast<size_t>(j)];
        const double sv = norms[static_cast<size_t>(src)];
        out.s[static_cast<size_t>(j)] = sv;
        for (int64_t i = 0; i < bm; ++i) {
            out.u.at(i, j) = (sv > 0.0) ? b.at(i, src) / sv : (i == j ? 1.0 : 0.0);
        }
        for (int64_t i = 0; i < bn; ++i) out.v.at(i, j) = v.at(i, src);
    }
    if (flip) std::swap(out.u, out.v);
    return out;
}

Tensor take_columns(const Tensor& a, int64_t r) {
    Tensor out({a.extent(0), r});
    for (int64_t i = 0; i < a.extent(0); ++i)
        for (int64_t j = 0; j < r; ++j) out.at(i, j) = a.at(i, j);
    return out;
}

}  // namespace

SvdResult truncated_svd(const Tensor& a, int64_t r) {
    if (a.rank() != 2) throw std::invalid_argument("truncated_svd: matrix required");
    const int64_t m = a.extent(0), n = a.extent(1);
    if (r < 1 || r > std::min(m, n)) {
        throw std::invalid_argument("truncated_svd: rank " + std::to_string(r) +
                                    " out of range for " + a.shape_str());
    }
    FullSvd f = full_svd(a);
    SvdResult out;
    out.u = take_columns(f.u, r);
    out.v = take_columns(f.v, r);
    out.s = Tensor({r});
    for (int64_t i = 0; i < r; ++i) out.s[i] = f.s[static_cast<size_t>(i)];
    return out;
}

std::vector<double> singular_values(const Tensor& a) {
    return full_svd(a).s;
}

// ---------------------------------------------------------------------------
// CP-ALS
// ---------------------------------------------------------------------------

namespace {

// Solve X * A = B for X, with A [r,r] symmetric positive semi-definite and
// B [rows,r]; Gaussian elimination with partial pivoting on A^T (A is
// symmetric) plus a tiny ridge for rank-deficient Gramians.
Tensor solve_gram(const Tensor& gram, const Tensor& rhs) {
    const int64_t r = gram.extent(0), rows = rhs.extent(0);
    Tensor a = gram;
    double trace = 0.0;
    for (int64_t i = 0; i < r; ++i) trace += a.at(i, i);
    const double ridge = std::max(trace, 1.0) * 1e-12;
    for (int64_t i = 0; i < r; ++i) a.at(i, i) += ridge;

    Tensor x = rhs;  // solve row systems x_k^T: a^T y = b^T, a symmetric
    std::vector<int64_t> piv(static_cast<size_t>(r));
    std::iota(piv.begin(), piv.end(), 0);
    // LU factorization of a
    for (int64_t k = 0; k < r; ++k) {
        int64_t p = k;
        for (int64_t i = k + 1; i < r; ++i)
            if (std::abs(a.at(i, k)) > std::abs(a.at(p, k))) p = i;
        if (p != k) {
            for (int64_t j = 0; j < r; ++j) std::swap(a.at(k, j), a.at(p, j));
            std::swap(piv[static_cast<size_t>(k)], piv[static_cast<size_t>(p)]);
        }
        const double d = a.at(k, k);
        if (d == 0.0) continue;
        for (int64_t i = k + 1; i < r; ++i) {
            const double f = a.at(i, k) / d;
            a.at(i, k) = f;
            for (int64_t j = k + 1; j < r; ++j) a.at(i, j) -= f * a.at(k, j);
        }
    }
    Tensor out({rows, r});
    std::vector<double> y(static_cast<size_t>(r));
    for (int64_t row = 0; row < rows; ++row) {
        for (int64_t k = 0; k < r; ++k) y[static_cast<size_t>(k)] = x.at(row, piv[static_cast<size_t>(k)]);
        for (int64_t k = 0; k < r; ++k)
            for (int64_t j = 0; j < k; ++j) y[static_cast<size_t>(k)] -= a.at(k, j) * y[static_cast<size_t>(j)];
        for (int64_t k = r; k-- > 0;) {
            for (int64_t j = k + 1; j < r; ++j) y[static_cast<size_t>(k)] -= a.at(k, j) * y[static_cast<size_t>(j)];
            y[static_cast<size_t>(k)] = (a.at(k, k) != 0.0) ? y[static_cast<size_t>(k)] / a.at(k, k) : 0.0;
        }
        for (int64_t k = 0; k < r; ++k) out.at(row, k) = y[static_cast<size_t>(k)];
    }
    return out;
}

Tensor gram(const Tensor& a) {  // [cols,cols] of A^T A
    const int64_t rows = a.extent(0), cols = a.extent(1);
    Tensor g({cols, cols});
    for (int64_t i = 0; i < cols; ++i)
        for (int64_t j = i; j < cols; ++j) {
            double acc = 0.0;
            for (int64_t k = 0; k < rows; ++k) acc += a.at(k, i) * a.at(k, j);
            g.at(i, j) = acc;
            g.at(j, i) = acc;
        }
    return g;
}

// Factor matrices per mode, mode order (out, in, kh, kw): factors[m] is
// [extent(m), r].
struct CpState {
    std::vector<Tensor> factors;
};

double cp_fit(const Tensor& kernel, const CpState& st, double kernel_norm) {
    const int64_t r = st.factors[0].extent(1);
    double err = 0.0;
    const int64_t e0 = kernel.extent(0), e1 = kernel.extent(1), e2 = kernel.extent(2),
                  e3 = kernel.extent(3);
    for (int64_t o = 0; o < e0; ++o)
        for (int64_t i = 0; i < e1; ++i)
            for (int64_t h = 0; h < e2; ++h)
                for (int64_t w = 0; w < e3; ++w) {
                    double acc = 0.0;
                    for (int64_t k = 0; k < r; ++k) {
                        acc += st.factors[0].at(o, k) * st.factors[1].at(i, k) *
                               st.factors[2].at(h, k) * st.factors[3].at(w, k);
                    }
                    const double d = kernel.at(o, i, h, w) - acc;
                    err += d * d;
                }
    if (kernel_norm == 0.0) return std::sqrt(err);
    return std::sqrt(err) / kernel_norm;
}

// Khatri-Rao based MTTKRP for the 4-way kernel by direct looping; kernels
// are small so this dominates nothing.
Tensor mttkrp(const Tensor& kernel, const CpState& st, int64_t mode) {
    const int64_t r = st.factors[0].extent(1);
    Tensor out({kernel.extent(mode), r});
    const int64_t e0 = kernel.extent(0), e1 = kernel.extent(1), e2 = kernel.extent(2),
                  e3 = kernel.extent(3);
    std::vector<double> prod(static_cast<size_t>(r));
    for (int64_t o = 0; o < e0; ++o)
        for (int64_t i = 0; i < e1; ++i)
            for (int64_t h = 0; h < e2; ++h)
                for (int64_t w = 0; w < e3; ++w) {
                    const double v = kernel.at(o, i, h, w);
                    if (v == 0.0) continue;
                    const int64_t idx[4] = {o, i, h, w};
                    for (int64_t k = 0; k < r; ++k) {
                        double p = v;
                        for (int64_t m = 0; m < 4; ++m) {
                            if (m == mode) continue;
                            p *= st.factors[static_cast<size_t>(m)].at(idx[m], k);
                        }
                        prod[static_cast<size_t>(k)] = p;
                    }
                    for (int64_t k = 0; k < r; ++k) out.at(idx[mode], k) += prod[static_cast<size_t>(k)];
                }
    return out;
}

CpState init_from_svd(const Tensor& kernel, int64_t r, Rng& rng) {
    CpState st;
    for (int64_t mode = 0; mode < 4; ++mode) {
        const Tensor unf = unfold(kernel, mode);
        const int64_t lead = std::min<int64_t>(r, std::min(unf.extent(0), unf.extent(1)));
        const SvdResult svd = truncated_svd(unf, lead);
        Tensor f({kernel.extent(mode), r});
        for (int64_t i = 0; i < f.extent(0); ++i)
            for (int64_t k = 0; k < r; ++k)
                f.at(i, k) = (k < lead) ? svd.u.at(i, k) : rng.normal(0.0, 0.1);
        st.factors.push_back(std::move(f));
    }
    return st;
}

CpState init_gaussian(const Tensor& kernel, int64_t r, Rng& rng) {
    CpState st;
    for (int64_t mode = 0; mode < 4; ++mode) {
        Tensor f({kernel.extent(mode), r});
        for (int64_t i = 0; i < f.size(); ++i) f[i] = rng.normal(0.0, 1.0);
        st.factors.push_back(std::move(f));
    }
    return st;
}

CpState init_from_warm(const Tensor& kernel, int64_t r, const ConvFactorSet& warm, Rng& rng) {
    const Tensor* rows[4] = {&warm.f4, &warm.f3, &warm.f2, &warm.f1};  // per-mode [r0, extent]
    CpState st;
    for (int64_t mode = 0; mode < 4; ++mode) {
        const Tensor& src = *rows[mode];
        const int64_t r0 = src.extent(0);
        Tensor f({kernel.extent(mode), r});
        for (int64_t i = 0; i < f.extent(0); ++i)
            for (int64_t k = 0; k < r; ++k)
                f.at(i, k) = (k < r0) ? src.at(k, i) : rng.normal(0.0, 0.1);
        st.factors.push_back(std::move(f));
    }
    return st;
}

// Rescale each rank-1 component so its magnitude is spread evenly across the
// four factors. The reconstruction is unchanged, but balanced factor norms
// keep gradient scales comparable when the factors are trained afterwards.
void balance_components(CpState& st) {
    const int64_t r = st.factors[0].extent(1);
    for (int64_t k = 0; k < r; ++k) {
        double norms[4];
        double mag = 1.0;
        for (int64_t m = 0; m < 4; ++m) {
            Tensor& f = st.factors[static_cast<size_t>(m)];
            double acc = 0.0;
            for (int64_t i = 0; i < f.extent(0); ++i) acc += f.at(i, k) * f.at(i, k);
            norms[m] = std::sqrt(acc);
            mag *= norms[m];
        }
        if (mag == 0.0) continue;
        const double target = std::pow(mag, 0.25);
        for (int64_t m = 0; m < 4; ++m) {
            const double scale = target / norms[m];
            Tensor& f = st.factors[static_cast<size_t>(m)];
            for (int64_t i = 0; i < f.extent(0); ++i) f.at(i, k) *= scale;
        }
    }
}

ConvFactorSet pack_state(const CpState& st, double fit) {
    const auto to_rows = [](const Tensor& f) {  // [extent,r] -> [r,extent]
        Tensor out({f.extent(1), f.extent(0)});
        for (int64_t i = 0; i < f.extent(0); ++i)
            for (int64_t k = 0; k < f.extent(1); ++k) out.at(k, i) = f.at(i, k);
        return out;
    };
    ConvFactorSet out;
    out.f4 = to_rows(st.factors[0]);
    out.f3 = to_rows(st.factors[1]);
    out.f2 = to_rows(st.factors[2]);
    out.f1 = to_rows(st.factors[3]);
    out.fit = fit;
    return out;
}

}  // namespace

ConvFactorSet cp_als(const Tensor& kernel, int64_t r, const AlsOptions& opts,
                     const ConvFactorSet* warm_start) {
    if (kernel.rank() != 4) throw std::invalid_argument("cp_als: 4-D kernel required");
    if (r < 1) throw std::invalid_argument("cp_als: rank must be >= 1");
    const double kernel_norm = kernel.frobenius_norm();
    if (kernel_norm == 0.0) {
        CpState st;
        for (int64_t mode = 0; mode < 4; ++mode) st.factors.emplace_back(Tensor({kernel.extent(mode), r}));
        return pack_state(st, 0.0);
    }

    std::optional<ConvFactorSet> best;
    std::vector<double> restart_fits;
    for (int64_t restart = 0; restart < std::max<int64_t>(1, opts.restarts); ++restart) {
        Rng rng(Rng::mix(opts.seed, static_cast<uint64_t>(restart)));
        CpState st;
        if (restart == 0 && warm_start != nullptr) {
            st = init_from_warm(kernel, r, *warm_start, rng);
        } else if (restart == 0) {
            st = init_from_svd(kernel, r, rng);
        } else {
            st = init_gaussian(kernel, r, rng);
        }
        double prev = cp_fit(kernel, st, kernel_norm);
        double cur = prev;
        for (int64_t it = 0; it < opts.max_iters; ++it) {
            for (int64_t mode = 0; mode < 4; ++mode) {
                Tensor g = Tensor::full({r, r}, 1.0);
                for (int64_t m = 0; m < 4; ++m) {
                    if (m == mode) continue;
                    const Tensor gm = gram(st.factors[static_cast<size_t>(m)]);
                    for (int64_t i = 0; i < r * r; ++i) g[i] *= gm[i];
                }
                st.factors[static_cast<size_t>(mode)] = solve_gram(g, mttkrp(kernel, st, mode));
            }
            cur = cp_fit(kernel, st, kernel_norm);
            if (opts.trace) opts.trace->push_back(cur);
            if (!std::isfinite(cur)) break;
            if (prev - cur < opts.tol) break;
            prev = cur;
        }
        restart_fits.push_back(cur);
        if (std::isfinite(cur) && (!best || cur < best->fit)) {
            balance_components(st);
            best = pack_state(st, cur);
        }
    }
    if (!best) {
        std::string fits;
        for (double f : restart_fits) fits += " " + std::to_string(f);
        throw std::runtime_error("cp_als: all restarts diverged; per-restart fits:" + fits);
    }
    return *best;
}

DecomposedDenseLayer decompose_dense(const DenseLayer& layer, int64_t r) {
    if (r < 1 || r > std::min(layer.in, layer.out)) {
        throw std::invalid_argument("decompose_dense: rank out of range");
    }
    const SvdResult svd = truncated_svd(layer.weight, r);
    DecomposedDenseLayer out;
    out.in = layer.in;
    out.out = layer.out;
    out.rank = r;
    out.u = svd.u;
    out.s = svd.s;
    out.v = svd.v;
    out.bias = layer.bias;
    return out;
}

DecomposedConv2DLayer decompose_conv(const Conv2DLayer& layer, int64_t r,
                                     const AlsOptions& opts) {
    const ConvFactorSet f = cp_als(layer.weight, r, opts);
    const auto& g = layer.geom;
    DecomposedConv2DLayer out;
    out.geom = g;
    out.rank = r;
    out.f1 = f.f1.reshape({r, 1, 1, g.kernel_w});
    out.f2 = f.f2.reshape({r, 1, g.kernel_h, 1});
    out.f3 = f.f3.reshape({r, g.in_ch, 1, 1});
    out.f4 = Tensor({g.out_ch, r, 1, 1});
    for (int64_t o = 0; o < g.out_ch; ++o)
        for (int64_t k = 0; k < r; ++k) out.f4.at(o, k, 0, 0) = f.f4.at(k, o);
    out.bias = layer.bias;
    return out;
}

Tensor reconstruct_conv_kernel(const ConvFactorSet& f) {
    const int64_t r = f.f1.extent(0);
    const int64_t kw = f.f1.extent(1), kh = f.f2.extent(1), in = f.f3.extent(1),
                  out_ch = f.f4.extent(1);
    Tensor k({out_ch, in, kh, kw});
    for (int64_t o = 0; o < out_ch; ++o)
        for (int64_t i = 0; i < in; ++i)
            for (int64_t h = 0; h < kh; ++h)
                for (int64_t w = 0; w < kw; ++w) {
                    double acc = 0.0;
                    for (int64_t c = 0; c < r; ++c)
                        acc += f.f4.at(c, o) * f.f3.at(c, i) * f.f2.at(c, h) * f.f1.at(c, w);
                    k.at(o, i, h, w) = acc;
                }
    return k;
}

Tensor reconstruct_conv_kernel(const DecomposedConv2DLayer& layer) {
    ConvFactorSet f;
    const auto& g = layer.geom;
    f.f1 = layer.f1.reshape({layer.rank, g.kernel_w});
    f.f2 = layer.f2.reshape({layer.rank, g.kernel_h});
    f.f3 = layer.f3.reshape({layer.rank, g.in_ch});
    f.f4 = Tensor({layer.rank, g.out_ch});
    for (int64_t o = 0; o < g.out_ch; ++o)
        for (int64_t k = 0; k < layer.rank; ++k) f.f4.at(k, o) = layer.f4.at(o, k, 0, 0);
    return reconstruct_conv_kernel(f);
}

Tensor reconstruct_dense_weight(const DecomposedDenseLayer& layer) {
    Tensor w({layer.in, layer.out});
    for (int64_t i = 0; i < layer.in; ++i)
        for (int64_t o = 0; o < layer.out; ++o) {
            double acc = 0.0;
            for (int64_t k = 0; k < layer.rank; ++k)
                acc += layer.u.at(i, k) * layer.s[k] * layer.v.at(o, k);
            w.at(i, o) = acc;
        }
    return w;
}

double rel_error(const Tensor& original, const Tensor& reconstructed) {
    if (!original.same_shape(reconstructed)) {
        throw std::invalid_argument("rel_error: shape mismatch");
    }
    double num = 0.0;
    for (int64_t i = 0; i < original.size(); ++i) {
        const double d = original[i] - reconstructed[i];
        num += d * d;
    }
    const double denom = original.frobenius_norm();
    if (denom == 0.0) {
        if (num == 0.0) return 0.0;
        throw std::invalid_argument("rel_error: zero-norm original with nonzero reconstruction");
    }
    return std::sqrt(num) / denom;
}

}  // namespace nltm
