#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "nltm/lowrank.hpp"
#include "nltm/rng.hpp"

using namespace nltm;

namespace {

Tensor random_tensor(const std::vector<int64_t>& shape, uint64_t seed) {
    Tensor t(shape);
    Rng rng(seed);
    for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = rng.normal();
    return t;
}

// Independent full-SVD oracle: two-sided cyclic Jacobi eigen-decomposition
// of A^T A, written without reference to the production code.
std::vector<double> full_singular_values_oracle(const Tensor& a) {
    const int64_t m = a.extent(0), n = a.extent(1);
    std::vector<std::vector<double>> g(static_cast<size_t>(n),
                                       std::vector<double>(static_cast<size_t>(n), 0.0));
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int64_t k = 0; k < m; ++k) acc += a.at(k, i) * a.at(k, j);
            g[static_cast<size_t>(i)][static_cast<size_t>(j)] = acc;
        }
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int64_t p = 0; p < n; ++p)
            for (int64_t q = p + 1; q < n; ++q)
                off += g[static_cast<size_t>(p)][static_cast<size_t>(q)] *
                       g[static_cast<size_t>(p)][static_cast<size_t>(q)];
        if (off < 1e-24) break;
        for (int64_t p = 0; p < n; ++p)
            for (int64_t q = p + 1; q < n; ++q) {
                const double apq = g[static_cast<size_t>(p)][static_cast<size_t>(q)];
                if (std::abs(apq) < 1e-300) continue;
                const double app = g[static_cast<size_t>(p)][static_cast<size_t>(p)];
                const double aqq = g[static_cast<size_t>(q)][static_cast<size_t>(q)];
                const double theta = 0.5 * std::atan2(2.0 * apq, aqq - app);
                const double c = std::cos(theta), s = std::sin(theta);
                for (int64_t k = 0; k < n; ++k) {
                    const double gkp = g[static_cast<size_t>(k)][static_cast<size_t>(p)];
                    const double gkq = g[static_cast<size_t>(k)][static_cast<size_t>(q)];
                    g[static_cast<size_t>(k)][static_cast<size_t>(p)] = c * gkp - s * gkq;
                    g[static_cast<size_t>(k)][static_cast<size_t>(q)] = s * gkp + c * gkq;
                }
                for (int64_t k = 0; k < n; ++k) {
                    const double gpk = g[static_cast<size_t>(p)][static_cast<size_t>(k)];
                    const double gqk = g[static_cast<size_t>(q)][static_cast<size_t>(k)];
                    g[static_cast<size_t>(p)][static_cast<size_t>(k)] = c * gpk - s * gqk;
                    g[static_cast<size_t>(q)][static_cast<size_t>(k)] = s * gpk + c * gqk;
                }
            }
    }
    std::vector<double> s(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i)
        s[static_cast<size_t>(i)] = std::sqrt(std::max(0.0, g[static_cast<size_t>(i)][static_cast<size_t>(i)]));
    std::sort(s.begin(), s.end(), std::greater<>());
    return s;
}

Tensor low_rank_product(const SvdResult& r) {
    const int64_t m = r.u.extent(0), n = r.v.extent(0), k = r.s.extent(0);
    Tensor out({m, n});
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int64_t t = 0; t < k; ++t) acc += r.u.at(i, t) * r.s[t] * r.v.at(j, t);
            out.at(i, j) = acc;
        }
    return out;
}

double frob_dist(const Tensor& a, const Tensor& b) {
    double acc = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(acc);
}

Tensor cp_kernel(int64_t out, int64_t in, int64_t kh, int64_t kw, int64_t r, uint64_t seed) {
    Rng rng(seed);
    Tensor k({out, in, kh, kw});
    for (int64_t t = 0; t < r; ++t) {
        std::vector<double> a(static_cast<size_t>(out)), b(static_cast<size_t>(in)),
            c(static_cast<size_t>(kh)), d(static_cast<size_t>(kw));
        for (auto& v : a) v = rng.normal();
        for (auto& v : b) v = rng.normal();
        for (auto& v : c) v = rng.normal();
        for (auto& v : d) v = rng.normal();
        for (int64_t i = 0; i < out; ++i)
            for (int64_t j = 0; j < in; ++j)
                for (int64_t y = 0; y < kh; ++y)
                    for (int64_t x = 0; x < kw; ++x)
                        k.at(i, j, y, x) += a[static_cast<size_t>(i)] * b[static_cast<size_t>(j)] *
                                            c[static_cast<size_t>(y)] * d[static_cast<size_t>(x)];
    }
    return k;
}

}  // namespace

TEST_CASE("zero matrix: singular values all zero, truncation error zero") {
    Tensor z = Tensor::zeros({6, 4});
    for (int64_t r = 1; r <= 4; ++r) {
        SvdResult res = truncated_svd(z, r);
        for (int64_t i = 0; i < res.s.size(); ++i) CHECK(res.s[i] == 0.0);
        CHECK(frob_dist(low_rank_product(res), z) == 0.0);
    }
}

TEST_CASE("truncation error squared equals trailing singular-value energy") {
    Tensor a = random_tensor({8, 6}, 201);
    const std::vector<double> sv = full_singular_values_oracle(a);
    for (int64_t r = 1; r <= 6; ++r) {
        SvdResult res = truncated_svd(a, r);
        double tail = 0.0;
        for (size_t i = static_cast<size_t>(r); i < sv.size(); ++i) tail += sv[i] * sv[i];
        const double err = frob_dist(low_rank_product(res), a);
        CHECK(err * err == doctest::Approx(tail).epsilon(1e-9).scale(1.0));
    }
}

TEST_CASE("singular_values agrees with the oracle") {
    Tensor a = random_tensor({7, 5}, 203);
    const std::vector<double> got = singular_values(a);
    const std::vector<double> want = full_singular_values_oracle(a);
    REQUIRE(got.size() == want.size());
    for (size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-9));
}

TEST_CASE("truncated factors are orthonormal and singular values sorted") {
    Tensor a = random_tensor({9, 7}, 205);
    SvdResult res = truncated_svd(a, 4);
    for (int64_t i = 0; i < 4; ++i)
        for (int64_t j = 0; j < 4; ++j) {
            double uu = 0.0, vv = 0.0;
            for (int64_t k = 0; k < 9; ++k) uu += res.u.at(k, i) * res.u.at(k, j);
            for (int64_t k = 0; k < 7; ++k) vv += res.v.at(k, i) * res.v.at(k, j);
            CHECK(uu == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-9).scale(1.0));
            CHECK(vv == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-9).scale(1.0));
        }
    for (int64_t i = 1; i < 4; ++i) CHECK(res.s[i] <= res.s[i - 1]);
}

TEST_CASE("Eckart-Young: truncated SVD beats 100 random rank-r factorizations") {
    Tensor a = random_tensor({10, 8}, 207);
    const int64_t r = 3;
    const double best = frob_dist(low_rank_product(truncated_svd(a, r)), a);
    Rng rng(209);
    for (int trial = 0; trial < 100; ++trial) {
        Tensor u({10, r}), v({8, r});
        for (int64_t i = 0; i < u.size(); ++i) u.data()[i] = rng.normal();
        for (int64_t i = 0; i < v.size(); ++i) v.data()[i] = rng.normal();
        Tensor prod({10, 8});
        for (int64_t i = 0; i < 10; ++i)
            for (int64_t j = 0; j < 8; ++j) {
                double acc = 0.0;
                for (int64_t t = 0; t < r; ++t) acc += u.at(i, t) * v.at(j, t);
                prod.at(i, j) = acc;
            }
        CHECK(best <= frob_dist(prod, a) + 1e-12);
    }
}

TEST_CASE("weight of true rank 2 is recovered exactly at r=2") {
    Tensor u = random_tensor({8, 2}, 211);
    Tensor v = random_tensor({5, 2}, 213);
    Tensor w({8, 5});
    for (int64_t i = 0; i < 8; ++i)
        for (int64_t j = 0; j < 5; ++j)
            w.at(i, j) = u.at(i, 0) * v.at(j, 0) + u.at(i, 1) * v.at(j, 1);
    SvdResult res = truncated_svd(w, 2);
    CHECK(frob_dist(low_rank_product(res), w) < 1e-9);
}

TEST_CASE("truncated_svd rejects out-of-range ranks") {
    Tensor a = random_tensor({4, 3}, 215);
    CHECK_THROWS(truncated_svd(a, 0));
    CHECK_THROWS(truncated_svd(a, 4));
    CHECK_NOTHROW(truncated_svd(a, 3));
}

TEST_CASE("decomposed dense forward equals the explicit reconstruction") {
    DenseLayer dense;
    dense.in = 512;
    dense.out = 100;
    dense.weight = random_tensor({512, 100}, 217);
    dense.bias = random_tensor({100}, 219);
    DecomposedDenseLayer dec = decompose_dense(dense, 32);
    CHECK(dec.rank == 32);

    Tensor w_hat = reconstruct_dense_weight(dec);
    Tensor x = random_tensor({3, 512}, 221);
    for (int64_t s = 0; s < 3; ++s)
        for (int64_t o = 0; o < 100; ++o) {
            // dense path with the reconstructed weight
            double dense_y = dense.bias[o];
            for (int64_t i = 0; i < 512; ++i) dense_y += x.at(s, i) * w_hat.at(i, o);
            // factor chain ((x U) diag(s)) V^T
            double fact_y = dec.bias[o];
            for (int64_t t = 0; t < 32; ++t) {
                double xu = 0.0;
                for (int64_t i = 0; i < 512; ++i) xu += x.at(s, i) * dec.u.at(i, t);
                fact_y += xu * dec.s[t] * dec.v.at(o, t);
            }
            CHECK(fact_y == doctest::Approx(dense_y).epsilon(1e-10));
        }
}

TEST_CASE("cp_als recovers a constructed rank-3 kernel") {
    Tensor k = cp_kernel(6, 5, 3, 3, 3, 223);
    AlsOptions opts;
    opts.max_iters = 400;
    opts.restarts = 5;
    opts.tol = 1e-12;
    opts.seed = 225;
    ConvFactorSet f = cp_als(k, 3, opts);
    CHECK(f.fit < 1e-3);
    CHECK(rel_error(k, reconstruct_conv_kernel(f)) < 1e-3);
}

TEST_CASE("cp_als fits a rank-1 kernel to machine precision") {
    Tensor k = cp_kernel(4, 3, 3, 3, 1, 227);
    AlsOptions opts;
    opts.max_iters = 200;
    opts.restarts = 3;
    opts.seed = 229;
    ConvFactorSet f = cp_als(k, 1, opts);
    CHECK(f.fit < 1e-9);
}

TEST_CASE("cp_als fit is monotonically non-increasing across sweeps") {
    Tensor k = random_tensor({6, 4, 3, 3}, 231);
    std::vector<double> trace;
    AlsOptions opts;
    opts.max_iters = 60;
    opts.restarts = 1;
    opts.seed = 233;
    opts.trace = &trace;
    cp_als(k, 4, opts);
    REQUIRE(trace.size() > 1);
    for (size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1] + 1e-10);
}

TEST_CASE("cp_als on a zero kernel returns zero factors with fit 0") {
    Tensor k = Tensor::zeros({4, 3, 3, 3});
    AlsOptions opts;
    opts.seed = 235;
    ConvFactorSet f = cp_als(k, 2, opts);
    CHECK(f.fit == 0.0);
    Tensor rec = reconstruct_conv_kernel(f);
    for (int64_t i = 0; i < rec.size(); ++i) CHECK(rec[i] == 0.0);
}

TEST_CASE("warm start preserves or improves the fit at a higher rank") {
    Tensor k = random_tensor({6, 4, 3, 3}, 237);
    AlsOptions opts;
    opts.max_iters = 150;
    opts.restarts = 1;
    opts.seed = 239;
    ConvFactorSet f2 = cp_als(k, 2, opts);
    ConvFactorSet f3 = cp_als(k, 3, opts, &f2);
    CHECK(f3.fit <= f2.fit + 1e-9);
}

TEST_CASE("rel_error boundary values") {
    Tensor w = random_tensor({4, 4}, 241);
    CHECK(rel_error(w, w) == 0.0);
    CHECK(rel_error(w, Tensor::zeros({4, 4})) == doctest::Approx(1.0));
    CHECK(rel_error(Tensor::zeros({4, 4}), Tensor::zeros({4, 4})) == 0.0);
    CHECK_THROWS(rel_error(Tensor::zeros({4, 4}), w));
}

TEST_CASE("rel_error of diag(3,2,1) against its rank-2 truncation is 1/sqrt(14)") {
    Tensor w({3, 3}, {3, 0, 0, 0, 2, 0, 0, 0, 1});
    Tensor w2({3, 3}, {3, 0, 0, 0, 2, 0, 0, 0, 0});
    CHECK(rel_error(w, w2) == doctest::Approx(1.0 / std::sqrt(14.0)).epsilon(1e-12));
}
