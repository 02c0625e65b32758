#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "nltm/data.hpp"

using namespace nltm;

namespace {

void write_be32(std::ofstream& f, uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

void write_idx_images(const std::string& path, uint32_t n, uint32_t h, uint32_t w,
                      unsigned char fill) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    write_be32(f, 0x00000803);
    write_be32(f, n);
    write_be32(f, h);
    write_be32(f, w);
    for (uint32_t i = 0; i < n * h * w; ++i) {
        unsigned char px = static_cast<unsigned char>(fill + i % 7);
        f.write(reinterpret_cast<const char*>(&px), 1);
    }
}

void write_idx_labels(const std::string& path, const std::vector<unsigned char>& labels,
                      uint32_t magic = 0x00000801) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    write_be32(f, magic);
    write_be32(f, static_cast<uint32_t>(labels.size()));
    f.write(reinterpret_cast<const char*>(labels.data()),
            static_cast<std::streamsize>(labels.size()));
}

// Independent learnability oracle: 3-nearest-neighbor vote on raw pixels.
double knn3_accuracy(const Dataset& train, const Dataset& test) {
    const int64_t d = train.images.size() / train.size();
    int64_t correct = 0;
    for (int64_t i = 0; i < test.size(); ++i) {
        std::vector<std::pair<double, int64_t>> dist;
        for (int64_t j = 0; j < train.size(); ++j) {
            double acc = 0.0;
            for (int64_t k = 0; k < d; ++k) {
                const double diff = test.images[i * d + k] - train.images[j * d + k];
                acc += diff * diff;
            }
            dist.emplace_back(acc, train.labels[static_cast<size_t>(j)]);
        }
        std::partial_sort(dist.begin(), dist.begin() + 3, dist.end());
        std::vector<int64_t> votes(static_cast<size_t>(train.num_classes), 0);
        for (int k = 0; k < 3; ++k) ++votes[static_cast<size_t>(dist[static_cast<size_t>(k)].second)];
        const int64_t pred = std::max_element(votes.begin(), votes.end()) - votes.begin();
        if (pred == test.labels[static_cast<size_t>(i)]) ++correct;
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(test.size());
}

}  // namespace

TEST_CASE("load_idx reads header fields and scales pixels to [0,1]") {
    const std::string ip = "/tmp/nltm_test_img.idx", lp = "/tmp/nltm_test_lbl.idx";
    write_idx_images(ip, 5, 4, 3, 10);
    write_idx_labels(lp, {0, 1, 2, 1, 0});
    Dataset d = load_idx(ip, lp);
    CHECK(d.images.shape() == std::vector<int64_t>{5, 1, 4, 3});
    CHECK(d.size() == 5);
    CHECK(d.num_classes == 3);
    CHECK(d.labels == std::vector<int64_t>{0, 1, 2, 1, 0});
    for (int64_t i = 0; i < d.images.size(); ++i) {
        CHECK(d.images[i] >= 0.0);
        CHECK(d.images[i] <= 1.0);
    }
    // First pixel was raw value 10.
    CHECK(d.images[0] == doctest::Approx(10.0 / 255.0));
    std::remove(ip.c_str());
    std::remove(lp.c_str());
}

TEST_CASE("load_idx rejects an image magic in the labels file") {
    const std::string ip = "/tmp/nltm_test_img2.idx", lp = "/tmp/nltm_test_lbl2.idx";
    write_idx_images(ip, 2, 4, 4, 0);
    write_idx_labels(lp, {0, 1}, 0x00000803);
    CHECK_THROWS_WITH_AS(load_idx(ip, lp), doctest::Contains("bad magic"), std::exception);
    std::remove(ip.c_str());
    std::remove(lp.c_str());
}

TEST_CASE("load_idx rejects an image/label count mismatch") {
    const std::string ip = "/tmp/nltm_test_img3.idx", lp = "/tmp/nltm_test_lbl3.idx";
    write_idx_images(ip, 3, 4, 4, 0);
    write_idx_labels(lp, {0, 1});
    CHECK_THROWS(load_idx(ip, lp));
    std::remove(ip.c_str());
    std::remove(lp.c_str());
}

TEST_CASE("synth_shapes produces n_per_class images per class, deterministically") {
    Dataset d = synth_shapes(100, 3, 16, 42);
    CHECK(d.size() == 300);
    CHECK(d.num_classes == 3);
    CHECK(d.images.shape() == std::vector<int64_t>{300, 1, 16, 16});
    std::vector<int64_t> counts(3, 0);
    for (int64_t l : d.labels) ++counts[static_cast<size_t>(l)];
    CHECK(counts == std::vector<int64_t>{100, 100, 100});
    for (int64_t i = 0; i < d.images.size(); ++i) {
        CHECK(d.images[i] >= 0.0);
        CHECK(d.images[i] <= 1.0);
    }
    Dataset d2 = synth_shapes(100, 3, 16, 42);
    for (int64_t i = 0; i < d.images.size(); ++i) CHECK(d.images[i] == d2.images[i]);
}

TEST_CASE("synthetic set is learnable: 3-NN beats 90% on a held-out split") {
    Dataset all = synth_shapes(100, 4, 16, 7);
    auto [train, held] = stratified_split(all, 0.25, 3);
    CHECK(knn3_accuracy(train, held) > 90.0);
}

TEST_CASE("z-normalization: train statistics give zero mean and unit variance on train") {
    Dataset train = synth_shapes(40, 3, 12, 5);
    ZNormStats stats = znorm_stats(train);
    Dataset norm = apply_znorm(train, stats);
    double mean = 0.0;
    for (int64_t i = 0; i < norm.images.size(); ++i) mean += norm.images[i];
    mean /= static_cast<double>(norm.images.size());
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-9));
    double var = 0.0;
    for (int64_t i = 0; i < norm.images.size(); ++i) var += norm.images[i] * norm.images[i];
    var /= static_cast<double>(norm.images.size());
    CHECK(var == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("z-normalization does not leak test statistics") {
    Dataset train = synth_shapes(40, 3, 12, 5);
    Dataset test = synth_shapes(40, 3, 12, 99);
    ZNormStats stats = znorm_stats(train);
    Dataset norm = apply_znorm(test, stats);
    double mean = 0.0;
    for (int64_t i = 0; i < norm.images.size(); ++i) mean += norm.images[i];
    mean /= static_cast<double>(norm.images.size());
    CHECK(std::abs(mean) > 1e-6);  // generally nonzero when stats come from train
}

TEST_CASE("augment with crop_fraction 1 and flip_prob 0 is the identity") {
    Dataset d = synth_shapes(4, 2, 12, 9);
    Tensor img = sample_image(d, 1);
    Rng rng(17);
    Tensor out = augment_sample(img, AugmentConfig{1.0, 0.0}, rng);
    REQUIRE(out.same_shape(img));
    for (int64_t i = 0; i < img.size(); ++i) CHECK(out[i] == doctest::Approx(img[i]).epsilon(1e-12));
}

TEST_CASE("augment preserves shape for any crop fraction") {
    Dataset d = synth_shapes(2, 2, 16, 12);
    Tensor img = sample_image(d, 0);
    Rng rng(3);
    for (int rep = 0; rep < 10; ++rep) {
        Tensor out = augment_sample(img, AugmentConfig{0.8, 0.5}, rng);
        CHECK(out.same_shape(img));
    }
}

TEST_CASE("flip_prob 1 with full crop is an involution") {
    Dataset d = synth_shapes(2, 2, 12, 21);
    Tensor img = sample_image(d, 0);
    Rng r1(5), r2(6);
    Tensor once = augment_sample(img, AugmentConfig{1.0, 1.0}, r1);
    Tensor twice = augment_sample(once, AugmentConfig{1.0, 1.0}, r2);
    for (int64_t i = 0; i < img.size(); ++i)
        CHECK(twice[i] == doctest::Approx(img[i]).epsilon(1e-12));
}

TEST_CASE("stratified split is seeded and per-class exact") {
    Dataset d = synth_shapes(20, 3, 12, 31);
    auto [kept, held] = stratified_split(d, 0.25, 11);
    CHECK(kept.size() == 45);
    CHECK(held.size() == 15);
    std::vector<int64_t> held_counts(3, 0);
    for (int64_t l : held.labels) ++held_counts[static_cast<size_t>(l)];
    CHECK(held_counts == std::vector<int64_t>{5, 5, 5});

    auto [kept2, held2] = stratified_split(d, 0.25, 11);
    for (int64_t i = 0; i < held.images.size(); ++i) CHECK(held.images[i] == held2.images[i]);
    auto [kept3, held3] = stratified_split(d, 0.25, 12);
    bool identical = held.labels == held3.labels;
    if (identical) {
        identical = true;
        for (int64_t i = 0; i < held.images.size() && identical; ++i)
            identical = held.images[i] == held3.images[i];
    }
    CHECK_FALSE(identical);
}
