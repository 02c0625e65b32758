#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "nltm/conductor.hpp"
#include "nltm/explorer.hpp"
#include "nltm/rng.hpp"
#include "nltm/runtime.hpp"
#include "nltm/zoo.hpp"

using namespace nltm;

namespace {

Tensor random_tensor(const std::vector<int64_t>& shape, uint64_t seed, double scale = 1.0) {
    Tensor t(shape);
    Rng rng(seed);
    for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = scale * rng.normal();
    return t;
}

Conv2DLayer make_conv(int64_t in, int64_t out, int64_t k, int64_t pad, uint64_t seed) {
    Conv2DLayer l;
    l.geom = ConvGeometry{.kernel_h = k, .kernel_w = k, .pad_h = pad, .pad_w = pad,
                          .in_ch = in, .out_ch = out};
    l.weight = random_tensor({out, in, k, k}, seed, 0.3);
    l.bias = random_tensor({out}, seed + 1, 0.05);
    return l;
}

DenseLayer make_dense(int64_t in, int64_t out, uint64_t seed) {
    DenseLayer l;
    l.in = in;
    l.out = out;
    l.weight = random_tensor({in, out}, seed, 0.3);
    l.bias = random_tensor({out}, seed + 1, 0.05);
    return l;
}

}  // namespace

TEST_CASE("composed list: small conv is skipped, large dense is selected") {
    Model m;
    m.input_shape = {1, 28, 28};
    m.num_classes = 10;
    // conv 3x3 in=1 out=8: 72 weights; dense 1568x10: 15,680 weights.
    m.layers = {make_conv(1, 8, 3, 1, 1), MaxPool2DLayer{2, 2}, FlattenLayer{},
                make_dense(1568, 10, 3)};
    OptimizationConfig cfg;
    cfg.min_layer_params = 1000;
    ComposedList cl = build_composed_list(m, cfg);
    CHECK(cl.bits == std::vector<int>{0, 1});
}

TEST_CASE("composed list: all layers below threshold give an all-zero list") {
    Model m;
    m.input_shape = {1, 12, 12};
    m.num_classes = 2;
    m.layers = {make_conv(1, 4, 3, 1, 5), FlattenLayer{}, make_dense(576, 2, 7)};
    OptimizationConfig cfg;
    cfg.min_layer_params = 1000000;
    ComposedList cl = build_composed_list(m, cfg);
    CHECK_FALSE(cl.any());
    CHECK(cl.bits == std::vector<int>{0, 0});
}

TEST_CASE("composed list: threshold 0 with ample break-evens gives all ones") {
    Model m;
    m.input_shape = {4, 8, 8};
    m.num_classes = 10;
    m.layers = {make_conv(4, 16, 3, 1, 9), FlattenLayer{}, make_dense(1024, 10, 11)};
    OptimizationConfig cfg;
    cfg.min_layer_params = 0;
    ComposedList cl = build_composed_list(m, cfg);
    CHECK(cl.bits == std::vector<int>{1, 1});
}

TEST_CASE("termination check is inclusive at the boundary") {
    TerminationCheck t = check_termination(95.0, 94.4, 1.0);
    CHECK(t.pass);
    CHECK(t.margin == doctest::Approx(0.4));

    CHECK(check_termination(95.0, 94.0, 1.0).pass);        // drop == delta
    CHECK_FALSE(check_termination(95.0, 93.9, 1.0).pass);  // just past

    TerminationCheck up = check_termination(95.0, 96.0, 1.0);
    CHECK(up.pass);
    CHECK(up.margin > 1.0);  // candidate above baseline
}

TEST_CASE("prepare_datasets: stratified 10% validation, train-only statistics") {
    Dataset train = synth_shapes(40, 4, 12, 13);
    Dataset test = synth_shapes(10, 4, 12, 15);
    DatasetSplit split = prepare_datasets(train, test, 17, "synthetic");
    CHECK(split.train.size() == 144);
    CHECK(split.val.size() == 16);
    CHECK(split.test.size() == 40);
    CHECK(split.descriptor == "synthetic");
    // Val contains every class.
    std::vector<int64_t> counts(4, 0);
    for (int64_t l : split.val.labels) ++counts[static_cast<size_t>(l)];
    for (int64_t c : counts) CHECK(c == 4);
    // Normalized train has ~zero mean under its own stats.
    double mean = 0.0;
    for (int64_t i = 0; i < split.train.images.size(); ++i) mean += split.train.images[i];
    mean /= static_cast<double>(split.train.images.size());
    CHECK(std::abs(mean) < 0.05);
}

TEST_CASE("run_pipeline with an empty composed list returns the input unchanged") {
    // Every layer is below the selection threshold, so the pipeline is the
    // identity and the table's Original/Stage1 rows must agree.
    Model m = make_reference_mlp({1, 12, 12}, 3, 19);
    Dataset train = synth_shapes(20, 3, 12, 21);
    Dataset test = synth_shapes(5, 3, 12, 23);
    DatasetSplit split = prepare_datasets(train, test, 25, "synthetic");

    OptimizationConfig cfg;
    cfg.delta = 1.0;
    cfg.stage = 2;
    cfg.min_layer_params = 1000000000;
    cfg.augment = false;
    PipelineResult res = run_pipeline(m, split, cfg);

    CHECK(count_params(res.model) == count_params(m));
    CHECK_FALSE(res.delta_not_met);
    for (size_t li = 0; li < m.layers.size(); ++li) {
        const auto p1 = layer_params(m.layers[li]);
        const auto p2 = layer_params(res.model.layers[li]);
        for (size_t p = 0; p < p1.size(); ++p)
            for (int64_t i = 0; i < p1[p]->size(); ++i) CHECK((*p2[p])[i] == (*p1[p])[i]);
    }
    CHECK(res.original_metrics.params == res.stage1_metrics.params);
    CHECK(res.original_metrics.accuracy == res.stage1_metrics.accuracy);
    CHECK(res.enh.params_ratio == doctest::Approx(1.0));

    // Report carries the mandatory fields.
    for (const char* key :
         {"report_version", "config.delta", "config.stage", "config.seed", "dataset",
          "baseline.val_accuracy", "composed_list", "row.original.params",
          "row.stage2.accuracy", "enh.params", "delta_not_met"}) {
        INFO(key);
        CHECK(res.report.find(key) != nullptr);
    }
    CHECK(*res.report.find("report_version") == "1");
    CHECK(*res.report.find("delta_not_met") == "0");
}

TEST_CASE("pipeline compresses an over-parameterized MLP end to end") {
    Model m = make_reference_mlp({1, 12, 12}, 3, 27);
    Dataset train = synth_shapes(40, 3, 12, 29);
    Dataset test = synth_shapes(10, 3, 12, 31);
    DatasetSplit split = prepare_datasets(train, test, 33, "synthetic");

    // Make the baseline meaningful: train the MLP first.
    TrainConfig tc;
    tc.epochs = 8;
    tc.batch_size = 16;
    tc.lr = 0.05;
    tc.seed = 35;
    m = nltm::train(m, split.train, tc).model;

    OptimizationConfig cfg;
    cfg.delta = 5.0;
    cfg.stage = 2;
    cfg.seed = 37;
    cfg.min_layer_params = 1000;
    cfg.finetune_epochs_stage1 = 2;
    cfg.proxy_epochs = 1;
    cfg.final_epochs = 2;
    cfg.anneal.steps = 3;
    cfg.als.max_iters = 60;
    cfg.als.restarts = 1;
    cfg.lr = 0.05;
    cfg.batch_size = 16;
    cfg.augment = false;
    PipelineResult res = run_pipeline(m, split, cfg);

    CHECK(res.stage2_metrics.params <= res.stage1_metrics.params);
    CHECK(res.stage1_metrics.params < res.original_metrics.params);
    CHECK(res.table.find("Original") != std::string::npos);
    CHECK(res.table.find("Stage1") != std::string::npos);
    CHECK(res.table.find("Stage2") != std::string::npos);
    CHECK(res.table.find("Enh") != std::string::npos);

    // The report roundtrips losslessly.
    Report parsed = parse_report(render_report(res.report));
    REQUIRE(parsed.fields.size() == res.report.fields.size());
    for (size_t i = 0; i < parsed.fields.size(); ++i) {
        CHECK(parsed.fields[i].first == res.report.fields[i].first);
        CHECK(parsed.fields[i].second == res.report.fields[i].second);
    }
}

TEST_CASE("config validation rejects bad stages and deltas") {
    OptimizationConfig cfg;
    cfg.stage = 3;
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("stage must be 1 or 2"),
                         std::exception);
    cfg.stage = 2;
    CHECK_NOTHROW(cfg.validate());
    cfg.workers = 0;
    CHECK_THROWS(cfg.validate());
}
