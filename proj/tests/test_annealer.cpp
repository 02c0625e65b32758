#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "nltm/annealer.hpp"
#include "nltm/conductor.hpp"
#include "nltm/explorer.hpp"
#include "nltm/runtime.hpp"
#include "nltm/zoo.hpp"

using namespace nltm;

TEST_CASE("energy: penalty inactive exactly at the delta boundary") {
    EnergyTerms t;
    t.size_ratio = 0.25;
    t.drop = 1.0;
    t.lambda = 10.0;
    CHECK(energy(t, 1.0) == doctest::Approx(0.25));
}

TEST_CASE("energy: penalty scales linearly past the boundary") {
    EnergyTerms t;
    t.size_ratio = 0.25;
    t.drop = 1.5;
    t.lambda = 10.0;
    CHECK(energy(t, 1.0) == doctest::Approx(0.25 + 10.0 * 0.5));
    t.drop = 0.0;  // accuracy gain keeps the penalty at zero
    CHECK(energy(t, 1.0) == doctest::Approx(0.25));
}

TEST_CASE("accept: non-positive energy deltas are always accepted") {
    Rng rng(41);
    for (int i = 0; i < 100; ++i) {
        CHECK(accept(-0.1, 0.1, rng));
        CHECK(accept(0.0, 0.1, rng));
    }
}

TEST_CASE("accept: frequency approximates exp(-dE/T)") {
    Rng rng(43);
    const double de = 0.2, t = 0.4;
    const int n = 20000;
    int acc = 0;
    for (int i = 0; i < n; ++i) acc += accept(de, t, rng) ? 1 : 0;
    const double p = std::exp(-de / t);
    const double sigma = std::sqrt(p * (1 - p) / n);
    CHECK(std::abs(static_cast<double>(acc) / n - p) < 4 * sigma);
}

TEST_CASE("propose: shrink floors at rank 1 and grow caps at break-even") {
    RankAssignment ranks{{0, 1}, {3, 10}};
    std::map<int64_t, int64_t> caps{{0, 12}, {3, 10}};
    AnnealSchedule sched;  // shrink {0.6, 0.8}, grow 1.25, grow_prob 0.2
    Rng rng(47);
    for (int i = 0; i < 500; ++i) {
        RankAssignment next = propose(ranks, caps, sched, rng);
        REQUIRE(next.size() == ranks.size());
        int64_t changed = 0;
        for (const auto& [idx, r] : next) {
            CHECK(r >= 1);
            CHECK(r <= caps.at(idx));
            if (r != ranks.at(idx)) ++changed;
            // Moves are exactly floor(r*shrink) (min 1) or ceil(r*1.25) (capped).
            const int64_t base = ranks.at(idx);
            const bool valid_move =
                r == base || r == std::max<int64_t>(1, static_cast<int64_t>(base * 0.6)) ||
                r == std::max<int64_t>(1, static_cast<int64_t>(base * 0.8)) ||
                r == std::min(caps.at(idx),
                              static_cast<int64_t>(std::ceil(static_cast<double>(base) * 1.25)));
            CHECK(valid_move);
        }
        CHECK(changed <= 1);  // one uniformly chosen layer moves
    }
}

TEST_CASE("propose: rank-1 layer can only hold or grow") {
    RankAssignment ranks{{0, 1}};
    std::map<int64_t, int64_t> caps{{0, 8}};
    AnnealSchedule sched;
    Rng rng(53);
    bool grew = false;
    for (int i = 0; i < 200; ++i) {
        RankAssignment next = propose(ranks, caps, sched, rng);
        CHECK(next.at(0) >= 1);
        if (next.at(0) == 2) grew = true;  // ceil(1 * 1.25) = 2
        CHECK(next.at(0) <= 2);
    }
    CHECK(grew);
}

TEST_CASE("stage2 with steps=0 returns the stage-1 model unchanged") {
    Model m = make_reference_mlp({1, 12, 12}, 3, 61);
    Dataset data = synth_shapes(20, 3, 12, 63);
    ZNormStats stats = znorm_stats(data);
    data = apply_znorm(data, stats);
    auto [train_set, val] = stratified_split(data, 0.2, 65);
    const double baseline = evaluate_top1(m, val);

    OptimizationConfig cfg;
    cfg.delta = 100.0;
    cfg.min_layer_params = 1;
    cfg.finetune_epochs_stage1 = 1;
    cfg.anneal.steps = 0;
    cfg.als.max_iters = 50;
    cfg.als.restarts = 1;
    cfg.augment = false;
    ComposedList cl = build_composed_list(m, cfg);
    Stage1Result s1 = stage1(m, train_set, val, baseline, cl, cfg);

    Stage2Result s2 = stage2(m, s1.model, s1.state.ranks, s1.state.cl, train_set, val,
                             baseline, cfg);
    CHECK(s2.ranks == s1.state.ranks);
    CHECK(count_params(s2.model) == count_params(s1.model));
    // Byte-identical parameters: with zero steps there is nothing to refit.
    for (size_t li = 0; li < s1.model.layers.size(); ++li) {
        const auto p1 = layer_params(s1.model.layers[li]);
        const auto p2 = layer_params(s2.model.layers[li]);
        for (size_t p = 0; p < p1.size(); ++p)
            for (int64_t i = 0; i < p1[p]->size(); ++i) CHECK((*p2[p])[i] == (*p1[p])[i]);
    }
}

TEST_CASE("stage2 never ends with more parameters than stage 1") {
    Model m = make_reference_mlp({1, 12, 12}, 3, 71);
    Dataset data = synth_shapes(25, 3, 12, 73);
    ZNormStats stats = znorm_stats(data);
    data = apply_znorm(data, stats);
    auto [train_set, val] = stratified_split(data, 0.2, 75);
    const double baseline = evaluate_top1(m, val);

    OptimizationConfig cfg;
    cfg.delta = 100.0;  // everything feasible: search is free to move
    cfg.min_layer_params = 1;
    cfg.finetune_epochs_stage1 = 1;
    cfg.proxy_epochs = 1;
    cfg.final_epochs = 1;
    cfg.anneal.steps = 4;
    cfg.als.max_iters = 50;
    cfg.als.restarts = 1;
    cfg.augment = false;
    ComposedList cl = build_composed_list(m, cfg);
    Stage1Result s1 = stage1(m, train_set, val, baseline, cl, cfg);
    Stage2Result s2 = stage2(m, s1.model, s1.state.ranks, s1.state.cl, train_set, val,
                             baseline, cfg);
    CHECK(s2.any_feasible);
    CHECK(count_params(s2.model) <= count_params(s1.model));
    CHECK(s2.audit.size() == 5);  // one line per annealing step plus the summary
}
