#include "nltm/conductor.hpp"

#include <sstream>
#include <stdexcept>

#include "nltm/annealer.hpp"
#include "nltm/explorer.hpp"
#include "nltm/runtime.hpp"

namespace nltm {

void OptimizationConfig::validate() const {
    if (delta < 0.0) throw std::invalid_argument("config: delta must be >= 0");
    if (stage != 1 && stage != 2) throw std::invalid_argument("config: stage must be 1 or 2");
    if (workers < 1) throw std::invalid_argument("config: workers must be >= 1");
    if (finetune_epochs_stage1 < 1 || proxy_epochs < 1 || final_epochs < 1) {
        throw std::invalid_argument("config: epoch counts must be >= 1");
    }
    if (backoff_rounds < 1) throw std::invalid_argument("config: backoff_rounds must be >= 1");
    if (epsilon1 < 0.0) throw std::invalid_argument("config: epsilon1 must be >= 0");
    if (anneal.t0 <= 0.0 || anneal.gamma <= 0.0 || anneal.gamma >= 1.0 || anneal.steps < 0) {
        throw std::invalid_argument("config: anneal schedule invalid");
    }
    if (batch_size < 1 || lr <= 0.0) throw std::invalid_argument("config: bad training params");
}

ComposedList build_composed_list(const Model& model, const OptimizationConfig& cfg) {
    ComposedList cl;
    for (int64_t li : optimizable_indices(model)) {
        const LayerSpec& layer = model.layers[static_cast<size_t>(li)];
        int64_t weights = 0;
        if (const auto* c = std::get_if<Conv2DLayer>(&layer)) weights = c->weight.size();
        if (const auto* d = std::get_if<DenseLayer>(&layer)) weights = d->weight.size();
        const bool pick = weights >= cfg.min_layer_params && break_even_rank(layer) >= 2;
        cl.bits.push_back(pick ? 1 : 0);
    }
    return cl;
}

TerminationCheck check_termination(double baseline_acc, double candidate_acc, double delta) {
    const double drop = baseline_acc - candidate_acc;
    return {drop <= delta, delta - drop};
}

DatasetSplit prepare_datasets(const Dataset& train, const Dataset& test, uint64_t seed,
                              const std::string& descriptor) {
    DatasetSplit out;
    auto [kept, held] = stratified_split(train, 0.1, Rng::mix(seed, 0x5b1177ULL));
    out.stats = znorm_stats(kept);
    out.train = apply_znorm(kept, out.stats);
    out.val = apply_znorm(held, out.stats);
    out.test = apply_znorm(test, out.stats);
    out.descriptor = descriptor;
    return out;
}

namespace {

MetricsRecord metrics_for(const Model& model, const Dataset& test) {
    MetricsRecord m;
    m.accuracy = evaluate_top1(model, test);
    m.params = count_params(model);
    m.size_bytes = 4 * m.params;
    m.macs = count_macs(model);
    m.memory_footprint = memory_footprint_bytes(model);
    m.execution_time_ms = measure_time_ms(model);
    return m;
}

void add_record(Report& r, const std::string& prefix, const MetricsRecord& m) {
    r.add(prefix + ".accuracy", m.accuracy);
    r.add(prefix + ".size_bytes", m.size_bytes);
    r.add(prefix + ".macs", m.macs);
    r.add(prefix + ".params", m.params);
    r.add(prefix + ".memory_footprint", m.memory_footprint);
    r.add(prefix + ".execution_time_ms", m.execution_time_ms);
}

void add_config_echo(Report& r, const OptimizationConfig& cfg) {
    r.add("config.delta", cfg.delta);
    r.add("config.stage", cfg.stage);
    r.add("config.workers", cfg.workers);
    r.add("config.seed", static_cast<int64_t>(cfg.seed));
    r.add("config.min_layer_params", cfg.min_layer_params);
    r.add("config.epsilon1", cfg.epsilon1);
    r.add("config.finetune_epochs_stage1", cfg.finetune_epochs_stage1);
    r.add("config.proxy_epochs", cfg.proxy_epochs);
    r.add("config.final_epochs", cfg.final_epochs);
    r.add("config.backoff_rounds", cfg.backoff_rounds);
    r.add("config.anneal.t0", cfg.anneal.t0);
    r.add("config.anneal.gamma", cfg.anneal.gamma);
    r.add("config.anneal.steps", cfg.anneal.steps);
    r.add("config.anneal.grow_factor", cfg.anneal.grow_factor);
    r.add("config.anneal.grow_prob", cfg.anneal.grow_prob);
    r.add("config.anneal.lambda", cfg.anneal.lambda);
    r.add("config.lr", cfg.lr);
    r.add("config.momentum", cfg.momentum);
    r.add("config.weight_decay", cfg.weight_decay);
    r.add("config.batch_size", cfg.batch_size);
    r.add("config.augment", static_cast<int64_t>(cfg.augment ? 1 : 0));
    r.add("config.als.max_iters", cfg.als.max_iters);
    r.add("config.als.tol", cfg.als.tol);
    r.add("config.als.restarts", cfg.als.restarts);
}

}  // namespace

PipelineResult run_pipeline(const Model& model, const DatasetSplit& data,
                            const OptimizationConfig& cfg) {
    cfg.validate();
    infer_shapes(model);

    PipelineResult res;
    res.report.add("report_version", static_cast<int64_t>(1));
    add_config_echo(res.report, cfg);
    res.report.add("dataset", data.descriptor);

    // Baseline is re-measured here, never trusted from metadata.
    const double baseline_val = evaluate_top1(model, data.val);
    res.report.add("baseline.val_accuracy", baseline_val);

    const ComposedList cl = build_composed_list(model, cfg);
    {
        std::string bits;
        for (int b : cl.bits) bits += (b ? '1' : '0');
        res.report.add("composed_list", bits.empty() ? "-" : bits);
    }

    res.original_metrics = metrics_for(model, data.test);

    std::vector<std::string> audit;
    bool identity = !cl.any();
    if (identity) {
        res.model = model;
        res.stage1_metrics = res.original_metrics;
        res.stage2_metrics = res.original_metrics;
        res.delta_not_met = false;
        audit.push_back("composed list empty: identity optimization");
    } else {
        Stage1Result s1 = stage1(model, data.train, data.val, baseline_val, cl, cfg);
        audit.insert(audit.end(), s1.state.audit.begin(), s1.state.audit.end());
        res.stage1_metrics = metrics_for(s1.model, data.test);
        res.report.add("stage1.val_accuracy", s1.state.val_accuracy);
        res.report.add("stage1.rounds", s1.state.rounds);

        if (cfg.stage == 2) {
            Stage2Result s2 = stage2(model, s1.model, s1.state.ranks, s1.state.cl, data.train,
                                     data.val, baseline_val, cfg);
            audit.insert(audit.end(), s2.audit.begin(), s2.audit.end());
            res.model = s2.model;
            res.stage2_metrics = metrics_for(s2.model, data.test);
            res.report.add("stage2.val_accuracy", s2.val_accuracy);
            res.report.add("stage2.accepted_feasible", s2.accepted_feasible);
            res.delta_not_met = !check_termination(baseline_val, s2.val_accuracy, cfg.delta).pass;
        } else {
            res.model = s1.model;
            res.stage2_metrics = res.stage1_metrics;
            res.delta_not_met = !s1.state.delta_met;
        }
    }

    res.enh = enhancement(res.original_metrics,
                          cfg.stage == 2 ? res.stage2_metrics : res.stage1_metrics);
    add_record(res.report, "row.original", res.original_metrics);
    add_record(res.report, "row.stage1", res.stage1_metrics);
    add_record(res.report, "row.stage2", res.stage2_metrics);
    res.report.add("enh.accuracy_delta", format_signed(res.enh.accuracy_delta));
    res.report.add("enh.size", format_ratio(res.enh.size_ratio));
    res.report.add("enh.macs", format_ratio(res.enh.macs_ratio));
    res.report.add("enh.params", format_ratio(res.enh.params_ratio));
    res.report.add("enh.memory_footprint", format_ratio(res.enh.footprint_ratio));
    res.report.add("enh.execution_time", format_ratio(res.enh.time_ratio));
    res.report.add("delta_not_met", static_cast<int64_t>(res.delta_not_met ? 1 : 0));
    for (size_t i = 0; i < audit.size(); ++i) {
        res.report.add("audit." + std::to_string(i), audit[i]);
    }
    res.report.add("environment.workers", cfg.workers);

    std::vector<std::pair<std::string, MetricsRecord>> rows{
        {"Original", res.original_metrics}, {"Stage1", res.stage1_metrics}};
    if (cfg.stage == 2) rows.emplace_back("Stage2", res.stage2_metrics);
    res.table = render_table(rows, &res.enh);
    return res;
}

}  // namespace nltm
