// Command-line front end: train a baseline, optimize it under a delta
// constraint, evaluate, inspect, or re-render a stored report.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "nltm/conductor.hpp"
#include "nltm/config.hpp"
#include "nltm/metrics.hpp"
#include "nltm/runtime.hpp"
#include "nltm/zoo.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitDeltaNotMet = 3;

struct CommonFlags {
    std::string config_file;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonFlags& fl) {
    cmd->add_option("--config", fl.config_file, "key = value configuration file");
    const auto override_opt = [&fl, cmd](const std::string& flag, const std::string& key,
                                         const std::string& help) {
        cmd->add_option_function<std::string>(
            flag, [&fl, key](const std::string& v) { fl.overrides.push_back(key + " = " + v); },
            help);
    };
    override_opt("--model", "model", "input checkpoint path");
    override_opt("--out", "out", "output checkpoint path");
    override_opt("--report", "report", "report output path");
    override_opt("--delta", "delta", "tolerable accuracy drop (points)");
    override_opt("--stage", "stage", "optimization stage, 1 or 2");
    override_opt("--seed", "seed", "global seed");
    override_opt("--workers", "workers", "worker thread count");
    override_opt("--device", "device", "cpu:<workers>");
    override_opt("--epochs", "epochs", "training epochs (train subcommand)");
    override_opt("--lr", "lr", "learning rate");
    override_opt("--batch-size", "batch_size", "mini-batch size");
    override_opt("--augment", "augment", "true/false: crop+flip augmentation");
    override_opt("--idx-images", "idx_images", "train images (IDX)");
    override_opt("--idx-labels", "idx_labels", "train labels (IDX)");
    override_opt("--idx-test-images", "idx_test_images", "test images (IDX)");
    override_opt("--idx-test-labels", "idx_test_labels", "test labels (IDX)");
    override_opt("--synth", "synth", "synthetic dataset: n,classes,hw,seed");
}

struct LoadedData {
    nltm::Dataset train;
    nltm::Dataset test;
};

LoadedData load_datasets(const nltm::CliConfig& cfg) {
    LoadedData d;
    if (cfg.has_synth) {
        d.train = nltm::synth_shapes(cfg.synth.n_per_class, cfg.synth.num_classes, cfg.synth.hw,
                                     cfg.synth.seed);
        d.test = nltm::synth_shapes(std::max<int64_t>(1, cfg.synth.n_per_class / 4),
                                    cfg.synth.num_classes, cfg.synth.hw, cfg.synth.seed + 1);
    } else if (cfg.has_idx()) {
        d.train = nltm::load_idx(cfg.idx_images, cfg.idx_labels);
        if (!cfg.idx_test_images.empty()) {
            d.test = nltm::load_idx(cfg.idx_test_images, cfg.idx_test_labels);
            d.test.num_classes = d.train.num_classes =
                std::max(d.train.num_classes, d.test.num_classes);
        } else {
            d.test = d.train;
        }
    } else {
        throw std::invalid_argument("no dataset given: pass --synth or --idx-images/--idx-labels");
    }
    return d;
}

int cmd_train(const nltm::CliConfig& cfg, const std::string& arch) {
    if (cfg.out_path.empty()) throw std::invalid_argument("train: --out is required");
    LoadedData data = load_datasets(cfg);
    const std::vector<int64_t> in_shape{data.train.images.extent(1), data.train.images.extent(2),
                                        data.train.images.extent(3)};
    nltm::Model model =
        nltm::make_architecture(arch, in_shape, data.train.num_classes, cfg.opt.seed);

    nltm::DatasetSplit split =
        nltm::prepare_datasets(data.train, data.test, cfg.opt.seed, cfg.dataset_descriptor());
    nltm::TrainConfig tc;
    tc.epochs = cfg.train_epochs;
    tc.batch_size = cfg.opt.batch_size;
    tc.lr = cfg.opt.lr;
    tc.momentum = cfg.opt.momentum;
    tc.weight_decay = cfg.opt.weight_decay;
    tc.seed = cfg.opt.seed;
    tc.workers = cfg.opt.workers;
    tc.augment = cfg.opt.augment;
    tc.log = &std::cerr;
    nltm::TrainResult tr = nltm::train(model, split.train, tc);
    const double val = nltm::evaluate_top1(tr.model, split.val);
    const double test = nltm::evaluate_top1(tr.model, split.test);
    std::cerr << "val accuracy " << val << ", test accuracy " << test << "\n";
    nltm::save_model(tr.model, cfg.out_path);
    std::cout << "checkpoint " << cfg.out_path << " val " << val << " test " << test << "\n";
    return kExitOk;
}

int cmd_optimize(const nltm::CliConfig& cfg) {
    if (cfg.model_path.empty()) throw std::invalid_argument("optimize: --model is required");
    nltm::Model model = nltm::load_model(cfg.model_path);
    LoadedData data = load_datasets(cfg);
    nltm::DatasetSplit split =
        nltm::prepare_datasets(data.train, data.test, cfg.opt.seed, cfg.dataset_descriptor());
    nltm::PipelineResult res = nltm::run_pipeline(model, split, cfg.opt);

    if (!cfg.out_path.empty()) nltm::save_model(res.model, cfg.out_path);
    if (!cfg.report_path.empty()) {
        std::ofstream rf(cfg.report_path, std::ios::trunc);
        if (!rf) throw std::runtime_error("cannot write report: " + cfg.report_path);
        rf << nltm::render_report(res.report);
    }
    std::cout << res.table;
    if (res.delta_not_met) {
        std::cerr << "delta_not_met: best candidate returned\n";
        return kExitDeltaNotMet;
    }
    return kExitOk;
}

int cmd_eval(const nltm::CliConfig& cfg) {
    if (cfg.model_path.empty()) throw std::invalid_argument("eval: --model is required");
    nltm::Model model = nltm::load_model(cfg.model_path);
    LoadedData data = load_datasets(cfg);
    // Normalization statistics always come from the train pair.
    nltm::ZNormStats stats = nltm::znorm_stats(data.train);
    const double acc = nltm::evaluate_top1(model, nltm::apply_znorm(data.test, stats));
    std::cout << acc << "\n";
    return kExitOk;
}

int cmd_inspect(const nltm::CliConfig& cfg) {
    if (cfg.model_path.empty()) throw std::invalid_argument("inspect: --model is required");
    nltm::Model model = nltm::load_model(cfg.model_path);
    const auto shapes = nltm::infer_shapes(model);
    std::vector<int64_t> cur = model.input_shape;
    std::printf("%-4s %-12s %-16s %12s %14s\n", "#", "layer", "output", "params", "macs");
    for (size_t i = 0; i < model.layers.size(); ++i) {
        std::string shape = "[";
        for (size_t k = 0; k < shapes[i].size(); ++k)
            shape += (k ? "x" : "") + std::to_string(shapes[i][k]);
        shape += "]";
        std::printf("%-4zu %-12s %-16s %12lld %14lld\n", i, nltm::layer_kind(model.layers[i]),
                    shape.c_str(),
                    static_cast<long long>(nltm::count_params(model.layers[i])),
                    static_cast<long long>(nltm::count_macs(model.layers[i], cur)));
        cur = shapes[i];
    }
    std::printf("total params %lld, macs %lld, size %.4f MB, footprint %lld bytes\n",
                static_cast<long long>(nltm::count_params(model)),
                static_cast<long long>(nltm::count_macs(model)),
                static_cast<double>(4 * nltm::count_params(model)) / (1024.0 * 1024.0),
                static_cast<long long>(nltm::memory_footprint_bytes(model)));
    return kExitOk;
}

nltm::MetricsRecord record_from(const nltm::Report& r, const std::string& prefix) {
    const auto get = [&](const std::string& k) {
        const std::string* v = r.find(prefix + "." + k);
        if (!v) throw std::runtime_error("report missing field " + prefix + "." + k);
        return std::stod(*v);
    };
    nltm::MetricsRecord m;
    m.accuracy = get("accuracy");
    m.size_bytes = static_cast<int64_t>(get("size_bytes"));
    m.macs = static_cast<int64_t>(get("macs"));
    m.params = static_cast<int64_t>(get("params"));
    m.memory_footprint = static_cast<int64_t>(get("memory_footprint"));
    m.execution_time_ms = get("execution_time_ms");
    return m;
}

int cmd_report(const nltm::CliConfig& cfg) {
    if (cfg.report_path.empty()) throw std::invalid_argument("report: --report is required");
    std::ifstream rf(cfg.report_path);
    if (!rf) throw std::runtime_error("cannot open report: " + cfg.report_path);
    std::string text((std::istreambuf_iterator<char>(rf)), std::istreambuf_iterator<char>());
    nltm::Report rep = nltm::parse_report(text);

    std::vector<std::pair<std::string, nltm::MetricsRecord>> rows{
        {"Original", record_from(rep, "row.original")},
        {"Stage1", record_from(rep, "row.stage1")},
        {"Stage2", record_from(rep, "row.stage2")}};
    nltm::EnhancementRow enh = nltm::enhancement(rows[0].second, rows[2].second);
    std::cout << nltm::render_table(rows, &enh);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"delta-constrained low-rank model compression"};
    app.require_subcommand(1);

    CommonFlags fl;
    std::string arch = "cnn";
    auto* train_cmd = app.add_subcommand("train", "train a baseline model");
    train_cmd->add_option("--arch", arch, "architecture: cnn or mlp");
    auto* optimize_cmd = app.add_subcommand("optimize", "run the compression pipeline");
    auto* eval_cmd = app.add_subcommand("eval", "top-1 accuracy of a checkpoint");
    auto* inspect_cmd = app.add_subcommand("inspect", "shapes/params/MACs table");
    auto* report_cmd = app.add_subcommand("report", "re-render a stored report");
    for (auto* cmd : {train_cmd, optimize_cmd, eval_cmd, inspect_cmd, report_cmd}) {
        add_common(cmd, fl);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    try {
        const nltm::CliConfig cfg = nltm::parse_config(fl.config_file, fl.overrides);
        std::cerr << "effective configuration:\n" << nltm::config_echo(cfg);
        if (train_cmd->parsed()) return cmd_train(cfg, arch);
        if (optimize_cmd->parsed()) return cmd_optimize(cfg);
        if (eval_cmd->parsed()) return cmd_eval(cfg);
        if (inspect_cmd->parsed()) return cmd_inspect(cfg);
        return cmd_report(cfg);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "fault: " << e.what() << "\n";
        return kExitRuntime;
    }
}
