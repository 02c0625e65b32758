#include "nltm/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace nltm {

namespace {

std::string trim(const std::string& s) {
    const size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

[[noreturn]] void fail(const std::string& where, const std::string& msg) {
    throw std::invalid_argument("config error (" + where + "): " + msg);
}

int64_t to_int(const std::string& v, const std::string& where) {
    try {
        size_t pos = 0;
        const int64_t out = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return out;
    } catch (...) {
        fail(where, "expected integer, got '" + v + "'");
    }
}

double to_double(const std::string& v, const std::string& where) {
    try {
        size_t pos = 0;
        const double out = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return out;
    } catch (...) {
        fail(where, "expected number, got '" + v + "'");
    }
}

bool to_bool(const std::string& v, const std::string& where) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    fail(where, "expected boolean, got '" + v + "'");
}

void apply(CliConfig& cfg, const std::string& key, const std::string& value,
           const std::string& where) {
    auto& o = cfg.opt;
    if (key == "delta") o.delta = to_double(value, where);
    else if (key == "stage") {
        o.stage = to_int(value, where);
        if (o.stage != 1 && o.stage != 2) fail(where, "stage must be 1 or 2");
    } else if (key == "workers") o.workers = to_int(value, where);
    else if (key == "device") {
        if (value.rfind("cpu:", 0) != 0) {
            fail(where, "device must be cpu:<workers>; GPU execution is not supported here");
        }
        o.workers = to_int(value.substr(4), where);
    } else if (key == "seed") o.seed = static_cast<uint64_t>(to_int(value, where));
    else if (key == "min_layer_params") o.min_layer_params = to_int(value, where);
    else if (key == "epsilon1") o.epsilon1 = to_double(value, where);
    else if (key == "finetune_epochs_stage1") o.finetune_epochs_stage1 = to_int(value, where);
    else if (key == "proxy_epochs") o.proxy_epochs = to_int(value, where);
    else if (key == "final_epochs") o.final_epochs = to_int(value, where);
    else if (key == "backoff_rounds") o.backoff_rounds = to_int(value, where);
    else if (key == "anneal.t0") o.anneal.t0 = to_double(value, where);
    else if (key == "anneal.gamma") o.anneal.gamma = to_double(value, where);
    else if (key == "anneal.steps") o.anneal.steps = to_int(value, where);
    else if (key == "anneal.grow_factor") o.anneal.grow_factor = to_double(value, where);
    else if (key == "anneal.grow_prob") o.anneal.grow_prob = to_double(value, where);
    else if (key == "anneal.lambda") o.anneal.lambda = to_double(value, where);
    else if (key == "als.max_iters") o.als.max_iters = to_int(value, where);
    else if (key == "als.tol") o.als.tol = to_double(value, where);
    else if (key == "als.restarts") o.als.restarts = to_int(value, where);
    else if (key == "lr") o.lr = to_double(value, where);
    else if (key == "momentum") o.momentum = to_double(value, where);
    else if (key == "weight_decay") o.weight_decay = to_double(value, where);
    else if (key == "batch_size") o.batch_size = to_int(value, where);
    else if (key == "augment") o.augment = to_bool(value, where);
    else if (key == "epochs") cfg.train_epochs = to_int(value, where);
    else if (key == "model") cfg.model_path = value;
    else if (key == "out") cfg.out_path = value;
    else if (key == "report") cfg.report_path = value;
    else if (key == "idx_images") cfg.idx_images = value;
    else if (key == "idx_labels") cfg.idx_labels = value;
    else if (key == "idx_test_images") cfg.idx_test_images = value;
    else if (key == "idx_test_labels") cfg.idx_test_labels = value;
    else if (key == "synth") {
        // n,classes,hw,seed
        std::istringstream is(value);
        std::string part;
        std::vector<int64_t> nums;
        while (std::getline(is, part, ',')) nums.push_back(to_int(trim(part), where));
        if (nums.size() != 4) fail(where, "synth expects n,classes,hw,seed");
        cfg.synth = {nums[0], nums[1], nums[2], static_cast<uint64_t>(nums[3])};
        cfg.has_synth = true;
    } else {
        fail(where, "unknown key '" + key + "'");
    }
}

void apply_line(CliConfig& cfg, const std::string& raw, const std::string& where) {
    std::string line = raw;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) return;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) fail(where, "expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail(where, "empty key");
    apply(cfg, key, value, where);
}

}  // namespace

CliConfig parse_config(const std::string& file_path, const std::vector<std::string>& overrides) {
    CliConfig cfg;
    if (!file_path.empty()) {
        std::ifstream f(file_path);
        if (!f) throw std::invalid_argument("config error: cannot open " + file_path);
        std::string line;
        size_t lineno = 0;
        while (std::getline(f, line)) {
            ++lineno;
            apply_line(cfg, line, file_path + ":" + std::to_string(lineno));
        }
    }
    for (const auto& ov : overrides) apply_line(cfg, ov, "flag '" + ov + "'");
    cfg.opt.validate();
    if (cfg.train_epochs < 1) throw std::invalid_argument("config error: epochs must be >= 1");
    return cfg;
}

CliConfig parse_config(const std::vector<std::string>& overrides) {
    return parse_config("", overrides);
}

std::string CliConfig::dataset_descriptor() const {
    if (has_synth) {
        std::ostringstream os;
        os << "synth n=" << synth.n_per_class << " classes=" << synth.num_classes
           << " hw=" << synth.hw << " seed=" << synth.seed;
        return os.str();
    }
    if (has_idx()) return "idx " + idx_images;
    return "none";
}

std::string config_echo(const CliConfig& cfg) {
    const auto& o = cfg.opt;
    std::ostringstream os;
    char buf[64];
    const auto num = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.10g", v);
        return std::string(buf);
    };
    os << "delta = " << num(o.delta) << "\n"
       << "stage = " << o.stage << "\n"
       << "workers = " << o.workers << "\n"
       << "seed = " << o.seed << "\n"
       << "min_layer_params = " << o.min_layer_params << "\n"
       << "epsilon1 = " << num(o.epsilon1) << "\n"
       << "finetune_epochs_stage1 = " << o.finetune_epochs_stage1 << "\n"
       << "proxy_epochs = " << o.proxy_epochs << "\n"
       << "final_epochs = " << o.final_epochs << "\n"
       << "backoff_rounds = " << o.backoff_rounds << "\n"
       << "anneal.t0 = " << num(o.anneal.t0) << "\n"
       << "anneal.gamma = " << num(o.anneal.gamma) << "\n"
       << "anneal.steps = " << o.anneal.steps << "\n"
       << "anneal.grow_factor = " << num(o.anneal.grow_factor) << "\n"
       << "anneal.grow_prob = " << num(o.anneal.grow_prob) << "\n"
       << "anneal.lambda = " << num(o.anneal.lambda) << "\n"
       << "als.max_iters = " << o.als.max_iters << "\n"
       << "als.tol = " << num(o.als.tol) << "\n"
       << "als.restarts = " << o.als.restarts << "\n"
       << "lr = " << num(o.lr) << "\n"
       << "momentum = " << num(o.momentum) << "\n"
       << "weight_decay = " << num(o.weight_decay) << "\n"
       << "batch_size = " << o.batch_size << "\n"
       << "augment = " << (o.augment ? "true" : "false") << "\n"
       << "epochs = " << cfg.train_epochs << "\n";
    if (!cfg.model_path.empty()) os << "model = " << cfg.model_path << "\n";
    if (!cfg.out_path.empty()) os << "out = " << cfg.out_path << "\n";
    if (!cfg.report_path.empty()) os << "report = " << cfg.report_path << "\n";
    if (cfg.has_synth) {
        os << "synth = " << cfg.synth.n_per_class << "," << cfg.synth.num_classes << ","
           << cfg.synth.hw << "," << cfg.synth.seed << "\n";
    }
    if (cfg.has_idx()) {
        os << "idx_images = " << cfg.idx_images << "\n"
           << "idx_labels = " << cfg.idx_labels << "\n";
        if (!cfg.idx_test_images.empty()) {
            os << "idx_test_images = " << cfg.idx_test_images << "\n"
               << "idx_test_labels = " << cfg.idx_test_labels << "\n";
        }
    }
    return os.str();
}

}  // namespace nltm
