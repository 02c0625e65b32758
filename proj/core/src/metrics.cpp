#include "nltm/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "nltm/runtime.hpp"

namespace nltm {

int64_t count_macs(const LayerSpec& layer, const std::vector<int64_t>& in_shape) {
    if (const auto* c = std::get_if<Conv2DLayer>(&layer)) {
        const auto& g = c->geom;
        const int64_t oh = g.out_h(in_shape[1]), ow = g.out_w(in_shape[2]);
        return oh * ow * g.kernel_h * g.kernel_w * g.in_ch * g.out_ch;
    }
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
        return d->in * d->out;
    }
    if (const auto* dc = std::get_if<DecomposedConv2DLayer>(&layer)) {
        const auto& g = dc->geom;
        const int64_t h = in_shape[1], w = in_shape[2];
        const int64_t h2 = g.out_h(h), w2 = g.out_w(w);
        int64_t macs = h * w * g.in_ch * dc->rank;        // pointwise in -> r
        macs += h2 * w * g.kernel_h * dc->rank;           // vertical depthwise
        macs += h2 * w2 * g.kernel_w * dc->rank;          // horizontal depthwise
        macs += h2 * w2 * dc->rank * g.out_ch;            // pointwise r -> out
        return macs;
    }
    if (const auto* dd = std::get_if<DecomposedDenseLayer>(&layer)) {
        return dd->in * dd->rank + dd->rank + dd->rank * dd->out;
    }
    return 0;  // activations, pooling, flatten
}

int64_t count_macs(const Model& model) {
    const auto shapes = infer_shapes(model);
    int64_t macs = 0;
    std::vector<int64_t> cur = model.input_shape;
    for (size_t i = 0; i < model.layers.size(); ++i) {
        macs += count_macs(model.layers[i], cur);
        cur = shapes[i];
    }
    return macs;
}

int64_t memory_footprint_bytes(const Model& model) {
    const auto shapes = infer_shapes(model);
    int64_t elems = 1;
    for (int64_t e : model.input_shape) elems *= e;
    for (const auto& s : shapes) {
        int64_t n = 1;
        for (int64_t e : s) n *= e;
        elems += n;
    }
    return 4 * count_params(model) + 4 * elems;
}

double measure_time_ms(const Model& model, int64_t warmup, int64_t runs) {
    if (runs < 1) throw std::invalid_argument("measure_time_ms: runs must be >= 1");
    Tensor sample({1, model.input_shape[0], model.input_shape[1], model.input_shape[2]});
    for (int64_t i = 0; i < sample.size(); ++i) sample[i] = 0.5;
    for (int64_t i = 0; i < warmup; ++i) forward(model, sample);
    std::vector<double> times;
    times.reserve(static_cast<size_t>(runs));
    for (int64_t i = 0; i < runs; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        forward(model, sample);
        const auto t1 = std::chrono::steady_clock::now();
        times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::sort(times.begin(), times.end());
    const size_t n = times.size();
    return (n % 2 == 1) ? times[n / 2] : 0.5 * (times[n / 2 - 1] + times[n / 2]);
}

namespace {

double ratio_of(double orig, double opt) {
    if (opt == 0.0) return std::numeric_limits<double>::infinity();
    return orig / opt;
}

}  // namespace

EnhancementRow enhancement(const MetricsRecord& original, const MetricsRecord& optimized) {
    EnhancementRow e;
    e.accuracy_delta = optimized.accuracy - original.accuracy;
    e.size_ratio = ratio_of(static_cast<double>(original.size_bytes),
                            static_cast<double>(optimized.size_bytes));
    e.macs_ratio =
        ratio_of(static_cast<double>(original.macs), static_cast<double>(optimized.macs));
    e.params_ratio =
        ratio_of(static_cast<double>(original.params), static_cast<double>(optimized.params));
    e.footprint_ratio = ratio_of(static_cast<double>(original.memory_footprint),
                                 static_cast<double>(optimized.memory_footprint));
    e.time_ratio = ratio_of(original.execution_time_ms, optimized.execution_time_ms);
    return e;
}

std::string format_ratio(double ratio) {
    if (std::isinf(ratio)) return "inf";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2fx", ratio);
    return buf;
}

std::string format_signed(double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%+.2f", value);
    return buf;
}

void Report::add(const std::string& key, const std::string& value) {
    fields.emplace_back(key, value);
}

void Report::add(const std::string& key, double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", value);
    fields.emplace_back(key, buf);
}

void Report::add(const std::string& key, int64_t value) {
    fields.emplace_back(key, std::to_string(value));
}

const std::string* Report::find(const std::string& key) const {
    for (const auto& [k, v] : fields)
        if (k == key) return &v;
    return nullptr;
}

std::string render_report(const Report& report) {
    std::ostringstream os;
    for (const auto& [k, v] : report.fields) os << k << " = " << v << "\n";
    return os.str();
}

Report parse_report(const std::string& text) {
    Report r;
    std::istringstream is(text);
    std::string line;
    size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        const size_t eq = line.find(" = ");
        if (eq == std::string::npos) {
            throw std::runtime_error("report parse error at line " + std::to_string(lineno));
        }
        r.fields.emplace_back(line.substr(0, eq), line.substr(eq + 3));
    }
    return r;
}

std::string render_table(const std::vector<std::pair<std::string, MetricsRecord>>& rows,
                         const EnhancementRow* enh) {
    std::ostringstream os;
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-10s %-14s %-12s %-14s %-12s %-18s %-16s\n", "Model",
                  "Accuracy (%)", "Size (MB)", "MACs", "#Params", "Memory Footprint",
                  "Execution Time");
    os << buf;
    os << std::string(98, '-') << "\n";
    for (const auto& [name, m] : rows) {
        std::snprintf(buf, sizeof(buf), "%-10s %-14.4f %-12.4f %-14lld %-12lld %-18lld %-16.4f\n",
                      name.c_str(), m.accuracy, static_cast<double>(m.size_bytes) / (1024.0 * 1024.0),
                      static_cast<long long>(m.macs), static_cast<long long>(m.params),
                      static_cast<long long>(m.memory_footprint), m.execution_time_ms);
        os << buf;
    }
    if (enh != nullptr) {
        std::snprintf(buf, sizeof(buf), "%-10s %-14s %-12s %-14s %-12s %-18s %-16s\n", "Enh",
                      format_signed(enh->accuracy_delta).c_str(),
                      format_ratio(enh->size_ratio).c_str(), format_ratio(enh->macs_ratio).c_str(),
                      format_ratio(enh->params_ratio).c_str(),
                      format_ratio(enh->footprint_ratio).c_str(),
                      format_ratio(enh->time_ratio).c_str());
        os << buf;
    }
    return os.str();
}

}  // namespace nltm
