#include "nltm/model.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace nltm {

const char* layer_kind(const LayerSpec& layer) {
    return std::visit(
        [](const auto& l) -> const char* {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, Conv2DLayer>) return "conv2d";
            else if constexpr (std::is_same_v<T, DenseLayer>) return "dense";
            else if constexpr (std::is_same_v<T, DecomposedConv2DLayer>) return "dconv2d";
            else if constexpr (std::is_same_v<T, DecomposedDenseLayer>) return "ddense";
            else if constexpr (std::is_same_v<T, ReLULayer>) return "relu";
            else if constexpr (std::is_same_v<T, MaxPool2DLayer>) return "maxpool2d";
            else return "flatten";
        },
        layer);
}

namespace {

void expect_shape(const Tensor& t, const std::vector<int64_t>& want, const char* what) {
    if (t.shape() != want) {
        std::ostringstream os;
        os << "layer validation: " << what << " has shape " << t.shape_str() << ", expected [";
        for (size_t i = 0; i < want.size(); ++i) os << (i ? "x" : "") << want[i];
        os << "]";
        throw std::invalid_argument(os.str());
    }
}

}  // namespace

void validate_layer(const LayerSpec& layer) {
    if (const auto* c = std::get_if<Conv2DLayer>(&layer)) {
        expect_shape(c->weight, {c->geom.out_ch, c->geom.in_ch, c->geom.kernel_h, c->geom.kernel_w},
                     "conv weight");
        expect_shape(c->bias, {c->geom.out_ch}, "conv bias");
    } else if (const auto* d = std::get_if<DenseLayer>(&layer)) {
        expect_shape(d->weight, {d->in, d->out}, "dense weight");
        expect_shape(d->bias, {d->out}, "dense bias");
    } else if (const auto* dc = std::get_if<DecomposedConv2DLayer>(&layer)) {
        if (dc->rank < 1) throw std::invalid_argument("decomposed conv rank must be >= 1");
        expect_shape(dc->f1, {dc->rank, 1, 1, dc->geom.kernel_w}, "conv factor F1");
        expect_shape(dc->f2, {dc->rank, 1, dc->geom.kernel_h, 1}, "conv factor F2");
        expect_shape(dc->f3, {dc->rank, dc->geom.in_ch, 1, 1}, "conv factor F3");
        expect_shape(dc->f4, {dc->geom.out_ch, dc->rank, 1, 1}, "conv factor F4");
        expect_shape(dc->bias, {dc->geom.out_ch}, "conv bias");
    } else if (const auto* dd = std::get_if<DecomposedDenseLayer>(&layer)) {
        if (dd->rank < 1 || dd->rank > std::min(dd->in, dd->out)) {
            throw std::invalid_argument("decomposed dense rank out of range");
        }
        expect_shape(dd->u, {dd->in, dd->rank}, "dense factor U");
        expect_shape(dd->s, {dd->rank}, "dense factor s");
        expect_shape(dd->v, {dd->out, dd->rank}, "dense factor V");
        expect_shape(dd->bias, {dd->out}, "dense bias");
    } else if (const auto* mp = std::get_if<MaxPool2DLayer>(&layer)) {
        if (mp->k < 1 || mp->stride < 1) throw std::invalid_argument("maxpool k/stride must be >= 1");
    }
}

std::vector<std::vector<int64_t>> infer_shapes(const Model& model) {
    if (model.input_shape.size() != 3) {
        throw std::invalid_argument("model input shape must be [C,H,W]");
    }
    std::vector<std::vector<int64_t>> shapes;
    std::vector<int64_t> cur = model.input_shape;
    for (size_t i = 0; i < model.layers.size(); ++i) {
        const LayerSpec& layer = model.layers[i];
        try {
            validate_layer(layer);
            if (const auto* c = std::get_if<Conv2DLayer>(&layer)) {
                if (cur.size() != 3 || cur[0] != c->geom.in_ch) {
                    throw std::invalid_argument("conv expects " + std::to_string(c->geom.in_ch) +
                                                " channels");
                }
                cur = {c->geom.out_ch, c->geom.out_h(cur[1]), c->geom.out_w(cur[2])};
            } else if (const auto* dc = std::get_if<DecomposedConv2DLayer>(&layer)) {
                if (cur.size() != 3 || cur[0] != dc->geom.in_ch) {
                    throw std::invalid_argument("decomposed conv expects " +
                                                std::to_string(dc->geom.in_ch) + " channels");
                }
                cur = {dc->geom.out_ch, dc->geom.out_h(cur[1]), dc->geom.out_w(cur[2])};
            } else if (const auto* d = std::get_if<DenseLayer>(&layer)) {
                if (cur.size() != 1 || cur[0] != d->in) {
                    throw std::invalid_argument("dense expects flat input of " +
                                                std::to_string(d->in));
                }
                cur = {d->out};
            } else if (const auto* dd = std::get_if<DecomposedDenseLayer>(&layer)) {
                if (cur.size() != 1 || cur[0] != dd->in) {
                    throw std::invalid_argument("decomposed dense expects flat input of " +
                                                std::to_string(dd->in));
                }
                cur = {dd->out};
            } else if (const auto* mp = std::get_if<MaxPool2DLayer>(&layer)) {
                if (cur.size() != 3) throw std::invalid_argument("maxpool expects [C,H,W] input");
                const auto pool = [&](int64_t e) {
                    const int64_t num = e - mp->k;
                    if (num < 0 || num % mp->stride != 0) {
                        throw std::invalid_argument("maxpool extent " + std::to_string(e) +
                                                    " incompatible with k=" + std::to_string(mp->k) +
                                                    " stride=" + std::to_string(mp->stride));
                    }
                    return num / mp->stride + 1;
                };
                cur = {cur[0], pool(cur[1]), pool(cur[2])};
            } else if (std::holds_alternative<FlattenLayer>(layer)) {
                int64_t flat = 1;
                for (int64_t e : cur) flat *= e;
                cur = {flat};
            }
            // ReLU keeps the shape.
        } catch (const std::exception& e) {
            throw std::invalid_argument("layer " + std::to_string(i) + " (" + layer_kind(layer) +
                                        "): " + e.what());
        }
        shapes.push_back(cur);
    }
    // An empty model is the identity; only classifiers carry the output
    // contract.
    if (!model.layers.empty() && (cur.size() != 1 || cur[0] != model.num_classes)) {
        throw std::invalid_argument("model output extent does not equal num_classes");
    }
    return shapes;
}

int64_t count_params(const LayerSpec& layer) {
    int64_t n = 0;
    for (const Tensor* t : layer_params(layer)) n += t->size();
    return n;
}

int64_t count_params(const Model& model) {
    int64_t n = 0;
    for (const auto& l : model.layers) n += count_params(l);
    return n;
}

std::vector<int64_t> optimizable_indices(const Model& model) {
    std::vector<int64_t> idx;
    for (size_t i = 0; i < model.layers.size(); ++i) {
        if (std::holds_alternative<Conv2DLayer>(model.layers[i]) ||
            std::holds_alternative<DenseLayer>(model.layers[i])) {
            idx.push_back(static_cast<int64_t>(i));
        }
    }
    return idx;
}

Model replace_layer(const Model& model, int64_t index, LayerSpec layer) {
    if (index < 0 || index >= static_cast<int64_t>(model.layers.size())) {
        throw std::invalid_argument("replace_layer: index out of range");
    }
    Model next = model;
    next.layers[static_cast<size_t>(index)] = std::move(layer);
    infer_shapes(next);  // rejects shape-contract violations
    return next;
}

std::vector<Tensor*> layer_params(LayerSpec& layer) {
    std::vector<Tensor*> out;
    if (auto* c = std::get_if<Conv2DLayer>(&layer)) {
        out = {&c->weight, &c->bias};
    } else if (auto* d = std::get_if<DenseLayer>(&layer)) {
        out = {&d->weight, &d->bias};
    } else if (auto* dc = std::get_if<DecomposedConv2DLayer>(&layer)) {
        out = {&dc->f1, &dc->f2, &dc->f3, &dc->f4, &dc->bias};
    } else if (auto* dd = std::get_if<DecomposedDenseLayer>(&layer)) {
        out = {&dd->u, &dd->s, &dd->v, &dd->bias};
    }
    return out;
}

std::vector<const Tensor*> layer_params(const LayerSpec& layer) {
    auto ptrs = layer_params(const_cast<LayerSpec&>(layer));
    return {ptrs.begin(), ptrs.end()};
}

// ---------------------------------------------------------------------------
// Checkpoint serialization
// ---------------------------------------------------------------------------

uint32_t crc32(const unsigned char* data, size_t len) {
    static const auto table = [] {
        std::array<uint32_t, 256> t{};
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    uint32_t c = 0xffffffffu;
    for (size_t i = 0; i < len; ++i) c = table[(c ^ data[i]) & 0xffu] ^ (c >> 8);
    return c ^ 0xffffffffu;
}

namespace {

constexpr char kMagic[4] = {'N', 'L', 'T', 'M'};
constexpr uint32_t kVersion = 1;

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::string header_text(const Model& model) {
    std::ostringstream os;
    os << "name " << (model.name.empty() ? "model" : model.name) << "\n";
    os << "input " << model.input_shape[0] << " " << model.input_shape[1] << " "
       << model.input_shape[2] << "\n";
    os << "classes " << model.num_classes << "\n";
    os << "layers " << model.layers.size() << "\n";
    for (const auto& layer : model.layers) {
        if (const auto* c = std::get_if<Conv2DLayer>(&layer)) {
            const auto& g = c->geom;
            os << "conv2d " << g.out_ch << " " << g.in_ch << " " << g.kernel_h << " " << g.kernel_w
               << " " << g.stride_h << " " << g.stride_w << " " << g.pad_h << " " << g.pad_w
               << "\n";
        } else if (const auto* d = std::get_if<DenseLayer>(&layer)) {
            os << "dense " << d->in << " " << d->out << "\n";
        } else if (const auto* dc = std::get_if<DecomposedConv2DLayer>(&layer)) {
            const auto& g = dc->geom;
            os << "dconv2d " << g.out_ch << " " << g.in_ch << " " << g.kernel_h << " "
               << g.kernel_w << " " << g.stride_h << " " << g.stride_w << " " << g.pad_h << " "
               << g.pad_w << " " << dc->rank << "\n";
        } else if (const auto* dd = std::get_if<DecomposedDenseLayer>(&layer)) {
            os << "ddense " << dd->in << " " << dd->out << " " << dd->rank << "\n";
        } else if (std::holds_alternative<ReLULayer>(layer)) {
            os << "relu\n";
        } else if (const auto* mp = std::get_if<MaxPool2DLayer>(&layer)) {
            os << "maxpool2d " << mp->k << " " << mp->stride << "\n";
        } else {
            os << "flatten\n";
        }
    }
    return os.str();
}

void append_tensor_blob(std::string& out, const Tensor& t) {
    std::string blob;
    blob.reserve(static_cast<size_t>(t.size()) * 4);
    for (int64_t i = 0; i < t.size(); ++i) {
        const float f = static_cast<float>(t[i]);
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_u32(blob, bits);
    }
    out += blob;
    put_u32(out, crc32(reinterpret_cast<const unsigned char*>(blob.data()), blob.size()));
}

struct Reader {
    const std::string& buf;
    size_t pos = 0;

    void need(size_t n, const std::string& what) {
        if (pos + n > buf.size()) throw std::runtime_error("checkpoint truncated at " + what);
    }
    uint32_t u32(const std::string& what) {
        need(4, what);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64(const std::string& what) {
        need(8, what);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
};

Tensor read_tensor(Reader& r, std::vector<int64_t> shape, const std::string& what) {
    int64_t n = 1;
    for (int64_t e : shape) n *= e;
    const size_t bytes = static_cast<size_t>(n) * 4;
    r.need(bytes + 4, what);
    std::vector<double> data(static_cast<size_t>(n));
    const size_t start = r.pos;
    for (int64_t i = 0; i < n; ++i) {
        const uint32_t bits = r.u32(what);
        float f;
        std::memcpy(&f, &bits, 4);
        data[static_cast<size_t>(i)] = static_cast<double>(f);
    }
    const uint32_t want = r.u32(what);
    const uint32_t got =
        crc32(reinterpret_cast<const unsigned char*>(r.buf.data()) + start, bytes);
    if (want != got) throw std::runtime_error("checkpoint checksum failure in " + what);
    return Tensor(std::move(shape), std::move(data));
}

}  // namespace

void save_model(const Model& model, const std::string& path) {
    infer_shapes(model);
    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kVersion);
    const std::string header = header_text(model);
    put_u64(out, header.size());
    out += header;
    for (const auto& layer : model.layers) {
        for (const Tensor* t : layer_params(layer)) append_tensor_blob(out, *t);
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("checkpoint write failed: " + path);
}

Model load_model(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    Reader r{buf};
    r.need(4, "magic");
    if (std::memcmp(buf.data(), kMagic, 4) != 0) throw std::runtime_error("bad magic");
    r.pos = 4;
    const uint32_t version = r.u32("version");
    if (version != kVersion) {
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    }
    const uint64_t hlen = r.u64("header length");
    r.need(hlen, "header");
    std::istringstream hs(buf.substr(r.pos, hlen));
    r.pos += hlen;

    Model model;
    std::string key;
    size_t nlayers = 0;
    if (!(hs >> key) || key != "name" || !(hs >> model.name))
        throw std::runtime_error("checkpoint header: missing name");
    model.input_shape.resize(3);
    if (!(hs >> key) || key != "input" || !(hs >> model.input_shape[0] >> model.input_shape[1] >>
                                            model.input_shape[2]))
        throw std::runtime_error("checkpoint header: missing input shape");
    if (!(hs >> key) || key != "classes" || !(hs >> model.num_classes))
        throw std::runtime_error("checkpoint header: missing classes");
    if (!(hs >> key) || key != "layers" || !(hs >> nlayers))
        throw std::runtime_error("checkpoint header: missing layer count");

    std::vector<std::string> layer_descrs;
    for (size_t i = 0; i < nlayers; ++i) {
        std::string kind;
        if (!(hs >> kind)) throw std::runtime_error("checkpoint header: missing layer " +
                                                    std::to_string(i));
        if (kind == "conv2d") {
            Conv2DLayer c;
            auto& g = c.geom;
            if (!(hs >> g.out_ch >> g.in_ch >> g.kernel_h >> g.kernel_w >> g.stride_h >>
                  g.stride_w >> g.pad_h >> g.pad_w))
                throw std::runtime_error("checkpoint header: bad conv2d at layer " +
                                         std::to_string(i));
            model.layers.emplace_back(std::move(c));
        } else if (kind == "dense") {
            DenseLayer d;
            if (!(hs >> d.in >> d.out))
                throw std::runtime_error("checkpoint header: bad dense at layer " +
                                         std::to_string(i));
            model.layers.emplace_back(std::move(d));
        } else if (kind == "dconv2d") {
            DecomposedConv2DLayer dc;
            auto& g = dc.geom;
            if (!(hs >> g.out_ch >> g.in_ch >> g.kernel_h >> g.kernel_w >> g.stride_h >>
                  g.stride_w >> g.pad_h >> g.pad_w >> dc.rank))
                throw std::runtime_error("checkpoint header: bad dconv2d at layer " +
                                         std::to_string(i));
            model.layers.emplace_back(std::move(dc));
        } else if (kind == "ddense") {
            DecomposedDenseLayer dd;
            if (!(hs >> dd.in >> dd.out >> dd.rank))
                throw std::runtime_error("checkpoint header: bad ddense at layer " +
                                         std::to_string(i));
            model.layers.emplace_back(std::move(dd));
        } else if (kind == "relu") {
            model.layers.emplace_back(ReLULayer{});
        } else if (kind == "maxpool2d") {
            MaxPool2DLayer mp;
            if (!(hs >> mp.k >> mp.stride))
                throw std::runtime_error("checkpoint header: bad maxpool2d at layer " +
                                         std::to_string(i));
            model.layers.emplace_back(std::move(mp));
        } else if (kind == "flatten") {
            model.layers.emplace_back(FlattenLayer{});
        } else {
            throw std::runtime_error("checkpoint header: unknown layer kind '" + kind + "'");
        }
    }

    for (size_t i = 0; i < model.layers.size(); ++i) {
        LayerSpec& layer = model.layers[i];
        const std::string where = "layer " + std::to_string(i) + " (" + layer_kind(layer) + ")";
        if (auto* c = std::get_if<Conv2DLayer>(&layer)) {
            const auto& g = c->geom;
            c->weight = read_tensor(r, {g.out_ch, g.in_ch, g.kernel_h, g.kernel_w}, where);
            c->bias = read_tensor(r, {g.out_ch}, where);
        } else if (auto* d = std::get_if<DenseLayer>(&layer)) {
            d->weight = read_tensor(r, {d->in, d->out}, where);
            d->bias = read_tensor(r, {d->out}, where);
        } else if (auto* dc = std::get_if<DecomposedConv2DLayer>(&layer)) {
            const auto& g = dc->geom;
            dc->f1 = read_tensor(r, {dc->rank, 1, 1, g.kernel_w}, where);
            dc->f2 = read_tensor(r, {dc->rank, 1, g.kernel_h, 1}, where);
            dc->f3 = read_tensor(r, {dc->rank, g.in_ch, 1, 1}, where);
            dc->f4 = read_tensor(r, {g.out_ch, dc->rank, 1, 1}, where);
            dc->bias = read_tensor(r, {g.out_ch}, where);
        } else if (auto* dd = std::get_if<DecomposedDenseLayer>(&layer)) {
            dd->u = read_tensor(r, {dd->in, dd->rank}, where);
            dd->s = read_tensor(r, {dd->rank}, where);
            dd->v = read_tensor(r, {dd->out, dd->rank}, where);
            dd->bias = read_tensor(r, {dd->out}, where);
        }
    }
    if (r.pos != buf.size()) throw std::runtime_error("checkpoint has trailing bytes");
    infer_shapes(model);
    return model;
}

}  // namespace nltm
