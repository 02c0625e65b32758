#include "nltm/zoo.hpp"

#include <cmath>
#include <stdexcept>

#include "nltm/rng.hpp"

namespace nltm {

namespace {

Tensor he_normal(std::vector<int64_t> shape, int64_t fan_in, Rng& rng) {
    Tensor t(std::move(shape));
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, stddev);
    return t;
}

Conv2DLayer conv(int64_t in_ch, int64_t out_ch, Rng& rng) {
    Conv2DLayer c;
    c.geom = ConvGeometry{3, 3, 1, 1, 1, 1, in_ch, out_ch};
    c.weight = he_normal({out_ch, in_ch, 3, 3}, 9 * in_ch, rng);
    c.bias = Tensor({out_ch});
    return c;
}

DenseLayer dense(int64_t in, int64_t out, Rng& rng) {
    DenseLayer d;
    d.in = in;
    d.out = out;
    d.weight = he_normal({in, out}, in, rng);
    d.bias = Tensor({out});
    return d;
}

}  // namespace

Model make_reference_cnn(const std::vector<int64_t>& input_shape, int64_t num_classes,
                         uint64_t seed) {
    if (input_shape.size() != 3) throw std::invalid_argument("input shape must be [C,H,W]");
    const int64_t c = input_shape[0], h = input_shape[1], w = input_shape[2];
    if (h % 4 != 0 || w % 4 != 0) {
        throw std::invalid_argument("reference cnn needs H and W divisible by 4");
    }
    Rng rng(Rng::mix(seed, 0xc44ULL));
    Model m;
    m.name = "ref_cnn";
    m.input_shape = input_shape;
    m.num_classes = num_classes;
    m.layers.emplace_back(conv(c, 16, rng));
    m.layers.emplace_back(ReLULayer{});
    m.layers.emplace_back(MaxPool2DLayer{2, 2});
    m.layers.emplace_back(conv(16, 32, rng));
    m.layers.emplace_back(ReLULayer{});
    m.layers.emplace_back(MaxPool2DLayer{2, 2});
    m.layers.emplace_back(FlattenLayer{});
    const int64_t flat = 32 * (h / 4) * (w / 4);
    m.layers.emplace_back(dense(flat, 128, rng));
    m.layers.emplace_back(ReLULayer{});
    m.layers.emplace_back(dense(128, num_classes, rng));
    infer_shapes(m);
    return m;
}

Model make_reference_mlp(const std::vector<int64_t>& input_shape, int64_t num_classes,
                         uint64_t seed) {
    if (input_shape.size() != 3) throw std::invalid_argument("input shape must be [C,H,W]");
    Rng rng(Rng::mix(seed, 0x317ULL));
    Model m;
    m.name = "ref_mlp";
    m.input_shape = input_shape;
    m.num_classes = num_classes;
    m.layers.emplace_back(FlattenLayer{});
    const int64_t flat = input_shape[0] * input_shape[1] * input_shape[2];
    m.layers.emplace_back(dense(flat, 256, rng));
    m.layers.emplace_back(ReLULayer{});
    m.layers.emplace_back(dense(256, num_classes, rng));
    infer_shapes(m);
    return m;
}

Model make_architecture(const std::string& name, const std::vector<int64_t>& input_shape,
                        int64_t num_classes, uint64_t seed) {
    if (name == "cnn") return make_reference_cnn(input_shape, num_classes, seed);
    if (name == "mlp") return make_reference_mlp(input_shape, num_classes, seed);
    throw std::invalid_argument("unknown architecture '" + name + "' (expected cnn or mlp)");
}

}  // namespace nltm
