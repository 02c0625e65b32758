#pragma once

#include <memory>
#include <ostream>
#include <vector>

#include "nltm/data.hpp"
#include "nltm/model.hpp"

namespace nltm {

struct TrainConfig {
    int64_t epochs = 10;
    int64_t batch_size = 64;
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 0.0;
    double clip_norm = 5.0;  // global L2 gradient clip; <=0 disables
    uint64_t seed = 0;
    int64_t workers = 1;
    bool shuffle = true;
    bool augment = false;
    AugmentConfig aug;
    std::vector<int64_t> freeze_layers;  // layer indices excluded from updates
    std::ostream* log = nullptr;         // per-epoch progress lines when set
};

/// Per-layer gradients mirroring layer_params() order; empty vectors for
/// parameterless layers.
struct GradientSet {
    std::vector<std::vector<Tensor>> layers;
};

struct TrainResult {
    Model model;
    std::vector<double> loss_history;  // mean loss per epoch
};

/// Optimizer step contract: called once per mini-batch with the mean
/// gradients of all trainable tensors, flattened in layer order; mutates
/// the parameters in place. State (momentum etc.) lives in the optimizer.
class Optimizer {
public:
    virtual ~Optimizer() = default;
    virtual void step(const std::vector<Tensor*>& params,
                      const std::vector<const Tensor*>& grads) = 0;
};

class SgdMomentum final : public Optimizer {
public:
    SgdMomentum(double lr, double momentum, double weight_decay)
        : lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {}
    void step(const std::vector<Tensor*>& params,
              const std::vector<const Tensor*>& grads) override;

private:
    double lr_, momentum_, weight_decay_;
    std::vector<std::vector<double>> velocity_;
};

// Decomposed layers execute their factor chain directly; the reconstructed
// kernel is never materialized.
Tensor forward(const Model& model, const Tensor& batch);

// Mean softmax cross-entropy over the batch plus gradients for every
// trainable tensor. Throws on non-finite loss, naming the layer.
std::pair<double, GradientSet> loss_and_grads(const Model& model, const Tensor& batch,
                                              const std::vector<int64_t>& labels);

// SGD with momentum, weight decay, and global-norm clipping. Deterministic
// for fixed (seed, workers): per-epoch shuffle from the seed, worker shard
// gradients reduced in fixed worker order.
TrainResult train(const Model& model, const Dataset& data, const TrainConfig& cfg);
TrainResult train(const Model& model, const Dataset& data, const TrainConfig& cfg,
                  Optimizer& opt);

// Top-1 accuracy in percent; argmax ties break toward the lowest class index.
double evaluate_top1(const Model& model, const Dataset& data);

}  // namespace nltm
