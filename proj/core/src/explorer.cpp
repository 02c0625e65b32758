#include "nltm/explorer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "nltm/runtime.hpp"

namespace nltm {

int64_t break_even_rank(const LayerSpec& layer) {
    if (const auto* c = std::get_if<Conv2DLayer>(&layer)) {
        const auto& g = c->geom;
        const int64_t dense_params = g.kernel_w * g.kernel_h * g.in_ch * g.out_ch;
        const int64_t per_rank = g.kernel_w + g.kernel_h + g.in_ch + g.out_ch;
        return (dense_params - 1) / per_rank;
    }
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
        return (d->in * d->out - 1) / (d->in + d->out + 1);
    }
    throw std::invalid_argument("break_even_rank: Conv2D or Dense layer required");
}

namespace {

int64_t weight_count(const LayerSpec& layer) {
    if (const auto* c = std::get_if<Conv2DLayer>(&layer)) return c->weight.size();
    if (const auto* d = std::get_if<DenseLayer>(&layer)) return d->weight.size();
    return 0;
}

int64_t structural_cap(const LayerSpec& layer) {
    int64_t cap = break_even_rank(layer);
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
        cap = std::min(cap, std::min(d->in, d->out));
    }
    return cap;
}

// Dense rank choice: smallest r whose tail energy ratio is <= epsilon1^2.
int64_t dense_rank_for(const DenseLayer& d, double epsilon1, int64_t cap) {
    const auto sv = singular_values(d.weight);
    double total = 0.0;
    for (double s : sv) total += s * s;
    if (total == 0.0) return 1;
    const double budget = epsilon1 * epsilon1 * total;
    double tail = total;
    for (size_t r = 1; r <= sv.size(); ++r) {
        tail -= sv[r - 1] * sv[r - 1];
        if (tail <= budget) return std::min<int64_t>(static_cast<int64_t>(r), cap);
    }
    return std::min<int64_t>(static_cast<int64_t>(sv.size()), cap);
}

// Conv rank choice: doubling grid then binary refinement on the ALS fit.
int64_t conv_rank_for(const Conv2DLayer& c, double epsilon1, int64_t cap, AlsOptions als,
                      uint64_t layer_salt) {
    als.seed = Rng::mix(als.seed, layer_salt);
    int64_t lo = 0;  // highest rank known to fail
    int64_t hi = -1;
    for (int64_t r = 1; r <= cap; r *= 2) {
        const double fit = cp_als(c.weight, r, als).fit;
        if (fit <= epsilon1) {
            hi = r;
            break;
        }
        lo = r;
        if (r == cap) break;
    }
    if (hi < 0) {
        if (lo < cap) {
            const double fit = cp_als(c.weight, cap, als).fit;
            if (fit > epsilon1) return cap;  // nothing meets the threshold
            hi = cap;
        } else {
            return cap;
        }
    }
    while (hi - lo > 1) {
        const int64_t mid = (lo + hi) / 2;
        const double fit = cp_als(c.weight, mid, als).fit;
        if (fit <= epsilon1) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    return hi;
}

}  // namespace

RankAssignment initial_ranks(const Model& model, const ComposedList& cl, double epsilon1,
                             const AlsOptions& als) {
    const auto idx = optimizable_indices(model);
    if (cl.bits.size() != idx.size()) {
        throw std::invalid_argument("initial_ranks: composed list length mismatch");
    }
    RankAssignment ranks;
    for (size_t i = 0; i < idx.size(); ++i) {
        if (!cl.bits[i]) continue;
        const LayerSpec& layer = model.layers[static_cast<size_t>(idx[i])];
        const int64_t cap = std::max<int64_t>(1, structural_cap(layer));
        if (const auto* d = std::get_if<DenseLayer>(&layer)) {
            ranks[idx[i]] = std::max<int64_t>(1, dense_rank_for(*d, epsilon1, cap));
        } else {
            const auto& c = std::get<Conv2DLayer>(layer);
            ranks[idx[i]] =
                std::max<int64_t>(1, conv_rank_for(c, epsilon1, cap, als, static_cast<uint64_t>(idx[i])));
        }
    }
    return ranks;
}

namespace {

struct Decomposed {
    LayerSpec layer;
    double fit;
};

Decomposed decompose_at(const LayerSpec& original, int64_t rank, AlsOptions als,
                        uint64_t layer_salt) {
    if (const auto* d = std::get_if<DenseLayer>(&original)) {
        DecomposedDenseLayer dd = decompose_dense(*d, rank);
        const double fit = rel_error(d->weight, reconstruct_dense_weight(dd));
        return {LayerSpec(std::move(dd)), fit};
    }
    const auto& c = std::get<Conv2DLayer>(original);
    als.seed = Rng::mix(als.seed, layer_salt);
    DecomposedConv2DLayer dc = decompose_conv(c, rank, als);
    const double fit = rel_error(c.weight, reconstruct_conv_kernel(dc));
    return {LayerSpec(std::move(dc)), fit};
}

std::vector<int64_t> frozen_layers(const std::vector<int64_t>& opt_idx, const ComposedList& cl) {
    std::vector<int64_t> out;
    for (size_t i = 0; i < opt_idx.size(); ++i)
        if (!cl.bits[i]) out.push_back(opt_idx[i]);
    return out;
}

TrainConfig finetune_config(const OptimizationConfig& cfg, int64_t epochs, uint64_t salt) {
    TrainConfig tc;
    tc.epochs = epochs;
    tc.batch_size = cfg.batch_size;
    tc.lr = cfg.lr;
    tc.momentum = cfg.momentum;
    tc.weight_decay = cfg.weight_decay;
    tc.seed = Rng::mix(cfg.seed, salt);
    tc.workers = cfg.workers;
    tc.augment = cfg.augment;
    return tc;
}

}  // namespace

Stage1Result stage1(const Model& model, const Dataset& train_set, const Dataset& val,
                    double baseline_val_acc, const ComposedList& cl,
                    const OptimizationConfig& cfg) {
    Stage1Result res{model, {}};
    res.state.cl = cl;
    if (!cl.any()) {
        res.state.val_accuracy = baseline_val_acc;
        res.state.delta_met = true;
        res.state.audit.push_back("stage1: empty composed list, model returned unchanged");
        return res;
    }

    const auto opt_idx = optimizable_indices(model);
    res.state.ranks = initial_ranks(model, cl, cfg.epsilon1, cfg.als);
    std::map<int64_t, int64_t> caps;
    for (size_t i = 0; i < opt_idx.size(); ++i) {
        if (cl.bits[i]) {
            caps[opt_idx[i]] =
                std::max<int64_t>(1, structural_cap(model.layers[static_cast<size_t>(opt_idx[i])]));
        }
    }

    Model current = model;
    for (const auto& [li, r] : res.state.ranks) {
        Decomposed d = decompose_at(model.layers[static_cast<size_t>(li)], r, cfg.als,
                                    static_cast<uint64_t>(li));
        res.state.fits[li] = d.fit;
        current = replace_layer(current, li, std::move(d.layer));
    }

    // Best candidate ordering: feasible beats infeasible, then fewer params,
    // then higher validation accuracy.
    struct Best {
        Model model;
        bool feasible = false;
        int64_t params = 0;
        double val_acc = 0.0;
        RankAssignment ranks;
        ComposedList cl;
        std::map<int64_t, double> fits;
    };
    std::optional<Best> best;
    const auto consider = [&](const Model& m, double val_acc, const ExplorationState& st) {
        const bool feasible = baseline_val_acc - val_acc <= cfg.delta;
        const int64_t params = count_params(m);
        const bool better = !best || (feasible && !best->feasible) ||
                            (feasible == best->feasible &&
                             (params < best->params ||
                              (params == best->params && val_acc > best->val_acc)));
        if (better) best = Best{m, feasible, params, val_acc, st.ranks, st.cl, st.fits};
    };

    for (int64_t round = 0;; ++round) {
        res.state.rounds = round + 1;
        TrainConfig tc = finetune_config(cfg, cfg.finetune_epochs_stage1,
                                         0x51a6e1 + static_cast<uint64_t>(round));
        tc.freeze_layers = frozen_layers(opt_idx, res.state.cl);
        TrainResult tr = train(current, train_set, tc);
        current = std::move(tr.model);
        const double val_acc = evaluate_top1(current, val);
        {
            std::ostringstream os;
            os << "stage1 round " << round + 1 << ": val " << val_acc << " drop "
               << baseline_val_acc - val_acc << " params " << count_params(current);
            res.state.audit.push_back(os.str());
        }
        consider(current, val_acc, res.state);
        if (baseline_val_acc - val_acc <= cfg.delta) break;
        if (round + 1 >= cfg.backoff_rounds) break;

        // Raise the ranks of the worst-reconstructed quarter of the still
        // selected layers; layers at their cap revert to dense and freeze.
        std::vector<int64_t> selected;
        for (const auto& [li, fit] : res.state.fits) selected.push_back(li);
        if (selected.empty()) break;
        std::sort(selected.begin(), selected.end(), [&](int64_t a, int64_t b) {
            const double fa = res.state.fits[a], fb = res.state.fits[b];
            return fa > fb || (fa == fb && a < b);
        });
        const size_t n_raise = (selected.size() + 3) / 4;  // ceil(25%)
        for (size_t i = 0; i < n_raise; ++i) {
            const int64_t li = selected[i];
            const int64_t cap = caps[li];
            const int64_t old_r = res.state.ranks[li];
            if (old_r >= cap) {
                current = replace_layer(current, li, model.layers[static_cast<size_t>(li)]);
                res.state.ranks.erase(li);
                res.state.fits.erase(li);
                for (size_t k = 0; k < opt_idx.size(); ++k)
                    if (opt_idx[k] == li) res.state.cl.bits[k] = 0;
                res.state.audit.push_back("stage1: layer " + std::to_string(li) +
                                          " restored dense (rank cap reached)");
                continue;
            }
            const int64_t new_r =
                std::min<int64_t>(cap, static_cast<int64_t>(std::ceil(old_r * 1.5)));
            Decomposed d = decompose_at(model.layers[static_cast<size_t>(li)], new_r, cfg.als,
                                        static_cast<uint64_t>(li));
            res.state.ranks[li] = new_r;
            res.state.fits[li] = d.fit;
            current = replace_layer(current, li, std::move(d.layer));
            res.state.audit.push_back("stage1: layer " + std::to_string(li) + " rank " +
                                      std::to_string(old_r) + " -> " + std::to_string(new_r));
        }
        if (res.state.ranks.empty()) {
            // Everything reverted dense; the remaining model equals the input.
            consider(current, evaluate_top1(current, val), res.state);
            break;
        }
    }

    res.model = best->model;
    res.state.ranks = best->ranks;
    res.state.cl = best->cl;
    res.state.fits = best->fits;
    res.state.val_accuracy = best->val_acc;
    res.state.delta_met = best->feasible;
    return res;
}

}  // namespace nltm
