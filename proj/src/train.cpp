#include "rb/train.hpp"

#include <stdexcept>

namespace rb {

Tensor training_forward(MiniCnn& model, const Tensor& x, const std::vector<int>& labels,
                        const RegularizerConfig& reg, int step, std::uint64_t run_seed) {
    switch (reg.kind) {
        case RegKind::none: {
            auto [f2, f3] = model.forward_backbone(x, true);
            return model.forward_head(f3, true);
        }
        case RegKind::replace_block:
            return replace_block_apply(model, x, labels, reg.replace_block, step, run_seed)
                .logits;
        case RegKind::cutout: {
            Rng rng(derive_seed(run_seed, 0xc070, static_cast<std::uint64_t>(step)));
            Tensor xc = cutout_apply(x, reg.cutout_size, rng);
            auto [f2, f3] = model.forward_backbone(xc, true);
            return model.forward_head(f3, true);
        }
        case RegKind::drop_block:
        case RegKind::spatial_dropout:
        case RegKind::dropout: {
            // Applied at the same two hook points as ReplaceBlock.
            Rng rng(derive_seed(run_seed, 0xd409, static_cast<std::uint64_t>(step)));
            Tensor f2 = model.forward_block12(x, true);
            auto make_mod = [&](Shape s) {
                if (reg.kind == RegKind::drop_block)
                    return drop_block_mod(s, reg.keep_prob, reg.block_size, rng);
                if (reg.kind == RegKind::spatial_dropout)
                    return spatial_dropout_mod(s, reg.keep_prob, rng);
                return dropout_mod(s, reg.keep_prob, rng);
            };
            HookMod m2 = make_mod(f2.shape());
            Tensor f2g = apply_hook_mod(f2, m2);
            Tensor f3 = model.forward_block3(f2g, true);
            HookMod m3 = make_mod(f3.shape());
            Tensor f3g = apply_hook_mod(f3, m3);
            model.set_hook_gates(std::move(m2.gate), std::move(m3.gate));
            return model.forward_head(f3g, true);
        }
    }
    throw std::invalid_argument("training_forward: unknown regularizer kind");
}

float evaluate_top1(MiniCnn& model, const Dataset& data, const NormStats* stats,
                    int batch_size) {
    if (data.samples.empty()) throw std::invalid_argument("evaluate_top1: empty dataset");
    std::size_t correct = 0;
    std::size_t cursor = 0;
    while (cursor < data.samples.size()) {
        const std::size_t end =
            std::min(cursor + static_cast<std::size_t>(batch_size), data.samples.size());
        std::vector<std::size_t> idx(end - cursor);
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = cursor + i;
        Batch b = make_batch(data, idx, false, stats, 0, 0);
        Tensor logits = model.forward(b.x);
        const int k = logits.shape().c;
        for (int n = 0; n < logits.shape().n; ++n) {
            const float* z = logits.data() + static_cast<std::size_t>(n) * k;
            int best = 0;
            for (int i = 1; i < k; ++i)
                if (z[i] > z[best]) best = i;
            if (best == b.labels[n]) ++correct;
        }
        cursor = end;
    }
    return 100.0f * static_cast<float>(correct) / data.samples.size();
}

RunRecord train_epoch(MiniCnn& model, const Dataset& train, const Dataset& test,
                      SgdMomentum& opt, const TrainConfig& cfg,
                      const RegularizerConfig& reg, const NormStats* stats,
                      int epoch, TrainState& state, bool eval_test) {
    if (train.samples.empty()) throw std::invalid_argument("train_epoch: empty dataset");

    BatchIterator it(train.samples.size(), cfg.batch_size, cfg.seed, epoch);
    double loss_sum = 0.0;
    std::size_t seen = 0, correct = 0;
    float last_lr = 0.0f;

    auto params = model.parameters();
    auto grads = model.gradients();

    for (std::vector<std::size_t> idx = it.next(); !idx.empty(); idx = it.next()) {
        Batch b = make_batch(train, idx, true, stats, cfg.seed, epoch);
        const float lr = cosine_lr(state.global_step, state.total_steps, cfg.lr0);
        last_lr = lr;

        model.zero_grads();
        Tensor logits = training_forward(model, b.x, b.labels, reg,
                                         state.global_step, cfg.seed);
        LossResult lr_res = softmax_cross_entropy(logits, b.labels);
        model.backward(lr_res.grad_logits);
        opt.step(params, grads, lr);

        loss_sum += static_cast<double>(lr_res.loss) * idx.size();
        const int k = logits.shape().c;
        for (int n = 0; n < logits.shape().n; ++n) {
            const float* z = logits.data() + static_cast<std::size_t>(n) * k;
            int best = 0;
            for (int i = 1; i < k; ++i)
                if (z[i] > z[best]) best = i;
            if (best == b.labels[n]) ++correct;
        }
        seen += idx.size();
        ++state.global_step;
    }

    RunRecord rec;
    rec.epoch = epoch;
    rec.train_loss = static_cast<float>(loss_sum / seen);
    rec.train_top1 = 100.0f * static_cast<float>(correct) / seen;
    rec.test_top1 = eval_test && !test.samples.empty()
                        ? evaluate_top1(model, test, stats, cfg.batch_size)
                        : 0.0f;
    rec.lr = last_lr;
    return rec;
}

} // namespace rb
