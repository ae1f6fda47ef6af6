#include "rb/regularizers.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace rb {

namespace {

Tensor mask_to_tensor(const BinaryMask& m) {
    Tensor t({1, 1, m.values.h, m.values.w});
    std::copy(m.values.v.begin(), m.values.v.end(), t.vec().begin());
    return t;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!(a.shape() == b.shape()))
        throw std::invalid_argument(std::string(what) + ": shapes differ, " +
                                    a.shape().str() + " vs " + b.shape().str());
}

// Broadcasts per-image spatial masks into a full (N,C,H,W) gate tensor.
Tensor masks_to_gate(Shape s, const std::vector<BinaryMask>& masks) {
    if (static_cast<int>(masks.size()) != s.n)
        throw std::invalid_argument("masks_to_gate: one mask per image required");
    Tensor gate(s);
    const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
    for (int n = 0; n < s.n; ++n) {
        const Map2D& m = masks[n].values;
        if (m.h != s.h || m.w != s.w)
            throw std::invalid_argument("masks_to_gate: mask resolution mismatch");
        for (int c = 0; c < s.c; ++c)
            std::copy(m.v.begin(), m.v.end(),
                      gate.vec().begin() + (static_cast<std::size_t>(n) * s.c + c) * plane);
    }
    return gate;
}

} // namespace

Tensor spatial_shuffle(const Tensor& f, Rng& rng) {
    const Shape& s = f.shape();
    Tensor out(s);
    const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
    std::vector<std::size_t> perm(plane);
    for (int n = 0; n < s.n; ++n) {
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        for (int c = 0; c < s.c; ++c) {
            const float* src = f.data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
            float* dst = out.data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) dst[i] = src[perm[i]];
        }
    }
    return out;
}

Tensor replace(const Tensor& f_orig, const Tensor& f_bg, const BinaryMask& mask) {
    check_same_shape(f_orig, f_bg, "replace");
    const Shape& s = f_orig.shape();
    if (mask.values.h != s.h || mask.values.w != s.w)
        throw std::invalid_argument("replace: mask is " + std::to_string(mask.values.h) + "x" +
                                    std::to_string(mask.values.w) + ", features are " + s.str());
    Tensor m = mask_to_tensor(mask);
    Tensor out = elementwise_mul(f_orig, m);
    const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * plane;
            for (std::size_t i = 0; i < plane; ++i)
                out.vec()[base + i] += f_bg.vec()[base + i] * (1.0f - m.vec()[i]);
        }
    return out;
}

Tensor replace_per_image(const Tensor& f_orig, const Tensor& f_bg,
                         const std::vector<BinaryMask>& masks) {
    check_same_shape(f_orig, f_bg, "replace_per_image");
    const Shape& s = f_orig.shape();
    Tensor gate = masks_to_gate(s, masks);
    Tensor out(s);
    for (std::size_t i = 0; i < out.size(); ++i)
        out.vec()[i] = f_orig.vec()[i] * gate.vec()[i] +
                       f_bg.vec()[i] * (1.0f - gate.vec()[i]);
    return out;
}

BackgroundFeatures background_features(MiniCnn& model, const Tensor& x,
                                       const std::vector<BinaryMask>& image_masks,
                                       bool shuffle, Rng& shuffle_rng) {
    const Shape& s = x.shape();
    Tensor masked(s);
    const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
    for (int n = 0; n < s.n; ++n) {
        const Map2D& m = image_masks[n].values;
        if (m.h != s.h || m.w != s.w)
            throw std::invalid_argument("background_features: image mask resolution mismatch");
        for (int c = 0; c < s.c; ++c) {
            const std::size_t base = (static_cast<std::size_t>(n) * s.c + c) * plane;
            for (std::size_t i = 0; i < plane; ++i)
                masked.vec()[base + i] = x.vec()[base + i] * m.v[i];
        }
    }
    auto [f2, f3] = model.forward_backbone(masked, /*train=*/false);
    BackgroundFeatures bg{std::move(f2), std::move(f3)};
    if (shuffle) {
        bg.hook2 = spatial_shuffle(bg.hook2, shuffle_rng);
        bg.hook3 = spatial_shuffle(bg.hook3, shuffle_rng);
    }
    return bg;
}

Tensor forward_with_replacement(MiniCnn& model, const Tensor& x,
                                const std::vector<BinaryMask>& masks_hook2,
                                const std::vector<BinaryMask>& masks_hook3,
                                const BackgroundFeatures& bg, bool train) {
    auto [f2, f3] = model.forward_backbone(x, train);
    Tensor f2r = replace_per_image(f2, bg.hook2, masks_hook2);
    Tensor f3p = model.forward_block3(f2r, train);
    Tensor f3r = replace_per_image(f3p, bg.hook3, masks_hook3);
    if (train)
        model.set_hook_gates(masks_to_gate(f2.shape(), masks_hook2),
                             masks_to_gate(f3p.shape(), masks_hook3));
    return model.forward_head(f3r, train);
}

ReplaceBlockResult replace_block_apply(MiniCnn& model, const Tensor& x,
                                       const std::vector<int>& labels,
                                       const ReplaceBlockConfig& config,
                                       int step, std::uint64_t run_seed) {
    ReplaceBlockResult r;
    if (config.schedule == Schedule::alternate && (step % 2) == 1) {
        auto [f2, f3] = model.forward_backbone(x, true);
        r.logits = model.forward_head(f3, true);
        return r;
    }
    r.applied = true;

    const int n_batch = x.shape().n;

    // Clean pass; these caches back the eventual backward through blocks 1-2.
    auto [f2, f3] = model.forward_backbone(x, true);

    // Attention and masks live outside the gradient graph.
    r.attention = compute_cam(f3, model.classifier_weights(), model.num_classes(), labels);

    r.image_masks.reserve(n_batch);
    for (const AttentionMap& a : r.attention) {
        BinaryMask tcdm = threshold_to_tcdm(a, config.threshold_ratio);
        r.image_masks.push_back(tcdm_to_image_mask(tcdm, x.shape().h, x.shape().w));
    }

    Rng shuffle_rng(derive_seed(run_seed, 0x5f1e, static_cast<std::uint64_t>(step)));
    BackgroundFeatures bg =
        background_features(model, x, r.image_masks, config.shuffle, shuffle_rng);

    const Shape s2 = f2.shape();
    const Shape s3 = f3.shape();
    for (int n = 0; n < n_batch; ++n) {
        Rng img_rng(derive_seed(run_seed, static_cast<std::uint64_t>(step),
                                static_cast<std::uint64_t>(n)));
        AttentionMap a2{upsample_nearest(r.attention[n].values, s2.h, s2.w),
                        r.attention[n].source_label};
        AttentionMap a3{upsample_nearest(r.attention[n].values, s3.h, s3.w),
                        r.attention[n].source_label};
        r.feature_masks_hook2.push_back(sample_feature_mask(
            a2, config.keep_prob, config.block_size, config.sampling_mode, img_rng));
        r.feature_masks_hook3.push_back(sample_feature_mask(
            a3, config.keep_prob, config.block_size, config.sampling_mode, img_rng));
    }

    r.logits = forward_with_replacement(model, x, r.feature_masks_hook2,
                                        r.feature_masks_hook3, bg, true);
    return r;
}

HookMod drop_block_mod(Shape s, float keep_prob, int block_size, Rng& rng) {
    HookMod mod;
    mod.gate = Tensor(s);
    const float gamma = keep_prob < 1.0f ? calibrate_gamma(keep_prob, block_size, s.h, s.w) : 0.0f;
    const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
    for (int n = 0; n < s.n; ++n) {
        SeedMap seeds = sample_seeds_uniform(std::min(gamma, 1.0f), s.h, s.w, block_size, rng);
        BinaryMask mask = expand_seeds(seeds, block_size);
        float ones = 0.0f;
        for (float v : mask.values.v) ones += v;
        const float scale = ones > 0.0f ? static_cast<float>(plane) / ones : 0.0f;
        for (int c = 0; c < s.c; ++c) {
            float* g = mod.gate.data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) g[i] = mask.values.v[i] * scale;
        }
    }
    return mod;
}

HookMod spatial_dropout_mod(Shape s, float keep_prob, Rng& rng) {
    if (keep_prob <= 0.0f || keep_prob > 1.0f)
        throw std::invalid_argument("spatial_dropout: keep_prob must be in (0,1]");
    HookMod mod;
    mod.gate = Tensor(s);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            const float g = (keep_prob == 1.0f || u(rng) < keep_prob) ? 1.0f / keep_prob : 0.0f;
            float* p = mod.gate.data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
            std::fill(p, p + plane, g);
        }
    return mod;
}

HookMod dropout_mod(Shape s, float keep_prob, Rng& rng) {
    if (keep_prob <= 0.0f || keep_prob > 1.0f)
        throw std::invalid_argument("dropout: keep_prob must be in (0,1]");
    HookMod mod;
    mod.gate = Tensor(s);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t i = 0; i < mod.gate.size(); ++i)
        mod.gate.vec()[i] =
            (keep_prob == 1.0f || u(rng) < keep_prob) ? 1.0f / keep_prob : 0.0f;
    return mod;
}

Tensor drop_block_apply(const Tensor& f, float keep_prob, int block_size, Rng& rng) {
    return elementwise_mul(f, drop_block_mod(f.shape(), keep_prob, block_size, rng).gate);
}

Tensor spatial_dropout_apply(const Tensor& f, float keep_prob, Rng& rng) {
    return elementwise_mul(f, spatial_dropout_mod(f.shape(), keep_prob, rng).gate);
}

Tensor dropout_apply(const Tensor& f, float keep_prob, Rng& rng) {
    return elementwise_mul(f, dropout_mod(f.shape(), keep_prob, rng).gate);
}

Tensor cutout_apply(const Tensor& x_image, int size, Rng& rng) {
    if (size < 1) throw std::invalid_argument("cutout: size must be positive");
    const Shape& s = x_image.shape();
    Tensor out = x_image;
    std::uniform_int_distribution<int> ci(0, s.h - 1);
    std::uniform_int_distribution<int> cj(0, s.w - 1);
    const int r = size / 2;
    for (int n = 0; n < s.n; ++n) {
        const int yi = ci(rng), xj = cj(rng);
        const int i0 = std::max(0, yi - r), i1 = std::min(s.h, yi - r + size);
        const int j0 = std::max(0, xj - r), j1 = std::min(s.w, xj - r + size);
        for (int c = 0; c < s.c; ++c)
            for (int i = i0; i < i1; ++i)
                for (int j = j0; j < j1; ++j)
                    out.at(n, c, i, j) = 0.0f;
    }
    return out;
}

} // namespace rb
