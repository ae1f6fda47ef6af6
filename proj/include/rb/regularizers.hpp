#pragma once

#include "rb/attention.hpp"
#include "rb/maskgen.hpp"
#include "rb/nn.hpp"
#include "rb/tensor.hpp"

#include <cstdint>
#include <vector>

namespace rb {

enum class Schedule { all_time, alternate };

struct ReplaceBlockConfig {
    float keep_prob = 0.9f;
    int block_size = 3;
    float threshold_ratio = 0.20f;
    SamplingMode sampling_mode = SamplingMode::rr_sm;
    Schedule schedule = Schedule::all_time;
    bool shuffle = true;
};

enum class RegKind { none, replace_block, drop_block, spatial_dropout, dropout, cutout };

struct RegularizerConfig {
    RegKind kind = RegKind::none;
    ReplaceBlockConfig replace_block;
    float keep_prob = 0.9f; // drop_block / spatial_dropout / dropout
    int block_size = 3;     // drop_block
    int cutout_size = 8;    // cutout, pixels on the input image
};

// Per image: one uniform random permutation of the h*w spatial positions,
// applied identically to every channel.
Tensor spatial_shuffle(const Tensor& f, Rng& rng);

// out = f_orig .* mask + f_bg .* (1 - mask); mask broadcast over N and C.
Tensor replace(const Tensor& f_orig, const Tensor& f_bg, const BinaryMask& mask);

// Per-image masks, one per batch element.
Tensor replace_per_image(const Tensor& f_orig, const Tensor& f_bg,
                         const std::vector<BinaryMask>& masks);

struct BackgroundFeatures {
    Tensor hook2; // block-2 output of the masked image
    Tensor hook3; // block-3 output of the masked image
};

// Forward of the masked input through the backbone, no gradient caching,
// optionally spatially shuffled. Uses the model's live weights.
BackgroundFeatures background_features(MiniCnn& model, const Tensor& x,
                                       const std::vector<BinaryMask>& image_masks,
                                       bool shuffle, Rng& shuffle_rng);

struct ReplaceBlockResult {
    Tensor logits;
    bool applied = false;
    // Diagnostics for tests and heatmap export.
    std::vector<AttentionMap> attention;
    std::vector<BinaryMask> image_masks;
    std::vector<BinaryMask> feature_masks_hook2;
    std::vector<BinaryMask> feature_masks_hook3;
};

// Full training-time pipeline: clean backbone pass, CAM, TC-DM, background
// pass, structured mask sampling, replacement at both hooks, head forward.
// Leaves the model's caches and hook gates ready for backward().
// Under Schedule::alternate, odd steps run the plain forward.
ReplaceBlockResult replace_block_apply(MiniCnn& model, const Tensor& x,
                                       const std::vector<int>& labels,
                                       const ReplaceBlockConfig& config,
                                       int step, std::uint64_t run_seed);

// Deterministic replacement forward with externally fixed masks and background
// features; used to check gradients against finite differences.
Tensor forward_with_replacement(MiniCnn& model, const Tensor& x,
                                const std::vector<BinaryMask>& masks_hook2,
                                const std::vector<BinaryMask>& masks_hook3,
                                const BackgroundFeatures& bg, bool train);

// DropBlock baseline: structured uniform drop, kept cells rescaled so the
// expected activation sum is preserved.
Tensor drop_block_apply(const Tensor& f, float keep_prob, int block_size, Rng& rng);

Tensor spatial_dropout_apply(const Tensor& f, float keep_prob, Rng& rng);
Tensor dropout_apply(const Tensor& f, float keep_prob, Rng& rng);

// Cutout baseline: one square region of each input image zeroed at a uniform
// random center, clipped at the borders.
Tensor cutout_apply(const Tensor& x_image, int size, Rng& rng);

// Gate-producing variants used by the training loop so backward can replay
// the same multiplicative factor at the hook.
HookMod drop_block_mod(Shape s, float keep_prob, int block_size, Rng& rng);
HookMod spatial_dropout_mod(Shape s, float keep_prob, Rng& rng);
HookMod dropout_mod(Shape s, float keep_prob, Rng& rng);

} // namespace rb
