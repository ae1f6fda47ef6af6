#pragma once

#include "rb/tensor.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace rb {

using Rng = std::mt19937_64;

// Deterministic stream derivation; mixes so nearby (step, index) pairs diverge.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

struct ParamRef {
    std::string name;
    std::vector<float>* values;
    std::vector<int> dims;
};

struct ConvLayer {
    Tensor weights;            // (Cout, Cin, K, K)
    std::vector<float> bias;   // (Cout)
    int stride = 1;
    int pad = 1;

    Tensor grad_weights;
    std::vector<float> grad_bias;

    Tensor input_cache;

    ConvLayer() = default;
    ConvLayer(int cin, int cout, int k, int stride, int pad, Rng& rng);

    Tensor forward(const Tensor& x, bool cache);
    Tensor backward(const Tensor& grad_out);
};

// One backbone stage: conv3x3(pad 1) -> ReLU -> maxpool 2x2 stride 2.
struct ConvBlock {
    ConvLayer conv;
    std::vector<std::uint8_t> relu_mask;
    MaxPoolResult pool_cache;
    Shape pre_pool_shape{};

    ConvBlock() = default;
    ConvBlock(int cin, int cout, Rng& rng);

    Tensor forward(const Tensor& x, bool cache);
    Tensor backward(const Tensor& grad_out);
};

struct LinearHead {
    std::vector<float> weights; // (num_classes x in_features), row-major
    std::vector<float> bias;    // (num_classes)
    int in_features = 0;
    int num_classes = 0;

    std::vector<float> grad_weights;
    std::vector<float> grad_bias;
    Tensor input_cache; // pooled (N, C, 1, 1)

    LinearHead() = default;
    LinearHead(int in_features, int num_classes, Rng& rng);

    Tensor forward(const Tensor& pooled, bool cache);
    Tensor backward(const Tensor& grad_logits);
};

// Gate/offset applied to a hook's feature map: out = f .* gate + offset.
// The gate is replayed on the gradient in backward; the offset is constant.
struct HookMod {
    Tensor gate;
    Tensor offset;
    bool has_offset = false;
};

// Three conv blocks (widths 32/64/128 by default), GAP, linear classifier.
// Hook points sit after block 2 and block 3.
class MiniCnn {
public:
    MiniCnn(int in_channels, int num_classes, std::uint64_t seed,
            std::vector<int> widths = {32, 64, 128});

    int num_classes() const { return head_.num_classes; }
    int in_channels() const { return in_channels_; }
    int feature_channels() const { return widths_.back(); }
    const std::vector<float>& classifier_weights() const { return head_.weights; }

    // Clean pass through all three blocks; caches activations when train=true.
    // Returns (block2 features, block3 features).
    std::pair<Tensor, Tensor> forward_backbone(const Tensor& x, bool train);

    // Staged forward for hook-modifying regularizers: blocks 1-2 only.
    Tensor forward_block12(const Tensor& x, bool train);

    // Re-runs block 3 on (possibly modified) block-2 features, refreshing its cache.
    Tensor forward_block3(const Tensor& f2, bool train);

    Tensor forward_head(const Tensor& block3_features, bool train);

    // Convenience full inference pass (no caching, no hooks).
    Tensor forward(const Tensor& x);

    // Gradient gates applied at the hook boundaries during backward,
    // matching the HookMods the caller applied between forward stages.
    void set_hook_gates(std::optional<Tensor> gate2, std::optional<Tensor> gate3);

    void backward(const Tensor& grad_logits);
    void zero_grads();

    std::vector<ParamRef> parameters();
    std::vector<ParamRef> gradients();

    void save_checkpoint(const std::string& path) const;
    void load_checkpoint(const std::string& path);

private:
    int in_channels_;
    std::vector<int> widths_;
    ConvBlock b1_, b2_, b3_;
    LinearHead head_;
    Shape last_f3_shape_{};
    std::optional<Tensor> gate2_, gate3_;
};

Tensor apply_hook_mod(const Tensor& f, const HookMod& mod);

struct LossResult {
    float loss = 0.0f;
    Tensor grad_logits;
};

LossResult softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

class SgdMomentum {
public:
    SgdMomentum(float momentum, float weight_decay)
        : momentum_(momentum), weight_decay_(weight_decay) {}

    // v <- momentum*v + grad + wd*param;  param <- param - lr*v
    void step(std::vector<ParamRef>& params, std::vector<ParamRef>& grads, float lr);

private:
    float momentum_;
    float weight_decay_;
    std::vector<std::vector<float>> velocity_;
};

float cosine_lr(int step, int total_steps, float lr0);

struct TrainConfig {
    float lr0 = 0.01f;
    float momentum = 0.9f;
    float weight_decay = 4e-5f;
    int epochs = 20;
    int batch_size = 64;
    std::uint64_t seed = 1;
};

struct RunRecord {
    int epoch = 0;
    float train_loss = 0.0f;
    float train_top1 = 0.0f; // percent
    float test_top1 = 0.0f;  // percent
    float lr = 0.0f;
};

} // namespace rb
