#include "rb/nn.hpp"

#include <cblas.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace rb {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
    // splitmix64 over the combined stream id
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (a + 1) + 0xbf58476d1ce4e5b9ULL * (b + 1);
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z;
}

namespace {

void he_init(std::vector<float>& v, int fan_in, Rng& rng) {
    std::normal_distribution<float> d(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
    for (float& x : v) x = d(rng);
}

} // namespace

ConvLayer::ConvLayer(int cin, int cout, int k, int stride_, int pad_, Rng& rng)
    : weights({cout, cin, k, k}),
      bias(cout, 0.0f),
      stride(stride_),
      pad(pad_),
      grad_weights({cout, cin, k, k}),
      grad_bias(cout, 0.0f) {
    he_init(weights.vec(), cin * k * k, rng);
}

Tensor ConvLayer::forward(const Tensor& x, bool cache) {
    if (cache) input_cache = x;
    return conv2d_forward(x, weights, bias, stride, pad);
}

Tensor ConvLayer::backward(const Tensor& grad_out) {
    Conv2dGrads g = conv2d_backward(grad_out, input_cache, weights, stride, pad);
    float* gw = grad_weights.data();
    const float* sw = g.grad_weights.data();
    for (std::size_t i = 0; i < grad_weights.size(); ++i) gw[i] += sw[i];
    for (std::size_t i = 0; i < grad_bias.size(); ++i) grad_bias[i] += g.grad_bias[i];
    return std::move(g.grad_x);
}

ConvBlock::ConvBlock(int cin, int cout, Rng& rng) : conv(cin, cout, 3, 1, 1, rng) {}

Tensor ConvBlock::forward(const Tensor& x, bool cache) {
    Tensor a = conv.forward(x, cache);
    if (cache) {
        relu_mask.resize(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) relu_mask[i] = a.data()[i] > 0.0f;
    }
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a.data()[i] < 0.0f) a.data()[i] = 0.0f;
    pre_pool_shape = a.shape();
    MaxPoolResult p = maxpool2d(a, 2, 2);
    if (cache) pool_cache = p;
    return std::move(p.out);
}

Tensor ConvBlock::backward(const Tensor& grad_out) {
    Tensor g = maxpool2d_backward(grad_out, pool_cache, pre_pool_shape);
    for (std::size_t i = 0; i < g.size(); ++i)
        if (!relu_mask[i]) g.data()[i] = 0.0f;
    return conv.backward(g);
}

LinearHead::LinearHead(int in_features_, int num_classes_, Rng& rng)
    : weights(static_cast<std::size_t>(num_classes_) * in_features_),
      bias(num_classes_, 0.0f),
      in_features(in_features_),
      num_classes(num_classes_),
      grad_weights(weights.size(), 0.0f),
      grad_bias(num_classes_, 0.0f) {
    he_init(weights, in_features_, rng);
}

Tensor LinearHead::forward(const Tensor& pooled, bool cache) {
    const Shape& s = pooled.shape();
    if (s.c != in_features || s.h != 1 || s.w != 1)
        throw std::invalid_argument("LinearHead: expected (N," + std::to_string(in_features) +
                                    ",1,1), got " + s.str());
    if (cache) input_cache = pooled;
    Tensor logits({s.n, num_classes, 1, 1});
    for (int n = 0; n < s.n; ++n) {
        const float* x = pooled.data() + static_cast<std::size_t>(n) * in_features;
        for (int k = 0; k < num_classes; ++k) {
            const float* w = weights.data() + static_cast<std::size_t>(k) * in_features;
            float acc = bias[k];
            for (int c = 0; c < in_features; ++c) acc += w[c] * x[c];
            logits.at(n, k, 0, 0) = acc;
        }
    }
    return logits;
}

Tensor LinearHead::backward(const Tensor& grad_logits) {
    const Shape& s = grad_logits.shape();
    const int n_batch = s.n;
    Tensor gx({n_batch, in_features, 1, 1});
    for (int n = 0; n < n_batch; ++n) {
        const float* x = input_cache.data() + static_cast<std::size_t>(n) * in_features;
        float* gxp = gx.data() + static_cast<std::size_t>(n) * in_features;
        for (int k = 0; k < num_classes; ++k) {
            const float g = grad_logits.at(n, k, 0, 0);
            const float* w = weights.data() + static_cast<std::size_t>(k) * in_features;
            float* gw = grad_weights.data() + static_cast<std::size_t>(k) * in_features;
            grad_bias[k] += g;
            for (int c = 0; c < in_features; ++c) {
                gw[c] += g * x[c];
                gxp[c] += g * w[c];
            }
        }
    }
    return gx;
}

MiniCnn::MiniCnn(int in_channels, int num_classes, std::uint64_t seed, std::vector<int> widths)
    : in_channels_(in_channels), widths_(std::move(widths)) {
    if (widths_.size() != 3)
        throw std::invalid_argument("MiniCnn: exactly three block widths expected");
    Rng rng(derive_seed(seed, 0x1d17));
    b1_ = ConvBlock(in_channels, widths_[0], rng);
    b2_ = ConvBlock(widths_[0], widths_[1], rng);
    b3_ = ConvBlock(widths_[1], widths_[2], rng);
    head_ = LinearHead(widths_[2], num_classes, rng);
}

std::pair<Tensor, Tensor> MiniCnn::forward_backbone(const Tensor& x, bool train) {
    if (x.shape().c != in_channels_)
        throw std::invalid_argument("MiniCnn: input has " + std::to_string(x.shape().c) +
                                    " channels, model expects " + std::to_string(in_channels_));
    Tensor f1 = b1_.forward(x, train);
    Tensor f2 = b2_.forward(f1, train);
    Tensor f3 = b3_.forward(f2, train);
    return {std::move(f2), std::move(f3)};
}

Tensor MiniCnn::forward_block12(const Tensor& x, bool train) {
    if (x.shape().c != in_channels_)
        throw std::invalid_argument("MiniCnn: input has " + std::to_string(x.shape().c) +
                                    " channels, model expects " + std::to_string(in_channels_));
    Tensor f1 = b1_.forward(x, train);
    return b2_.forward(f1, train);
}

Tensor MiniCnn::forward_block3(const Tensor& f2, bool train) {
    return b3_.forward(f2, train);
}

Tensor MiniCnn::forward_head(const Tensor& f3, bool train) {
    if (f3.shape().c != widths_[2])
        throw std::invalid_argument("MiniCnn: head expects " + std::to_string(widths_[2]) +
                                    " channels, got " + f3.shape().str());
    last_f3_shape_ = f3.shape();
    Tensor pooled = global_avg_pool(f3);
    return head_.forward(pooled, train);
}

Tensor MiniCnn::forward(const Tensor& x) {
    auto [f2, f3] = forward_backbone(x, false);
    return forward_head(f3, false);
}

void MiniCnn::set_hook_gates(std::optional<Tensor> gate2, std::optional<Tensor> gate3) {
    gate2_ = std::move(gate2);
    gate3_ = std::move(gate3);
}

void MiniCnn::backward(const Tensor& grad_logits) {
    Tensor g_pooled = head_.backward(grad_logits);
    Tensor g_f3 = global_avg_pool_backward(g_pooled, last_f3_shape_);
    if (gate3_) g_f3 = elementwise_mul(g_f3, *gate3_);
    Tensor g_f2 = b3_.backward(g_f3);
    if (gate2_) g_f2 = elementwise_mul(g_f2, *gate2_);
    Tensor g_f1 = b2_.backward(g_f2);
    b1_.backward(g_f1);
}

void MiniCnn::zero_grads() {
    auto zero = [](std::vector<float>& v) { std::fill(v.begin(), v.end(), 0.0f); };
    for (ConvBlock* b : {&b1_, &b2_, &b3_}) {
        zero(b->conv.grad_weights.vec());
        zero(b->conv.grad_bias);
    }
    zero(head_.grad_weights);
    zero(head_.grad_bias);
    gate2_.reset();
    gate3_.reset();
}

std::vector<ParamRef> MiniCnn::parameters() {
    std::vector<ParamRef> out;
    auto conv_dims = [](const Tensor& w) {
        const Shape& s = w.shape();
        return std::vector<int>{s.n, s.c, s.h, s.w};
    };
    ConvBlock* blocks[] = {&b1_, &b2_, &b3_};
    for (int i = 0; i < 3; ++i) {
        const std::string p = "block" + std::to_string(i + 1);
        out.push_back({p + ".conv.weight", &blocks[i]->conv.weights.vec(),
                       conv_dims(blocks[i]->conv.weights)});
        out.push_back({p + ".conv.bias", &blocks[i]->conv.bias,
                       {static_cast<int>(blocks[i]->conv.bias.size())}});
    }
    out.push_back({"head.weight", &head_.weights, {head_.num_classes, head_.in_features}});
    out.push_back({"head.bias", &head_.bias, {head_.num_classes}});
    return out;
}

std::vector<ParamRef> MiniCnn::gradients() {
    std::vector<ParamRef> out;
    ConvBlock* blocks[] = {&b1_, &b2_, &b3_};
    for (int i = 0; i < 3; ++i) {
        const std::string p = "block" + std::to_string(i + 1);
        out.push_back({p + ".conv.weight", &blocks[i]->conv.grad_weights.vec(), {}});
        out.push_back({p + ".conv.bias", &blocks[i]->conv.grad_bias, {}});
    }
    out.push_back({"head.weight", &head_.grad_weights, {}});
    out.push_back({"head.bias", &head_.grad_bias, {}});
    return out;
}

void MiniCnn::save_checkpoint(const std::string& path) const {
    nlohmann::json header = nlohmann::json::array();
    auto* self = const_cast<MiniCnn*>(this);
    for (const ParamRef& p : self->parameters())
        header.push_back({{"name", p.name}, {"shape", p.dims}});
    const std::string hs = header.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    const std::uint64_t len = hs.size();
    f.write(reinterpret_cast<const char*>(&len), sizeof(len));
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const ParamRef& p : self->parameters())
        f.write(reinterpret_cast<const char*>(p.values->data()),
                static_cast<std::streamsize>(p.values->size() * sizeof(float)));
    if (!f) throw std::runtime_error("checkpoint write failed: " + path);
}

void MiniCnn::load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
    std::uint64_t len = 0;
    f.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string hs(len, '\0');
    f.read(hs.data(), static_cast<std::streamsize>(len));
    nlohmann::json header = nlohmann::json::parse(hs);

    auto params = parameters();
    if (header.size() != params.size())
        throw std::runtime_error("checkpoint parameter count mismatch: " + path);
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (header[i].at("name").get<std::string>() != params[i].name)
            throw std::runtime_error("checkpoint parameter name mismatch at index " +
                                     std::to_string(i));
        std::size_t count = 1;
        for (int d : header[i].at("shape").get<std::vector<int>>()) count *= d;
        if (count != params[i].values->size())
            throw std::runtime_error("checkpoint shape mismatch for " + params[i].name);
        f.read(reinterpret_cast<char*>(params[i].values->data()),
               static_cast<std::streamsize>(count * sizeof(float)));
    }
    if (!f) throw std::runtime_error("checkpoint truncated: " + path);
}

Tensor apply_hook_mod(const Tensor& f, const HookMod& mod) {
    Tensor out = elementwise_mul(f, mod.gate);
    if (mod.has_offset) {
        if (!(mod.offset.shape() == out.shape()))
            throw std::invalid_argument("apply_hook_mod: offset shape mismatch");
        for (std::size_t i = 0; i < out.size(); ++i)
            out.data()[i] += mod.offset.data()[i];
    }
    return out;
}

LossResult softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    const Shape& s = logits.shape();
    const int n_batch = s.n;
    const int k = s.c;
    if (static_cast<int>(labels.size()) != n_batch)
        throw std::invalid_argument("softmax_cross_entropy: label count mismatch");
    for (int lab : labels)
        if (lab < 0 || lab >= k)
            throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(lab) +
                                        " out of range [0," + std::to_string(k) + ")");
    LossResult r;
    r.grad_logits = Tensor(s);
    double total = 0.0;
    for (int n = 0; n < n_batch; ++n) {
        const float* z = logits.data() + static_cast<std::size_t>(n) * k;
        float* g = r.grad_logits.data() + static_cast<std::size_t>(n) * k;
        float zmax = z[0];
        for (int i = 1; i < k; ++i) zmax = std::max(zmax, z[i]);
        double denom = 0.0;
        for (int i = 0; i < k; ++i) denom += std::exp(static_cast<double>(z[i] - zmax));
        const double logden = std::log(denom);
        total += logden - static_cast<double>(z[labels[n]] - zmax);
        for (int i = 0; i < k; ++i) {
            const double p = std::exp(static_cast<double>(z[i] - zmax)) / denom;
            g[i] = static_cast<float>((p - (i == labels[n] ? 1.0 : 0.0)) / n_batch);
        }
    }
    r.loss = static_cast<float>(total / n_batch);
    return r;
}

void SgdMomentum::step(std::vector<ParamRef>& params, std::vector<ParamRef>& grads, float lr) {
    if (params.size() != grads.size())
        throw std::invalid_argument("SgdMomentum: params/grads count mismatch");
    if (velocity_.empty()) {
        velocity_.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i)
            velocity_[i].assign(params[i].values->size(), 0.0f);
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        std::vector<float>& p = *params[i].values;
        const std::vector<float>& g = *grads[i].values;
        std::vector<float>& v = velocity_[i];
        if (p.size() != g.size() || p.size() != v.size())
            throw std::invalid_argument("SgdMomentum: size mismatch for " + params[i].name);
        for (std::size_t j = 0; j < p.size(); ++j) {
            v[j] = momentum_ * v[j] + g[j] + weight_decay_ * p[j];
            p[j] -= lr * v[j];
        }
    }
}

float cosine_lr(int step, int total_steps, float lr0) {
    if (total_steps < 1)
        throw std::invalid_argument("cosine_lr: total_steps must be >= 1");
    if (step < 0 || step > total_steps)
        throw std::invalid_argument("cosine_lr: step " + std::to_string(step) +
                                    " outside [0," + std::to_string(total_steps) + "]");
    return 0.5f * lr0 * (1.0f + std::cos(M_PI * static_cast<double>(step) / total_steps));
}

} // namespace rb
