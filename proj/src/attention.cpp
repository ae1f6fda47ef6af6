#include "rb/attention.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

namespace rb {

float AttentionMap::max_value() const {
    float m = 0.0f;
    for (float x : values.v) m = std::max(m, x);
    return m;
}

std::vector<AttentionMap> compute_cam(const Tensor& features,
                                      const std::vector<float>& classifier_weights,
                                      int num_classes,
                                      const std::vector<int>& labels) {
    const Shape& s = features.shape();
    if (classifier_weights.size() != static_cast<std::size_t>(num_classes) * s.c)
        throw std::invalid_argument("compute_cam: classifier has " +
                                    std::to_string(classifier_weights.size() / num_classes) +
                                    " columns, features have " + std::to_string(s.c) +
                                    " channels");
    if (static_cast<int>(labels.size()) != s.n)
        throw std::invalid_argument("compute_cam: one label per image required");

    std::vector<AttentionMap> out;
    out.reserve(s.n);
    const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
    for (int n = 0; n < s.n; ++n) {
        const int label = labels[n];
        if (label < 0 || label >= num_classes)
            throw std::invalid_argument("compute_cam: label " + std::to_string(label) +
                                        " out of range");
        AttentionMap m;
        m.source_label = label;
        m.values = Map2D(s.h, s.w);
        const float* w = classifier_weights.data() + static_cast<std::size_t>(label) * s.c;
        for (int c = 0; c < s.c; ++c) {
            const float* f = features.data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
            const float wc = w[c];
            for (std::size_t i = 0; i < plane; ++i) m.values.v[i] += wc * f[i];
        }
        for (float& v : m.values.v) v = std::max(v, 0.0f);
        out.push_back(std::move(m));
    }
    return out;
}

BinaryMask threshold_to_tcdm(const AttentionMap& m, float threshold_ratio) {
    if (threshold_ratio <= 0.0f || threshold_ratio >= 1.0f)
        throw std::invalid_argument("threshold_to_tcdm: ratio must be in (0,1)");
    BinaryMask out;
    out.level = MaskLevel::feature;
    out.values = Map2D(m.values.h, m.values.w, 1.0f);
    const float mx = m.max_value();
    if (mx <= 0.0f) return out; // all-zero attention: keep everything
    const float thr = threshold_ratio * mx;
    for (std::size_t i = 0; i < m.values.v.size(); ++i)
        out.values.v[i] = m.values.v[i] > thr ? 0.0f : 1.0f;
    return out;
}

BinaryMask tcdm_to_image_mask(const BinaryMask& mask, int img_h, int img_w) {
    BinaryMask out;
    out.level = MaskLevel::image;
    out.values = upsample_nearest(mask.values, img_h, img_w);
    return out;
}

void export_heatmap(const AttentionMap& m, const std::string& path) {
    const Map2D& v = m.values;
    if (v.h < 1 || v.w < 1)
        throw std::invalid_argument("export_heatmap: empty map");
    float lo = v.v[0], hi = v.v[0];
    for (float x : v.v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("export_heatmap: cannot write " + path);
    f << "P5\n" << v.w << " " << v.h << "\n255\n";
    const float range = hi - lo;
    for (float x : v.v) {
        const int g = range > 0.0f ? static_cast<int>((x - lo) / range * 255.0f + 0.5f) : 0;
        f.put(static_cast<char>(std::clamp(g, 0, 255)));
    }
    if (!f) throw std::runtime_error("export_heatmap: write failed for " + path);
}

} // namespace rb
