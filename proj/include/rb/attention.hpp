#pragma once

#include "rb/tensor.hpp"

#include <string>
#include <vector>

namespace rb {

// Nonnegative spatial attention map; negatives are clamped at construction.
struct AttentionMap {
    Map2D values;
    int source_label = -1;

    float max_value() const;
};

enum class MaskLevel { feature, image };

// Spatial {0,1} grid. Convention: 1 = keep, 0 = drop/replace.
struct BinaryMask {
    Map2D values;
    MaskLevel level = MaskLevel::feature;
};

// Per-image CAM: raw[i,j] = sum_k weights[label, k] * features[n, k, i, j],
// clamped at zero. classifier_weights is (num_classes x C) row-major.
std::vector<AttentionMap> compute_cam(const Tensor& features,
                                      const std::vector<float>& classifier_weights,
                                      int num_classes,
                                      const std::vector<int>& labels);

// Target-class drop mask: 0 where the map exceeds threshold_ratio * max, else 1.
// An all-zero map keeps everything.
BinaryMask threshold_to_tcdm(const AttentionMap& m, float threshold_ratio);

BinaryMask tcdm_to_image_mask(const BinaryMask& mask, int img_h, int img_w);

// Binary (P5) PGM, min-max scaled to 0..255; a constant map writes all zeros.
void export_heatmap(const AttentionMap& m, const std::string& path);

} // namespace rb
