#pragma once

#include "rb/attention.hpp"
#include "rb/nn.hpp"
#include "rb/tensor.hpp"

namespace rb {

enum class SamplingMode { rr_sm, uniform };

// {0,1} grid of block-seed positions (1 = seed). Seeds stay at least
// floor(block_size/2) away from every border.
struct SeedMap {
    Map2D values;
};

// Seed probability so that expanded blocks drop about (1 - keep_prob) of the map.
float calibrate_gamma(float keep_prob, int block_size, int h, int w);

// Attention-weighted seeding: p_i = clamp(gamma * m_i * V / sum_valid(m), 0, 1).
// All-zero attention yields no seeds.
SeedMap sample_seeds_rrsm(const AttentionMap& m, float gamma, int block_size, Rng& rng);

SeedMap sample_seeds_uniform(float gamma, int h, int w, int block_size, Rng& rng);

// Zero out every position within Chebyshev distance floor(block_size/2) of a seed.
BinaryMask expand_seeds(const SeedMap& seeds, int block_size);

// Full pipeline for one map: calibrate, sample (per mode), expand.
BinaryMask sample_feature_mask(const AttentionMap& attention, float keep_prob,
                               int block_size, SamplingMode mode, Rng& rng);

} // namespace rb
