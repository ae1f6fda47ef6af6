#include "rb/maskgen.hpp"

#include <algorithm>
#include <stdexcept>

namespace rb {

float calibrate_gamma(float keep_prob, int block_size, int h, int w) {
    if (keep_prob <= 0.0f || keep_prob > 1.0f)
        throw std::invalid_argument("calibrate_gamma: keep_prob must be in (0,1]");
    if (block_size < 1 || block_size % 2 == 0)
        throw std::invalid_argument("calibrate_gamma: block_size must be odd and positive");
    if (h < block_size || w < block_size)
        throw std::invalid_argument("calibrate_gamma: map smaller than block_size");
    const double drop = 1.0 - keep_prob;
    const double area = static_cast<double>(h) * w;
    const double valid = static_cast<double>(h - block_size + 1) * (w - block_size + 1);
    return static_cast<float>(drop / (static_cast<double>(block_size) * block_size) * area / valid);
}

namespace {

int half_block(int block_size) { return block_size / 2; }

bool valid_pos(int i, int j, int h, int w, int r) {
    return i >= r && j >= r && i < h - r && j < w - r;
}

} // namespace

SeedMap sample_seeds_rrsm(const AttentionMap& m, float gamma, int block_size, Rng& rng) {
    if (gamma < 0.0f)
        throw std::invalid_argument("sample_seeds_rrsm: gamma must be >= 0");
    const int h = m.values.h, w = m.values.w;
    const int r = half_block(block_size);
    SeedMap out{Map2D(h, w)};

    double mass = 0.0;
    int valid = 0;
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            if (valid_pos(i, j, h, w, r)) {
                mass += m.values.at(i, j);
                ++valid;
            }
    if (mass <= 0.0 || valid == 0 || gamma == 0.0f) return out;

    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            if (!valid_pos(i, j, h, w, r)) continue;
            const double p = std::clamp(
                static_cast<double>(gamma) * m.values.at(i, j) * valid / mass, 0.0, 1.0);
            if (u(rng) < p) out.values.at(i, j) = 1.0f;
        }
    return out;
}

SeedMap sample_seeds_uniform(float gamma, int h, int w, int block_size, Rng& rng) {
    if (gamma < 0.0f || gamma > 1.0f)
        throw std::invalid_argument("sample_seeds_uniform: gamma must be in [0,1]");
    const int r = half_block(block_size);
    SeedMap out{Map2D(h, w)};
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            if (!valid_pos(i, j, h, w, r)) continue;
            if (u(rng) < gamma) out.values.at(i, j) = 1.0f;
        }
    return out;
}

BinaryMask expand_seeds(const SeedMap& seeds, int block_size) {
    const int h = seeds.values.h, w = seeds.values.w;
    const int r = half_block(block_size);
    BinaryMask out;
    out.level = MaskLevel::feature;
    out.values = Map2D(h, w, 1.0f);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            if (seeds.values.at(i, j) == 0.0f) continue;
            for (int di = -r; di <= r; ++di)
                for (int dj = -r; dj <= r; ++dj) {
                    const int ti = i + di, tj = j + dj;
                    if (ti >= 0 && tj >= 0 && ti < h && tj < w)
                        out.values.at(ti, tj) = 0.0f;
                }
        }
    return out;
}

BinaryMask sample_feature_mask(const AttentionMap& attention, float keep_prob,
                               int block_size, SamplingMode mode, Rng& rng) {
    const int h = attention.values.h, w = attention.values.w;
    const float gamma = calibrate_gamma(keep_prob, block_size, h, w);
    SeedMap seeds = (mode == SamplingMode::rr_sm)
                        ? sample_seeds_rrsm(attention, gamma, block_size, rng)
                        : sample_seeds_uniform(gamma, h, w, block_size, rng);
    return expand_seeds(seeds, block_size);
}

} // namespace rb
