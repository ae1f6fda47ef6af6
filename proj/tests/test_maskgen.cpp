#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "rb/maskgen.hpp"

#include <cmath>

using namespace rb;

TEST_CASE("calibrate_gamma") {
    CHECK(calibrate_gamma(1.0f, 3, 16, 16) == 0.0f);

    // ((1-0.9)/9) * 256/196
    CHECK(calibrate_gamma(0.9f, 3, 16, 16) == doctest::Approx(0.014512f).epsilon(1e-3));

    // block_size 1: ratio is exactly 1
    CHECK(calibrate_gamma(0.9f, 1, 16, 16) == doctest::Approx(0.1f));

    CHECK_THROWS_AS(calibrate_gamma(0.0f, 3, 16, 16), std::invalid_argument);
    CHECK_THROWS_AS(calibrate_gamma(0.9f, 4, 16, 16), std::invalid_argument);
    CHECK_THROWS_AS(calibrate_gamma(0.9f, 5, 4, 4), std::invalid_argument);
}

TEST_CASE("sample_seeds_rrsm basics") {
    AttentionMap uniform;
    uniform.values = Map2D(8, 8, 1.0f);
    Rng rng(1);

    SeedMap none = sample_seeds_rrsm(uniform, 0.0f, 3, rng);
    for (float v : none.values.v) CHECK(v == 0.0f);

    AttentionMap zero;
    zero.values = Map2D(8, 8);
    SeedMap z = sample_seeds_rrsm(zero, 0.5f, 3, rng);
    for (float v : z.values.v) CHECK(v == 0.0f);

    // uniform attention collapses to Bernoulli(gamma); check empirically
    int count = 0;
    const int trials = 20000;
    for (int t = 0; t < trials; ++t) {
        SeedMap s = sample_seeds_rrsm(uniform, 0.1f, 3, rng);
        for (float v : s.values.v) count += v > 0.0f;
    }
    const double per_pos = static_cast<double>(count) / (trials * 36.0); // 6x6 valid
    CHECK(per_pos == doctest::Approx(0.1).epsilon(0.05));

    // seeds stay inside the valid region
    SeedMap s = sample_seeds_rrsm(uniform, 1.0f, 3, rng);
    for (int j = 0; j < 8; ++j) {
        CHECK(s.values.at(0, j) == 0.0f);
        CHECK(s.values.at(7, j) == 0.0f);
        CHECK(s.values.at(j, 0) == 0.0f);
        CHECK(s.values.at(j, 7) == 0.0f);
    }
}

TEST_CASE("rrsm bimodal attention gives proportional seed frequency") {
    // half the valid positions at 3x mass, half at 1x
    AttentionMap m;
    m.values = Map2D(10, 10);
    int rank = 0;
    for (int i = 1; i < 9; ++i)
        for (int j = 1; j < 9; ++j) m.values.at(i, j) = (rank++ % 2 == 0) ? 3.0f : 1.0f;

    Rng rng(7);
    long hi = 0, lo = 0;
    for (int t = 0; t < 100000; ++t) {
        SeedMap s = sample_seeds_rrsm(m, 0.02f, 3, rng);
        for (int i = 1; i < 9; ++i)
            for (int j = 1; j < 9; ++j)
                if (s.values.at(i, j) > 0.0f)
                    (m.values.at(i, j) == 3.0f ? hi : lo) += 1;
    }
    const double ratio = static_cast<double>(hi) / lo;
    CHECK(ratio == doctest::Approx(3.0).epsilon(0.05));
}

TEST_CASE("sample_seeds_uniform") {
    Rng rng(3);
    SeedMap none = sample_seeds_uniform(0.0f, 8, 8, 3, rng);
    for (float v : none.values.v) CHECK(v == 0.0f);

    SeedMap all = sample_seeds_uniform(1.0f, 8, 8, 3, rng);
    int seeded = 0;
    for (float v : all.values.v) seeded += v > 0.0f;
    CHECK(seeded == 36); // the whole 6x6 valid region

    long count = 0;
    const int trials = 100000;
    for (int t = 0; t < trials; ++t) {
        SeedMap s = sample_seeds_uniform(0.1f, 16, 16, 3, rng);
        for (float v : s.values.v) count += v > 0.0f;
    }
    const double per_pos = static_cast<double>(count) / (trials * 196.0); // 14x14 valid
    CHECK(per_pos == doctest::Approx(0.1).epsilon(0.1));
    CHECK(std::abs(per_pos - 0.1) < 0.01);
}

TEST_CASE("expand_seeds block geometry") {
    SeedMap empty{Map2D(7, 7)};
    BinaryMask all_keep = expand_seeds(empty, 3);
    for (float v : all_keep.values.v) CHECK(v == 1.0f);

    SeedMap one{Map2D(7, 7)};
    one.values.at(3, 3) = 1.0f;
    BinaryMask m = expand_seeds(one, 3);
    // brute-force neighborhood enumeration
    for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 7; ++j) {
            const bool dropped = std::abs(i - 3) <= 1 && std::abs(j - 3) <= 1;
            CHECK(m.values.at(i, j) == (dropped ? 0.0f : 1.0f));
        }

    // two overlapping blocks drop the union
    SeedMap two{Map2D(7, 7)};
    two.values.at(2, 2) = 1.0f;
    two.values.at(3, 3) = 1.0f;
    BinaryMask u = expand_seeds(two, 3);
    int dropped = 0;
    for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 7; ++j) {
            const bool in_a = std::abs(i - 2) <= 1 && std::abs(j - 2) <= 1;
            const bool in_b = std::abs(i - 3) <= 1 && std::abs(j - 3) <= 1;
            CHECK(u.values.at(i, j) == ((in_a || in_b) ? 0.0f : 1.0f));
            dropped += (in_a || in_b);
        }
    CHECK(dropped == 14); // 9 + 9 - 4 overlap

    for (float v : u.values.v) CHECK((v == 0.0f || v == 1.0f));
}

TEST_CASE("mask drop-rate calibration on 16x16, kp=0.9, bs=3") {
    AttentionMap uniform;
    uniform.values = Map2D(16, 16, 1.0f);
    Rng rng(11);
    double dropped = 0.0;
    const int trials = 10000;
    for (int t = 0; t < trials; ++t) {
        BinaryMask m = sample_feature_mask(uniform, 0.9f, 3, SamplingMode::uniform, rng);
        for (float v : m.values.v) dropped += v == 0.0f;
    }
    const double frac = dropped / (trials * 256.0);
    CHECK(frac > 0.08);
    CHECK(frac < 0.12);
}

TEST_CASE("rrsm drops the high-attention quadrant more often") {
    // contiguous regions so block expansion cannot bleed between the
    // compared areas: top-left quadrant at 4x the bottom-right's mass
    AttentionMap m;
    m.values = Map2D(16, 16, 2.0f);
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) {
            m.values.at(i, j) = 4.0f;
            m.values.at(i + 8, j + 8) = 1.0f;
        }
    Rng rng(13);
    long top_drops = 0, bottom_drops = 0;
    for (int t = 0; t < 10000; ++t) {
        BinaryMask mask = sample_feature_mask(m, 0.9f, 3, SamplingMode::rr_sm, rng);
        // interiors only, 2 cells clear of the quadrant boundary
        for (int i = 2; i < 6; ++i)
            for (int j = 2; j < 6; ++j) {
                if (mask.values.at(i, j) == 0.0f) ++top_drops;
                if (mask.values.at(i + 8, j + 8) == 0.0f) ++bottom_drops;
            }
    }
    CHECK(top_drops > 2 * bottom_drops);
}
