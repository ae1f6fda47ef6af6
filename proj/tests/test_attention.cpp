#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "rb/attention.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

using namespace rb;

namespace {

AttentionMap random_map(int h, int w, std::mt19937& rng) {
    AttentionMap m;
    m.values = Map2D(h, w);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (float& v : m.values.v) v = u(rng);
    return m;
}

} // namespace

TEST_CASE("compute_cam weighting and clamping") {
    // 2 channels: constant 1 and constant 2; weights (0.5, 0.25) -> constant 1.0
    Tensor f({1, 2, 3, 3});
    for (int i = 0; i < 9; ++i) {
        f.vec()[i] = 1.0f;
        f.vec()[9 + i] = 2.0f;
    }
    std::vector<float> w{0.5f, 0.25f, -1.0f, -1.0f}; // 2 classes x 2 channels
    auto maps = compute_cam(f, w, 2, {0});
    REQUIRE(maps.size() == 1);
    CHECK(maps[0].source_label == 0);
    for (float v : maps[0].values.v) CHECK(v == doctest::Approx(1.0f));

    // all-negative weights clamp to zero
    auto neg = compute_cam(f, w, 2, {1});
    for (float v : neg[0].values.v) CHECK(v == 0.0f);

    // zero features -> zero map
    auto zero = compute_cam(Tensor({1, 2, 3, 3}), w, 2, {0});
    for (float v : zero[0].values.v) CHECK(v == 0.0f);

    CHECK_THROWS_AS(compute_cam(f, w, 2, {5}), std::invalid_argument);
    CHECK_THROWS_AS(compute_cam(Tensor({1, 3, 3, 3}), w, 2, {0}), std::invalid_argument);
}

TEST_CASE("compute_cam is linear in features for positive scale") {
    std::mt19937 rng(3);
    Tensor f({1, 4, 5, 5});
    std::normal_distribution<float> d(0.0f, 1.0f);
    for (float& v : f.vec()) v = d(rng);
    std::vector<float> w(2 * 4);
    for (float& v : w) v = d(rng);

    Tensor f3 = f;
    for (float& v : f3.vec()) v *= 3.0f;
    auto a = compute_cam(f, w, 2, {1});
    auto b = compute_cam(f3, w, 2, {1});
    for (std::size_t i = 0; i < a[0].values.v.size(); ++i)
        CHECK(b[0].values.v[i] == doctest::Approx(3.0f * a[0].values.v[i]).epsilon(1e-4));
}

TEST_CASE("threshold_to_tcdm direct rule") {
    AttentionMap m;
    m.values = Map2D(2, 2);
    m.values.v = {1.0f, 0.1f, 0.3f, 0.15f};
    BinaryMask mask = threshold_to_tcdm(m, 0.2f);
    CHECK(mask.values.v == std::vector<float>{0, 1, 0, 1});
    CHECK(mask.level == MaskLevel::feature);
}

TEST_CASE("threshold_to_tcdm monotone nesting") {
    std::mt19937 rng(9);
    for (int t = 0; t < 100; ++t) {
        AttentionMap m = random_map(6, 6, rng);
        BinaryMask lo = threshold_to_tcdm(m, 0.05f);
        BinaryMask mid = threshold_to_tcdm(m, 0.20f);
        BinaryMask hi = threshold_to_tcdm(m, 0.60f);
        for (std::size_t i = 0; i < lo.values.v.size(); ++i) {
            // drop set shrinks as the ratio rises: 0.05-drop >= 0.20-drop >= 0.60-drop
            if (mid.values.v[i] == 0.0f) CHECK(lo.values.v[i] == 0.0f);
            if (hi.values.v[i] == 0.0f) CHECK(mid.values.v[i] == 0.0f);
        }
    }
}

TEST_CASE("threshold_to_tcdm all-zero map keeps everything") {
    AttentionMap m;
    m.values = Map2D(3, 3);
    BinaryMask mask = threshold_to_tcdm(m, 0.2f);
    for (float v : mask.values.v) CHECK(v == 1.0f);
    CHECK_THROWS_AS(threshold_to_tcdm(m, 0.0f), std::invalid_argument);
    CHECK_THROWS_AS(threshold_to_tcdm(m, 1.0f), std::invalid_argument);
}

TEST_CASE("tcdm_to_image_mask upsampling") {
    BinaryMask ones;
    ones.values = Map2D(4, 4, 1.0f);
    BinaryMask img = tcdm_to_image_mask(ones, 32, 32);
    CHECK(img.level == MaskLevel::image);
    for (float v : img.values.v) CHECK(v == 1.0f);

    BinaryMask m;
    m.values = Map2D(2, 2);
    m.values.v = {1, 0, 0, 1};
    BinaryMask up = tcdm_to_image_mask(m, 32, 32);
    CHECK(up.values.at(0, 0) == 1.0f);
    CHECK(up.values.at(0, 31) == 0.0f);
    CHECK(up.values.at(31, 0) == 0.0f);
    CHECK(up.values.at(31, 31) == 1.0f);
    CHECK(up.values.at(15, 15) == 1.0f);
    CHECK(up.values.at(15, 16) == 0.0f);

    // checkerboard matches the index-formula oracle
    BinaryMask cb;
    cb.values = Map2D(4, 4);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) cb.values.at(i, j) = static_cast<float>((i + j) % 2);
    BinaryMask cbi = tcdm_to_image_mask(cb, 32, 32);
    for (int i = 0; i < 32; ++i)
        for (int j = 0; j < 32; ++j)
            CHECK(cbi.values.at(i, j) == cb.values.at(i * 4 / 32, j * 4 / 32));
}

TEST_CASE("export_heatmap writes scaled P5") {
    namespace fs = std::filesystem;
    const std::string path = (fs::temp_directory_path() / "rb_heatmap_test.pgm").string();

    AttentionMap m;
    m.values = Map2D(7, 7);
    for (int i = 0; i < 49; ++i) m.values.v[i] = static_cast<float>(i);
    export_heatmap(m, path);

    std::ifstream f(path, std::ios::binary);
    std::string magic, dims1, dims2, maxval;
    f >> magic >> dims1 >> dims2 >> maxval;
    CHECK(magic == "P5");
    CHECK(dims1 == "7");
    CHECK(dims2 == "7");
    CHECK(maxval == "255");
    f.get(); // single whitespace after header
    std::vector<unsigned char> px(49);
    f.read(reinterpret_cast<char*>(px.data()), 49);
    CHECK(px[0] == 0);
    CHECK(px[48] == 255);

    // constant map degenerates to all zeros
    AttentionMap c;
    c.values = Map2D(3, 3, 5.0f);
    export_heatmap(c, path);
    std::ifstream g(path, std::ios::binary);
    g >> magic >> dims1 >> dims2 >> maxval;
    g.get();
    std::vector<unsigned char> cz(9);
    g.read(reinterpret_cast<char*>(cz.data()), 9);
    for (unsigned char b : cz) CHECK(b == 0);

    CHECK_THROWS(export_heatmap(m, "/nonexistent-dir/x/y.pgm"));
    std::remove(path.c_str());
}
