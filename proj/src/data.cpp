#include "rb/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace fs = std::filesystem;

namespace rb {

namespace {

constexpr std::size_t kCifarRecord = 3073;

std::vector<std::uint8_t> read_all(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::uint8_t* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
           (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

} // namespace

std::vector<LabeledImage> load_cifar10_file(const std::string& path) {
    const std::vector<std::uint8_t> raw = read_all(path);
    if (raw.empty() || raw.size() % kCifarRecord != 0)
        throw std::runtime_error(path + ": size " + std::to_string(raw.size()) +
                                 " is not a multiple of 3073");
    std::vector<LabeledImage> out;
    out.reserve(raw.size() / kCifarRecord);
    for (std::size_t off = 0; off < raw.size(); off += kCifarRecord) {
        LabeledImage img;
        img.label = raw[off];
        if (img.label > 9)
            throw std::runtime_error(path + ": label byte " + std::to_string(img.label) +
                                     " out of range");
        img.pixels = Tensor({1, 3, 32, 32});
        for (std::size_t i = 0; i < 3072; ++i)
            img.pixels.vec()[i] = raw[off + 1 + i] / 255.0f;
        out.push_back(std::move(img));
    }
    return out;
}

void write_cifar10_file(const std::string& path, const std::vector<LabeledImage>& samples) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    for (const LabeledImage& img : samples) {
        f.put(static_cast<char>(img.label));
        for (std::size_t i = 0; i < 3072; ++i) {
            const float v = std::clamp(img.pixels.vec()[i], 0.0f, 1.0f);
            f.put(static_cast<char>(static_cast<int>(v * 255.0f + 0.5f)));
        }
    }
}

SplitDataset load_cifar10(const std::string& dir) {
    SplitDataset ds;
    std::vector<std::string> train_files;
    for (const auto& e : fs::directory_iterator(dir)) {
        const std::string name = e.path().filename().string();
        if (name.rfind("data_batch", 0) == 0 && name.ends_with(".bin"))
            train_files.push_back(e.path().string());
    }
    std::sort(train_files.begin(), train_files.end());
    for (const std::string& p : train_files) {
        auto v = load_cifar10_file(p);
        ds.train.samples.insert(ds.train.samples.end(),
                                std::make_move_iterator(v.begin()),
                                std::make_move_iterator(v.end()));
    }
    const fs::path test_path = fs::path(dir) / "test_batch.bin";
    if (fs::exists(test_path)) ds.test.samples = load_cifar10_file(test_path.string());
    if (ds.train.samples.empty())
        throw std::runtime_error("no data_batch_*.bin files found in " + dir);
    return ds;
}

Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
    const std::vector<std::uint8_t> imgs = read_all(images_path);
    const std::vector<std::uint8_t> labs = read_all(labels_path);
    if (imgs.size() < 16 || read_be32(imgs.data()) != 2051)
        throw std::runtime_error(images_path + ": bad IDX image magic (expected 2051)");
    if (labs.size() < 8 || read_be32(labs.data()) != 2049)
        throw std::runtime_error(labels_path + ": bad IDX label magic (expected 2049)");
    const std::uint32_t n = read_be32(imgs.data() + 4);
    const std::uint32_t rows = read_be32(imgs.data() + 8);
    const std::uint32_t cols = read_be32(imgs.data() + 12);
    if (read_be32(labs.data() + 4) != n)
        throw std::runtime_error("image/label count mismatch: " + std::to_string(n) + " vs " +
                                 std::to_string(read_be32(labs.data() + 4)));
    if (rows != 28 || cols != 28)
        throw std::runtime_error("expected 28x28 MNIST images, got " + std::to_string(rows) +
                                 "x" + std::to_string(cols));
    if (imgs.size() < 16 + std::size_t(n) * 784 || labs.size() < 8 + n)
        throw std::runtime_error("truncated IDX file");

    Dataset ds;
    ds.channels = 1;
    ds.samples.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        LabeledImage img;
        img.label = labs[8 + i];
        img.pixels = Tensor({1, 1, 32, 32});
        const std::uint8_t* src = imgs.data() + 16 + std::size_t(i) * 784;
        for (int r = 0; r < 28; ++r)
            for (int c = 0; c < 28; ++c)
                img.pixels.at(0, 0, r + 2, c + 2) = src[r * 28 + c] / 255.0f;
        ds.samples.push_back(std::move(img));
    }
    return ds;
}

LabeledImage augment(const LabeledImage& img, Rng& rng) {
    const Shape& s = img.pixels.shape();
    LabeledImage out;
    out.label = img.label;
    out.pixels = Tensor(s);

    std::uniform_int_distribution<int> coin(0, 1);
    const bool flip = coin(rng) == 1;
    std::uniform_int_distribution<int> off(0, 8); // pad 4 each side
    const int oi = off(rng), oj = off(rng);

    for (int c = 0; c < s.c; ++c)
        for (int i = 0; i < s.h; ++i)
            for (int j = 0; j < s.w; ++j) {
                // coordinates into the zero-padded source
                const int si = i + oi - 4;
                int sj = j + oj - 4;
                float v = 0.0f;
                if (si >= 0 && si < s.h && sj >= 0 && sj < s.w) {
                    if (flip) sj = s.w - 1 - sj;
                    v = img.pixels.at(0, c, si, sj);
                }
                out.pixels.at(0, c, i, j) = v;
            }
    return out;
}

NormStats compute_norm_stats(const Dataset& train) {
    if (train.samples.empty())
        throw std::invalid_argument("compute_norm_stats: empty dataset");
    const Shape& s = train.samples[0].pixels.shape();
    NormStats st;
    st.mean.assign(s.c, 0.0f);
    st.std.assign(s.c, 0.0f);
    std::vector<double> sum(s.c, 0.0), sq(s.c, 0.0);
    const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
    for (const LabeledImage& img : train.samples)
        for (int c = 0; c < s.c; ++c) {
            const float* p = img.pixels.data() + c * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                sum[c] += p[i];
                sq[c] += static_cast<double>(p[i]) * p[i];
            }
        }
    const double count = static_cast<double>(train.samples.size()) * plane;
    for (int c = 0; c < s.c; ++c) {
        const double m = sum[c] / count;
        const double var = std::max(sq[c] / count - m * m, 0.0);
        st.mean[c] = static_cast<float>(m);
        st.std[c] = static_cast<float>(std::sqrt(var));
        if (st.std[c] <= 0.0f)
            throw std::runtime_error("compute_norm_stats: zero std in channel " +
                                     std::to_string(c));
    }
    return st;
}

LabeledImage normalize(const LabeledImage& img, const NormStats& stats) {
    LabeledImage out;
    out.label = img.label;
    out.pixels = img.pixels;
    normalize_in_place(out.pixels, stats);
    return out;
}

void normalize_in_place(Tensor& batch, const NormStats& stats) {
    const Shape& s = batch.shape();
    if (static_cast<int>(stats.mean.size()) != s.c)
        throw std::invalid_argument("normalize: stats channel count mismatch");
    const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            float* p = batch.data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
            const float m = stats.mean[c], sd = stats.std[c];
            for (std::size_t i = 0; i < plane; ++i) p[i] = (p[i] - m) / sd;
        }
}

Dataset make_synthetic_dataset(int count, std::uint64_t seed, int num_classes) {
    Dataset ds;
    ds.num_classes = num_classes;
    ds.samples.reserve(count);
    Rng rng(derive_seed(seed, 0xda7a));
    std::uniform_real_distribution<float> uphase(0.0f, 6.2831853f);
    std::normal_distribution<float> noise(0.0f, 0.18f);
    std::uniform_int_distribution<int> ulabel(0, num_classes - 1);

    for (int n = 0; n < count; ++n) {
        LabeledImage img;
        img.label = ulabel(rng);
        img.pixels = Tensor({1, 3, 32, 32});
        // class-dependent grating orientation/frequency and channel weighting
        const float angle = 3.14159265f * img.label / num_classes;
        const float freq = 2.0f + (img.label % 3);
        const float fx = freq * std::cos(angle) / 32.0f;
        const float fy = freq * std::sin(angle) / 32.0f;
        const float phase = uphase(rng);
        const float cw[3] = {0.5f + 0.5f * std::cos(2.1f * img.label),
                             0.5f + 0.5f * std::cos(2.1f * img.label + 2.0f),
                             0.5f + 0.5f * std::cos(2.1f * img.label + 4.0f)};
        for (int c = 0; c < 3; ++c)
            for (int i = 0; i < 32; ++i)
                for (int j = 0; j < 32; ++j) {
                    const float g =
                        std::sin(6.2831853f * (fx * j + fy * i) + phase);
                    float v = 0.5f + 0.35f * cw[c] * g + noise(rng);
                    img.pixels.at(0, c, i, j) = std::clamp(v, 0.0f, 1.0f);
                }
        ds.samples.push_back(std::move(img));
    }
    return ds;
}

void write_synthetic_cifar10(const std::string& dir, int train_count, int test_count,
                             std::uint64_t seed) {
    fs::create_directories(dir);
    Dataset train = make_synthetic_dataset(train_count, seed);
    Dataset test = make_synthetic_dataset(test_count, seed + 1);
    write_cifar10_file((fs::path(dir) / "data_batch_1.bin").string(), train.samples);
    write_cifar10_file((fs::path(dir) / "test_batch.bin").string(), test.samples);
}

BatchIterator::BatchIterator(std::size_t dataset_size, int batch_size,
                             std::uint64_t seed, int epoch)
    : order_(dataset_size), batch_size_(batch_size) {
    if (dataset_size == 0) throw std::invalid_argument("BatchIterator: empty dataset");
    if (batch_size < 1) throw std::invalid_argument("BatchIterator: batch_size must be >= 1");
    std::iota(order_.begin(), order_.end(), 0);
    Rng rng(derive_seed(seed, 0xba7c, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order_.begin(), order_.end(), rng);
}

std::vector<std::size_t> BatchIterator::next() {
    if (cursor_ >= order_.size()) return {};
    const std::size_t end =
        std::min(cursor_ + static_cast<std::size_t>(batch_size_), order_.size());
    std::vector<std::size_t> batch(order_.begin() + cursor_, order_.begin() + end);
    cursor_ = end;
    return batch;
}

std::size_t BatchIterator::num_batches() const {
    return (order_.size() + batch_size_ - 1) / batch_size_;
}

Batch make_batch(const Dataset& data, const std::vector<std::size_t>& indices,
                 bool augment_flag, const NormStats* stats,
                 std::uint64_t seed, int epoch) {
    if (indices.empty()) throw std::invalid_argument("make_batch: empty index list");
    const Shape& s0 = data.samples[indices[0]].pixels.shape();
    Batch b;
    b.x = Tensor({static_cast<int>(indices.size()), s0.c, s0.h, s0.w});
    b.labels.reserve(indices.size());
    const std::size_t per = s0.count();
    for (std::size_t k = 0; k < indices.size(); ++k) {
        const LabeledImage& src = data.samples[indices[k]];
        b.labels.push_back(src.label);
        if (augment_flag) {
            Rng rng(derive_seed(seed, static_cast<std::uint64_t>(epoch), indices[k]));
            LabeledImage a = augment(src, rng);
            std::copy(a.pixels.vec().begin(), a.pixels.vec().end(),
                      b.x.vec().begin() + k * per);
        } else {
            std::copy(src.pixels.vec().begin(), src.pixels.vec().end(),
                      b.x.vec().begin() + k * per);
        }
    }
    if (stats) normalize_in_place(b.x, *stats);
    return b;
}

} // namespace rb
