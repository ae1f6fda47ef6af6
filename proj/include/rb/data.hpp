#pragma once

#include "rb/nn.hpp"
#include "rb/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace rb {

struct LabeledImage {
    Tensor pixels; // (1, C, H, W), values in [0,1] before normalization
    int label = 0;
};

struct Dataset {
    std::vector<LabeledImage> samples;
    int num_classes = 10;
    int channels = 3;

    std::size_t size() const { return samples.size(); }
};

struct SplitDataset {
    Dataset train;
    Dataset test;
};

// CIFAR-10 binary batches: 3073-byte records, 1 label byte + 3072 pixel
// bytes in R,G,B planes. Reads data_batch_*.bin into train and
// test_batch.bin into test.
SplitDataset load_cifar10(const std::string& dir);
std::vector<LabeledImage> load_cifar10_file(const std::string& path);
void write_cifar10_file(const std::string& path, const std::vector<LabeledImage>& samples);

// MNIST IDX pair (magic 2051 / 2049, big-endian dims); 28x28 content is
// zero-padded to 32x32 with a 2-pixel border.
Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path);

// Random horizontal flip (p=0.5), zero-pad 4, random crop back to the
// original size. The label is untouched.
LabeledImage augment(const LabeledImage& img, Rng& rng);

struct NormStats {
    std::vector<float> mean;
    std::vector<float> std;
};

NormStats compute_norm_stats(const Dataset& train);
LabeledImage normalize(const LabeledImage& img, const NormStats& stats);
void normalize_in_place(Tensor& batch, const NormStats& stats);

// Deterministic seeded class-colored grating images in CIFAR-10 layout,
// for smoke runs when no real dataset is on disk.
Dataset make_synthetic_dataset(int count, std::uint64_t seed, int num_classes = 10);
void write_synthetic_cifar10(const std::string& dir, int train_count, int test_count,
                             std::uint64_t seed);

// Seeded permutation over the dataset, yielding index batches; every epoch
// visits each sample exactly once.
class BatchIterator {
public:
    BatchIterator(std::size_t dataset_size, int batch_size, std::uint64_t seed, int epoch);

    // Returns the next batch of indices, empty when the epoch is exhausted.
    std::vector<std::size_t> next();
    std::size_t num_batches() const;

private:
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
    int batch_size_;
};

struct Batch {
    Tensor x;
    std::vector<int> labels;
};

// Assembles a batch; augmentation RNG is keyed by (seed, epoch, sample index)
// so results do not depend on assembly order.
Batch make_batch(const Dataset& data, const std::vector<std::size_t>& indices,
                 bool augment_flag, const NormStats* stats,
                 std::uint64_t seed, int epoch);

} // namespace rb
