#pragma once

#include "rb/data.hpp"
#include "rb/nn.hpp"
#include "rb/regularizers.hpp"

#include <functional>

namespace rb {

struct TrainState {
    int global_step = 0;
    int total_steps = 0;
};

// One training-mode forward under the configured regularizer. Leaves model
// caches and hook gates ready for backward().
Tensor training_forward(MiniCnn& model, const Tensor& x, const std::vector<int>& labels,
                        const RegularizerConfig& reg, int step, std::uint64_t run_seed);

float evaluate_top1(MiniCnn& model, const Dataset& data, const NormStats* stats,
                    int batch_size);

// One full pass over the training set; deterministic given the seed.
RunRecord train_epoch(MiniCnn& model, const Dataset& train, const Dataset& test,
                      SgdMomentum& opt, const TrainConfig& cfg,
                      const RegularizerConfig& reg, const NormStats* stats,
                      int epoch, TrainState& state, bool eval_test = true);

} // namespace rb
