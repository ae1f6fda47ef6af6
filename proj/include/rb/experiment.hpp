#pragma once

#include "rb/regularizers.hpp"
#include "rb/train.hpp"

#include <optional>
#include <string>
#include <vector>

namespace rb {

struct DatasetSpec {
    std::string type = "cifar10"; // cifar10 | mnist | synthetic
    std::string dir;              // cifar10 batch dir; mnist expects idx files inside
    int subset_size = 0;          // 0 = whole training split
    int test_subset_size = 0;     // 0 = whole test split
    int synthetic_train = 5000;   // type == synthetic only
    int synthetic_test = 1000;

    bool operator==(const DatasetSpec&) const = default;
};

struct ExperimentConfig {
    DatasetSpec dataset;
    TrainConfig train;
    RegularizerConfig regularizer;
    std::string out_dir = "run";
    int eval_every = 1;
    std::optional<NormStats> normalization; // filled into the resolved config.json

    bool operator==(const ExperimentConfig& o) const;
};

std::string to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config_file(const std::string& path);

struct RunResult {
    std::vector<RunRecord> records;
    std::string out_dir;

    float final_test_top1() const;
    float best_test_top1() const;
};

// Trains per config, writing metrics.csv, config.json, model.ckpt and
// heatmaps/ into the output directory.
RunResult run_experiment(ExperimentConfig cfg);

struct RunSummary {
    std::string dir;
    float final_top1 = 0.0f;
    float best_top1 = 0.0f;
    bool complete = false;
};

std::vector<RunSummary> summarize_runs(const std::vector<std::string>& dirs);

// Text table plus CSV with deltas against the first run.
std::string compare_runs(const std::vector<std::string>& dirs, const std::string& csv_out);

// Presets: threshold-sweep, sampling-ablation, schedule-ablation, baseline-grid.
// Returns the per-variant run directories.
std::vector<std::string> run_sweep(const std::string& preset, ExperimentConfig base,
                                   const std::string& out_root);

std::string regularizer_kind_name(RegKind k);

} // namespace rb
