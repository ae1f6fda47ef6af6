#include "rb/experiment.hpp"

#include <CLI11.hpp>
#include <cblas.h>

#include <cstdint>
#include <iostream>

int main(int argc, char** argv) {
    openblas_set_num_threads(1);

    CLI::App app{"ReplaceBlock regularization experiments"};
    app.require_subcommand(1);

    std::string config_path, out_dir, dataset_dir, dataset_type;
    std::int64_t seed = -1;
    int epochs = -1, subset = -1;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON experiment config");
        cmd->add_option("--seed", seed, "RNG seed (overrides config)");
        cmd->add_option("--out", out_dir, "output directory (overrides config)");
        cmd->add_option("--dataset-dir", dataset_dir, "dataset directory (overrides config)");
        cmd->add_option("--dataset", dataset_type, "dataset type: cifar10|mnist|synthetic");
        cmd->add_option("--epochs", epochs, "epoch count (overrides config)");
        cmd->add_option("--subset-size", subset, "training subset size (overrides config)");
    };

    CLI::App* train = app.add_subcommand("train", "run one training experiment");
    add_common(train);

    CLI::App* compare = app.add_subcommand("compare", "compare completed runs");
    std::vector<std::string> run_dirs;
    std::string compare_csv = "compare.csv";
    compare->add_option("dirs", run_dirs, "run directories")->required()->expected(2, -1);
    compare->add_option("--csv", compare_csv, "summary CSV path");

    CLI::App* sweep = app.add_subcommand("sweep", "run an ablation preset");
    std::string preset;
    sweep->add_option("preset", preset,
                      "threshold-sweep | sampling-ablation | schedule-ablation | baseline-grid")
        ->required();
    add_common(sweep);

    CLI::App* synth = app.add_subcommand("make-data", "write a synthetic CIFAR-format dataset");
    std::string synth_dir = "data/synthetic";
    int synth_train = 5000, synth_test = 1000;
    std::uint64_t synth_seed = 1;
    synth->add_option("--dir", synth_dir, "target directory");
    synth->add_option("--train-count", synth_train, "training sample count");
    synth->add_option("--test-count", synth_test, "test sample count");
    synth->add_option("--seed", synth_seed, "generator seed");

    CLI11_PARSE(app, argc, argv);

    auto build_config = [&]() {
        rb::ExperimentConfig cfg;
        if (!config_path.empty()) cfg = rb::load_config_file(config_path);
        if (seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(seed);
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        if (!dataset_dir.empty()) cfg.dataset.dir = dataset_dir;
        if (!dataset_type.empty()) cfg.dataset.type = dataset_type;
        if (epochs >= 0) cfg.train.epochs = epochs;
        if (subset >= 0) cfg.dataset.subset_size = subset;
        return cfg;
    };

    try {
        if (train->parsed()) {
            rb::RunResult r = rb::run_experiment(build_config());
            std::cout << "run complete: " << r.out_dir << " final top-1 "
                      << r.final_test_top1() << "% (best " << r.best_test_top1() << "%)\n";
        } else if (compare->parsed()) {
            std::cout << rb::compare_runs(run_dirs, compare_csv);
        } else if (sweep->parsed()) {
            rb::ExperimentConfig cfg = build_config();
            const std::string root = cfg.out_dir.empty() ? "sweep" : cfg.out_dir;
            auto dirs = rb::run_sweep(preset, cfg, root);
            std::cout << rb::compare_runs(dirs, root + "/summary.csv");
        } else if (synth->parsed()) {
            rb::write_synthetic_cifar10(synth_dir, synth_train, synth_test, synth_seed);
            std::cout << "wrote " << synth_train << "/" << synth_test
                      << " synthetic samples to " << synth_dir << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
