#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "rb/experiment.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace rb;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) {
        path = fs::temp_directory_path() / name;
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

ExperimentConfig tiny_config(const std::string& out) {
    ExperimentConfig cfg;
    cfg.dataset.type = "synthetic";
    cfg.dataset.synthetic_train = 96;
    cfg.dataset.synthetic_test = 32;
    cfg.train.epochs = 1;
    cfg.train.batch_size = 32;
    cfg.train.seed = 5;
    cfg.out_dir = out;
    return cfg;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("config JSON round-trip equality") {
    ExperimentConfig cfg;
    cfg.dataset.type = "cifar10";
    cfg.dataset.dir = "/data/cifar";
    cfg.dataset.subset_size = 5000;
    cfg.train.epochs = 20;
    cfg.train.seed = 1234;
    cfg.regularizer.kind = RegKind::replace_block;
    cfg.regularizer.replace_block.threshold_ratio = 0.05f;
    cfg.regularizer.replace_block.sampling_mode = SamplingMode::uniform;
    cfg.regularizer.replace_block.schedule = Schedule::alternate;
    cfg.regularizer.replace_block.shuffle = false;
    cfg.out_dir = "runs/x";
    cfg.eval_every = 2;
    cfg.normalization = NormStats{{0.5f, 0.4f, 0.3f}, {0.2f, 0.2f, 0.2f}};

    ExperimentConfig back = config_from_json(to_json(cfg));
    CHECK(back == cfg);

    ExperimentConfig other = cfg;
    other.regularizer.replace_block.threshold_ratio = 0.20f;
    CHECK_FALSE(back == other);
}

TEST_CASE("run_experiment smoke: one epoch, csv, config, checkpoint, heatmaps") {
    TempDir tmp("rb_exp_smoke");
    ExperimentConfig cfg = tiny_config((tmp.path / "run").string());
    RunResult r = run_experiment(cfg);
    REQUIRE(r.records.size() == 1);

    const std::string csv = slurp(tmp.path / "run" / "metrics.csv");
    CHECK(csv.rfind("epoch,train_loss,train_top1,test_top1,lr\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 2); // header + 1 row

    CHECK(fs::exists(tmp.path / "run" / "config.json"));
    CHECK(fs::exists(tmp.path / "run" / "model.ckpt"));
    int pgms = 0;
    for (const auto& e : fs::directory_iterator(tmp.path / "run" / "heatmaps"))
        pgms += e.path().extension() == ".pgm";
    CHECK(pgms == 8);

    // resolved config round-trips and echoes the normalization constants
    ExperimentConfig resolved =
        load_config_file((tmp.path / "run" / "config.json").string());
    REQUIRE(resolved.normalization.has_value());
    CHECK(resolved.normalization->mean.size() == 3);
    ExperimentConfig reparsed = config_from_json(to_json(resolved));
    CHECK(reparsed == resolved);
}

TEST_CASE("identical config and seed reproduce metrics.csv bitwise") {
    TempDir tmp("rb_exp_det");
    ExperimentConfig a = tiny_config((tmp.path / "a").string());
    a.train.epochs = 2;
    ExperimentConfig b = a;
    b.out_dir = (tmp.path / "b").string();
    run_experiment(a);
    run_experiment(b);
    CHECK(slurp(tmp.path / "a" / "metrics.csv") == slurp(tmp.path / "b" / "metrics.csv"));
}

TEST_CASE("missing dataset is rejected") {
    ExperimentConfig cfg;
    cfg.dataset.type = "cifar10";
    cfg.dataset.dir = "/nonexistent/cifar/path";
    CHECK_THROWS(run_experiment(cfg));
    cfg.dataset.type = "weird";
    CHECK_THROWS_AS(run_experiment(cfg), std::invalid_argument);
}

TEST_CASE("compare_runs summarizes and recomputes from csv") {
    TempDir tmp("rb_exp_cmp");
    ExperimentConfig a = tiny_config((tmp.path / "a").string());
    ExperimentConfig b = tiny_config((tmp.path / "b").string());
    run_experiment(a);
    run_experiment(b);

    const std::string table =
        compare_runs({a.out_dir, b.out_dir}, (tmp.path / "cmp.csv").string());
    CHECK(table.find("delta") != std::string::npos);

    // identical runs -> delta 0.00
    const std::string csv = slurp(tmp.path / "cmp.csv");
    std::stringstream ss(csv);
    std::string line;
    std::getline(ss, line); // header
    std::getline(ss, line);
    CHECK(line.substr(line.rfind(',') + 1) == "0");
    std::getline(ss, line);
    CHECK(std::stof(line.substr(line.rfind(',') + 1)) == doctest::Approx(0.0f));

    // summary equals the last row of each metrics.csv
    auto sums = summarize_runs({a.out_dir});
    const std::string am = slurp(tmp.path / "a" / "metrics.csv");
    const std::size_t last_nl = am.rfind('\n', am.size() - 2);
    std::stringstream row(am.substr(last_nl + 1));
    std::string tok;
    std::vector<std::string> cols;
    while (std::getline(row, tok, ',')) cols.push_back(tok);
    CHECK(sums[0].final_top1 == doctest::Approx(std::stof(cols[3])));

    CHECK_THROWS_AS(compare_runs({a.out_dir}, ""), std::invalid_argument);

    // incomplete runs are flagged and excluded
    fs::create_directories(tmp.path / "empty");
    auto with_empty = summarize_runs({(tmp.path / "empty").string(), a.out_dir});
    CHECK_FALSE(with_empty[0].complete);
    CHECK(with_empty[1].complete);
}

TEST_CASE("sweep presets emit sibling runs") {
    TempDir tmp("rb_exp_sweep");
    ExperimentConfig base = tiny_config("");
    base.dataset.synthetic_train = 64;
    base.dataset.synthetic_test = 16;
    auto dirs = run_sweep("threshold-sweep", base, (tmp.path / "ts").string());
    REQUIRE(dirs.size() == 3);
    for (const std::string& d : dirs) CHECK(fs::exists(fs::path(d) / "metrics.csv"));

    // each sibling pins its own threshold in config.json
    std::vector<float> expect{0.05f, 0.20f, 0.60f};
    for (std::size_t i = 0; i < 3; ++i) {
        ExperimentConfig c = load_config_file((fs::path(dirs[i]) / "config.json").string());
        CHECK(c.regularizer.kind == RegKind::replace_block);
        CHECK(c.regularizer.replace_block.threshold_ratio == doctest::Approx(expect[i]));
    }
    CHECK(fs::exists(tmp.path / "ts" / "summary.csv"));

    CHECK_THROWS_AS(run_sweep("bogus", base, (tmp.path / "x").string()),
                    std::invalid_argument);
}
