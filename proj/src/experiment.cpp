#include "rb/experiment.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <functional>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;
using nlohmann::json;

namespace rb {

namespace {

std::string sampling_name(SamplingMode m) {
    return m == SamplingMode::rr_sm ? "rr_sm" : "uniform";
}
SamplingMode sampling_from(const std::string& s) {
    if (s == "rr_sm") return SamplingMode::rr_sm;
    if (s == "uniform") return SamplingMode::uniform;
    throw std::invalid_argument("unknown sampling mode: " + s);
}
std::string schedule_name(Schedule s) {
    return s == Schedule::all_time ? "all_time" : "alternate";
}
Schedule schedule_from(const std::string& s) {
    if (s == "all_time") return Schedule::all_time;
    if (s == "alternate") return Schedule::alternate;
    throw std::invalid_argument("unknown schedule: " + s);
}
RegKind kind_from(const std::string& s) {
    if (s == "none") return RegKind::none;
    if (s == "replace_block") return RegKind::replace_block;
    if (s == "drop_block") return RegKind::drop_block;
    if (s == "spatial_dropout") return RegKind::spatial_dropout;
    if (s == "dropout") return RegKind::dropout;
    if (s == "cutout") return RegKind::cutout;
    throw std::invalid_argument("unknown regularizer kind: " + s);
}

} // namespace

std::string regularizer_kind_name(RegKind k) {
    switch (k) {
        case RegKind::none: return "none";
        case RegKind::replace_block: return "replace_block";
        case RegKind::drop_block: return "drop_block";
        case RegKind::spatial_dropout: return "spatial_dropout";
        case RegKind::dropout: return "dropout";
        case RegKind::cutout: return "cutout";
    }
    return "unknown";
}

bool ExperimentConfig::operator==(const ExperimentConfig& o) const {
    auto reg_eq = [](const RegularizerConfig& a, const RegularizerConfig& b) {
        return a.kind == b.kind && a.keep_prob == b.keep_prob && a.block_size == b.block_size &&
               a.cutout_size == b.cutout_size &&
               a.replace_block.keep_prob == b.replace_block.keep_prob &&
               a.replace_block.block_size == b.replace_block.block_size &&
               a.replace_block.threshold_ratio == b.replace_block.threshold_ratio &&
               a.replace_block.sampling_mode == b.replace_block.sampling_mode &&
               a.replace_block.schedule == b.replace_block.schedule &&
               a.replace_block.shuffle == b.replace_block.shuffle;
    };
    auto train_eq = [](const TrainConfig& a, const TrainConfig& b) {
        return a.lr0 == b.lr0 && a.momentum == b.momentum && a.weight_decay == b.weight_decay &&
               a.epochs == b.epochs && a.batch_size == b.batch_size && a.seed == b.seed;
    };
    auto norm_eq = [](const std::optional<NormStats>& a, const std::optional<NormStats>& b) {
        if (a.has_value() != b.has_value()) return false;
        return !a || (a->mean == b->mean && a->std == b->std);
    };
    return dataset == o.dataset && train_eq(train, o.train) &&
           reg_eq(regularizer, o.regularizer) && out_dir == o.out_dir &&
           eval_every == o.eval_every && norm_eq(normalization, o.normalization);
}

std::string to_json(const ExperimentConfig& cfg) {
    json j;
    j["dataset"] = {{"type", cfg.dataset.type},
                    {"dir", cfg.dataset.dir},
                    {"subset_size", cfg.dataset.subset_size},
                    {"test_subset_size", cfg.dataset.test_subset_size},
                    {"synthetic_train", cfg.dataset.synthetic_train},
                    {"synthetic_test", cfg.dataset.synthetic_test}};
    j["train"] = {{"lr0", cfg.train.lr0},
                  {"momentum", cfg.train.momentum},
                  {"weight_decay", cfg.train.weight_decay},
                  {"epochs", cfg.train.epochs},
                  {"batch_size", cfg.train.batch_size},
                  {"seed", cfg.train.seed}};
    const RegularizerConfig& r = cfg.regularizer;
    j["regularizer"] = {{"kind", regularizer_kind_name(r.kind)},
                        {"keep_prob", r.keep_prob},
                        {"block_size", r.block_size},
                        {"cutout_size", r.cutout_size},
                        {"replace_block",
                         {{"keep_prob", r.replace_block.keep_prob},
                          {"block_size", r.replace_block.block_size},
                          {"threshold_ratio", r.replace_block.threshold_ratio},
                          {"sampling", sampling_name(r.replace_block.sampling_mode)},
                          {"schedule", schedule_name(r.replace_block.schedule)},
                          {"shuffle", r.replace_block.shuffle}}}};
    j["out_dir"] = cfg.out_dir;
    j["eval_every"] = cfg.eval_every;
    if (cfg.normalization)
        j["normalization"] = {{"mean", cfg.normalization->mean},
                              {"std", cfg.normalization->std}};
    return j.dump(2);
}

ExperimentConfig config_from_json(const std::string& text) {
    json j = json::parse(text);
    ExperimentConfig cfg;
    if (j.contains("dataset")) {
        const json& d = j["dataset"];
        cfg.dataset.type = d.value("type", cfg.dataset.type);
        cfg.dataset.dir = d.value("dir", cfg.dataset.dir);
        cfg.dataset.subset_size = d.value("subset_size", cfg.dataset.subset_size);
        cfg.dataset.test_subset_size = d.value("test_subset_size", cfg.dataset.test_subset_size);
        cfg.dataset.synthetic_train = d.value("synthetic_train", cfg.dataset.synthetic_train);
        cfg.dataset.synthetic_test = d.value("synthetic_test", cfg.dataset.synthetic_test);
    }
    if (j.contains("train")) {
        const json& t = j["train"];
        cfg.train.lr0 = t.value("lr0", cfg.train.lr0);
        cfg.train.momentum = t.value("momentum", cfg.train.momentum);
        cfg.train.weight_decay = t.value("weight_decay", cfg.train.weight_decay);
        cfg.train.epochs = t.value("epochs", cfg.train.epochs);
        cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
        cfg.train.seed = t.value("seed", cfg.train.seed);
    }
    if (j.contains("regularizer")) {
        const json& r = j["regularizer"];
        cfg.regularizer.kind = kind_from(r.value("kind", "none"));
        cfg.regularizer.keep_prob = r.value("keep_prob", cfg.regularizer.keep_prob);
        cfg.regularizer.block_size = r.value("block_size", cfg.regularizer.block_size);
        cfg.regularizer.cutout_size = r.value("cutout_size", cfg.regularizer.cutout_size);
        if (r.contains("replace_block")) {
            const json& rb = r["replace_block"];
            ReplaceBlockConfig& c = cfg.regularizer.replace_block;
            c.keep_prob = rb.value("keep_prob", c.keep_prob);
            c.block_size = rb.value("block_size", c.block_size);
            c.threshold_ratio = rb.value("threshold_ratio", c.threshold_ratio);
            c.sampling_mode = sampling_from(rb.value("sampling", sampling_name(c.sampling_mode)));
            c.schedule = schedule_from(rb.value("schedule", schedule_name(c.schedule)));
            c.shuffle = rb.value("shuffle", c.shuffle);
        }
    }
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
    cfg.eval_every = j.value("eval_every", cfg.eval_every);
    if (j.contains("normalization")) {
        NormStats st;
        st.mean = j["normalization"]["mean"].get<std::vector<float>>();
        st.std = j["normalization"]["std"].get<std::vector<float>>();
        cfg.normalization = st;
    }
    return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return config_from_json(ss.str());
}

float RunResult::final_test_top1() const {
    return records.empty() ? 0.0f : records.back().test_top1;
}

float RunResult::best_test_top1() const {
    float best = 0.0f;
    for (const RunRecord& r : records) best = std::max(best, r.test_top1);
    return best;
}

namespace {

SplitDataset resolve_dataset(const DatasetSpec& spec) {
    SplitDataset ds;
    if (spec.type == "cifar10") {
        ds = load_cifar10(spec.dir);
    } else if (spec.type == "mnist") {
        ds.train = load_mnist_idx((fs::path(spec.dir) / "train-images-idx3-ubyte").string(),
                                  (fs::path(spec.dir) / "train-labels-idx1-ubyte").string());
        ds.test = load_mnist_idx((fs::path(spec.dir) / "t10k-images-idx3-ubyte").string(),
                                 (fs::path(spec.dir) / "t10k-labels-idx1-ubyte").string());
        ds.train.channels = ds.test.channels = 1;
    } else if (spec.type == "synthetic") {
        ds.train = make_synthetic_dataset(spec.synthetic_train, 9000);
        ds.test = make_synthetic_dataset(spec.synthetic_test, 9001);
    } else {
        throw std::invalid_argument("unknown dataset type: " + spec.type);
    }
    auto truncate = [](Dataset& d, int n) {
        if (n > 0 && static_cast<std::size_t>(n) < d.samples.size()) d.samples.resize(n);
    };
    truncate(ds.train, spec.subset_size);
    truncate(ds.test, spec.test_subset_size);
    ds.test.channels = ds.train.channels =
        ds.train.samples.empty() ? 3 : ds.train.samples[0].pixels.shape().c;
    return ds;
}

void export_probe_heatmaps(MiniCnn& model, const Dataset& test, const NormStats& stats,
                           const std::string& dir, int epoch) {
    const int probes = std::min<std::size_t>(8, test.samples.size());
    if (probes == 0) return;
    fs::create_directories(dir);
    std::vector<std::size_t> idx(probes);
    for (int i = 0; i < probes; ++i) idx[i] = i;
    Batch b = make_batch(test, idx, false, &stats, 0, 0);
    auto [f2, f3] = model.forward_backbone(b.x, false);
    std::vector<AttentionMap> cams =
        compute_cam(f3, model.classifier_weights(), model.num_classes(), b.labels);
    for (int i = 0; i < probes; ++i) {
        std::ostringstream name;
        name << "epoch" << std::setw(3) << std::setfill('0') << epoch << "_img" << i << ".pgm";
        export_heatmap(cams[i], (fs::path(dir) / name.str()).string());
    }
}

} // namespace

RunResult run_experiment(ExperimentConfig cfg) {
    SplitDataset ds = resolve_dataset(cfg.dataset);
    NormStats stats = compute_norm_stats(ds.train);
    cfg.normalization = stats;

    fs::create_directories(cfg.out_dir);
    {
        std::ofstream f(fs::path(cfg.out_dir) / "config.json");
        if (!f) throw std::runtime_error("unwritable output dir: " + cfg.out_dir);
        f << to_json(cfg) << "\n";
    }

    const int channels = ds.train.samples[0].pixels.shape().c;
    MiniCnn model(channels, ds.train.num_classes, cfg.train.seed);
    SgdMomentum opt(cfg.train.momentum, cfg.train.weight_decay);

    BatchIterator probe(ds.train.samples.size(), cfg.train.batch_size, cfg.train.seed, 0);
    TrainState state;
    state.total_steps = cfg.train.epochs * static_cast<int>(probe.num_batches());

    std::ofstream csv(fs::path(cfg.out_dir) / "metrics.csv");
    if (!csv) throw std::runtime_error("unwritable output dir: " + cfg.out_dir);
    csv << "epoch,train_loss,train_top1,test_top1,lr\n";

    RunResult result;
    result.out_dir = cfg.out_dir;
    for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
        const bool do_eval =
            !ds.test.samples.empty() &&
            ((epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.train.epochs);
        RunRecord rec = train_epoch(model, ds.train, ds.test, opt, cfg.train,
                                    cfg.regularizer, &stats, epoch, state, do_eval);
        csv << rec.epoch << "," << std::setprecision(8) << rec.train_loss << ","
            << rec.train_top1 << "," << rec.test_top1 << "," << rec.lr << "\n";
        csv.flush();
        result.records.push_back(rec);
        if (do_eval)
            export_probe_heatmaps(model, ds.test, stats,
                                  (fs::path(cfg.out_dir) / "heatmaps").string(), epoch);
    }
    model.save_checkpoint((fs::path(cfg.out_dir) / "model.ckpt").string());
    return result;
}

std::vector<RunSummary> summarize_runs(const std::vector<std::string>& dirs) {
    std::vector<RunSummary> out;
    for (const std::string& dir : dirs) {
        RunSummary s;
        s.dir = dir;
        std::ifstream f(fs::path(dir) / "metrics.csv");
        std::string line;
        bool header = true;
        while (f && std::getline(f, line)) {
            if (header) {
                header = false;
                continue;
            }
            std::stringstream ss(line);
            std::string tok;
            std::vector<std::string> cols;
            while (std::getline(ss, tok, ',')) cols.push_back(tok);
            if (cols.size() != 5) continue;
            const float t1 = std::stof(cols[3]);
            s.final_top1 = t1;
            s.best_top1 = std::max(s.best_top1, t1);
            s.complete = true;
        }
        out.push_back(s);
    }
    return out;
}

std::string compare_runs(const std::vector<std::string>& dirs, const std::string& csv_out) {
    if (dirs.size() < 2)
        throw std::invalid_argument("compare_runs: at least two run directories required");
    std::vector<RunSummary> sums = summarize_runs(dirs);
    const RunSummary* ref = nullptr;
    for (const RunSummary& s : sums)
        if (s.complete) {
            ref = &s;
            break;
        }
    std::ostringstream text, csv;
    csv << "run,final_top1,best_top1,delta_final_vs_first\n";
    text << std::left << std::setw(40) << "run" << std::right << std::setw(12) << "final"
         << std::setw(12) << "best" << std::setw(12) << "delta" << "\n";
    for (const RunSummary& s : sums) {
        if (!s.complete) {
            text << std::left << std::setw(40) << s.dir << "  (incomplete, excluded)\n";
            continue;
        }
        const float delta = ref ? s.final_top1 - ref->final_top1 : 0.0f;
        text << std::left << std::setw(40) << s.dir << std::right << std::fixed
             << std::setprecision(2) << std::setw(12) << s.final_top1 << std::setw(12)
             << s.best_top1 << std::setw(12) << std::showpos << delta << std::noshowpos << "\n";
        csv << s.dir << "," << s.final_top1 << "," << s.best_top1 << "," << delta << "\n";
    }
    if (!csv_out.empty()) {
        std::ofstream f(csv_out);
        f << csv.str();
    }
    return text.str();
}

std::vector<std::string> run_sweep(const std::string& preset, ExperimentConfig base,
                                   const std::string& out_root) {
    struct Variant {
        std::string name;
        std::function<void(ExperimentConfig&)> tweak;
    };
    std::vector<Variant> variants;

    auto rb_base = [](ExperimentConfig& c) {
        c.regularizer.kind = RegKind::replace_block;
    };
    if (preset == "threshold-sweep") {
        for (float t : {0.05f, 0.20f, 0.60f}) {
            std::ostringstream n;
            n << "threshold_" << std::fixed << std::setprecision(2) << t;
            variants.push_back({n.str(), [=](ExperimentConfig& c) {
                                    rb_base(c);
                                    c.regularizer.replace_block.threshold_ratio = t;
                                }});
        }
    } else if (preset == "sampling-ablation") {
        variants.push_back({"rr_sm", [=](ExperimentConfig& c) {
                                rb_base(c);
                                c.regularizer.replace_block.sampling_mode = SamplingMode::rr_sm;
                            }});
        variants.push_back({"uniform", [=](ExperimentConfig& c) {
                                rb_base(c);
                                c.regularizer.replace_block.sampling_mode = SamplingMode::uniform;
                            }});
    } else if (preset == "schedule-ablation") {
        variants.push_back({"all_time", [=](ExperimentConfig& c) {
                                rb_base(c);
                                c.regularizer.replace_block.schedule = Schedule::all_time;
                            }});
        variants.push_back({"alternate", [=](ExperimentConfig& c) {
                                rb_base(c);
                                c.regularizer.replace_block.schedule = Schedule::alternate;
                            }});
    } else if (preset == "baseline-grid") {
        variants.push_back({"baseline", [](ExperimentConfig& c) {
                                c.regularizer.kind = RegKind::none;
                            }});
        variants.push_back({"dropout", [](ExperimentConfig& c) {
                                c.regularizer.kind = RegKind::dropout;
                                c.regularizer.keep_prob = 0.7f;
                            }});
        variants.push_back({"spatial_dropout", [](ExperimentConfig& c) {
                                c.regularizer.kind = RegKind::spatial_dropout;
                                c.regularizer.keep_prob = 0.9f;
                            }});
        variants.push_back({"cutout", [](ExperimentConfig& c) {
                                c.regularizer.kind = RegKind::cutout;
                                c.regularizer.cutout_size = 8;
                            }});
        variants.push_back({"drop_block", [](ExperimentConfig& c) {
                                c.regularizer.kind = RegKind::drop_block;
                                c.regularizer.keep_prob = 0.9f;
                                c.regularizer.block_size = 3;
                            }});
        variants.push_back({"replace_block", rb_base});
    } else {
        throw std::invalid_argument("unknown sweep preset: " + preset);
    }

    std::vector<std::string> dirs;
    for (const Variant& v : variants) {
        ExperimentConfig cfg = base;
        v.tweak(cfg);
        cfg.out_dir = (fs::path(out_root) / v.name).string();
        run_experiment(cfg);
        dirs.push_back(cfg.out_dir);
    }
    if (dirs.size() >= 2)
        compare_runs(dirs, (fs::path(out_root) / "summary.csv").string());
    return dirs;
}

} // namespace rb
