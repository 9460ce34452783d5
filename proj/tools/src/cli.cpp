#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "changebind/checkpoint.hpp"
#include "changebind/config.hpp"
#include "changebind/dataset.hpp"
#include "changebind/gradcheck_suite.hpp"
#include "changebind/metrics.hpp"
#include "changebind/synth.hpp"
#include "changebind/trainer.hpp"

namespace changebind::cli {

namespace fs = std::filesystem;

namespace {

struct CommonOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string data;
};

void add_common(CLI::App* cmd, CommonOptions& c) {
    cmd->add_option("--config", c.config, "JSON run configuration")->check(CLI::ExistingFile);
    cmd->add_option("--seed", c.seed, "Seed for initialization, shuffling and synthesis");
    cmd->add_option("--out", c.out, "Output directory");
    cmd->add_option("--data", c.data, "Dataset root containing <split>/{A,B,label}");
}

RunConfig resolve(const CommonOptions& c) {
    RunConfig cfg = c.config.empty() ? run_config_from_json(nlohmann::json::object()) : load_run_config(c.config);
    if (c.seed) {
        cfg.seed = *c.seed;
        cfg.train.seed = *c.seed;
    }
    if (!c.out.empty()) {
        cfg.out_dir = c.out;
    }
    if (!c.data.empty()) {
        cfg.data.root = c.data;
    }
    return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream f(path, std::ios::trunc);
    if (!f) {
        throw IoError(fmt::format("cannot write {}", path.string()));
    }
    f << text;
}

void write_echo(const RunConfig& cfg) {
    cfg.validate();
    write_text(cfg.out_dir / "config.echo", to_json(cfg).dump(2) + "\n");
}

std::string metrics_json_line(const std::string& split, std::size_t n, const ConfusionCounts& c) {
    const Scores s = scores(c);
    nlohmann::json j{{"split", split}, {"n_images", n}, {"tp", c.tp},   {"fp", c.fp},   {"fn", c.fn},
                     {"tn", c.tn},     {"f1", s.f1},     {"iou", s.iou}, {"oa", s.oa}};
    return j.dump() + "\n";
}

// synth

struct SynthOptions {
    std::optional<int> n, size, shapes;
    std::optional<double> change_fraction, jitter, noise;
    std::optional<std::string> split;
};

int cmd_synth(const CommonOptions& common, const SynthOptions& o, std::ostream& out) {
    RunConfig cfg = resolve(common);
    if (o.n) cfg.synth.n = *o.n;
    if (o.size) cfg.synth.size = *o.size;
    if (o.shapes) cfg.synth.shapes_per_image = *o.shapes;
    if (o.change_fraction) cfg.synth.change_fraction = *o.change_fraction;
    if (o.jitter) cfg.synth.jitter = *o.jitter;
    if (o.noise) cfg.synth.noise = *o.noise;
    if (o.split) cfg.synth.split = *o.split;
    // The generated dataset lands in the output directory, or in data.root
    // when no --out is given.
    if (common.out.empty()) {
        cfg.out_dir = cfg.data.root;
    }
    cfg.data.root = cfg.out_dir;
    write_echo(cfg);
    synth_generate(cfg.synth, cfg.seed, cfg.out_dir);
    nlohmann::json report{{"split", cfg.synth.split}, {"n", cfg.synth.n}, {"size", cfg.synth.size},
                          {"seed", cfg.seed}};
    write_text(cfg.out_dir / "report", report.dump() + "\n");
    fmt::print(out, "wrote {} pairs of {}x{} to {}\n", cfg.synth.n, cfg.synth.size, cfg.synth.size,
               (cfg.out_dir / cfg.synth.split).string());
    return exit_ok;
}

// train

struct TrainFlags {
    std::optional<int> epochs, batch_size, checkpoint_every;
    std::optional<double> lr;
    std::optional<std::string> split, val_split;
};

void apply_train_flags(RunConfig& cfg, const TrainFlags& f) {
    if (f.epochs) cfg.train.epochs = *f.epochs;
    if (f.batch_size) cfg.train.batch_size = *f.batch_size;
    if (f.checkpoint_every) cfg.train.checkpoint_every = *f.checkpoint_every;
    if (f.lr) cfg.train.lr0 = *f.lr;
    if (f.split) cfg.data.train_split = *f.split;
    if (f.val_split) cfg.data.val_split = *f.val_split;
}

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
    cmd->add_option("--epochs", f.epochs, "Training epochs");
    cmd->add_option("--lr", f.lr, "Initial learning rate");
    cmd->add_option("--batch-size", f.batch_size, "Mini-batch size");
    cmd->add_option("--checkpoint-every", f.checkpoint_every, "Checkpoint period in epochs (0: final only)");
    cmd->add_option("--split", f.split, "Training split");
    cmd->add_option("--val-split", f.val_split, "Validation split evaluated after every epoch");
}

int cmd_train(const CommonOptions& common, const TrainFlags& flags, bool quiet, std::ostream& out) {
    RunConfig cfg = resolve(common);
    apply_train_flags(cfg, flags);
    write_echo(cfg);
    const Dataset data = load_dataset(cfg.data.root, cfg.data.train_split);
    std::optional<Dataset> val;
    if (!cfg.data.val_split.empty()) {
        val = load_dataset(cfg.data.root, cfg.data.val_split);
    }
    ChangeBindModel model(cfg.model, cfg.seed);
    TrainOptions options;
    options.out_dir = cfg.out_dir;
    options.val = val ? &*val : nullptr;
    if (!quiet) {
        options.on_epoch = [&](const EpochRecord& r) {
            fmt::print(out, "epoch {:4d} lr={:.3e} loss={:.6f}", r.epoch, r.lr, r.loss);
            if (r.val) {
                const Scores s = scores(*r.val);
                fmt::print(out, " val_f1={:.4f} val_iou={:.4f} val_oa={:.4f}", s.f1, s.iou, s.oa);
            }
            fmt::print(out, "\n");
            out.flush();
        };
    }
    const TrainReport report = train(model, data, cfg.train, options);
    out << format_metrics_report(cfg.data.train_split, static_cast<std::int64_t>(data.size()), report.final_train)
        << "\n";
    return exit_ok;
}

// eval / predict

struct EvalOptions {
    std::string checkpoint;
    std::string pred;
    std::optional<std::string> split;
};

int cmd_eval(const CommonOptions& common, const EvalOptions& o, std::ostream& out) {
    if (o.checkpoint.empty() == o.pred.empty()) {
        throw UsageError("eval needs exactly one of --checkpoint or --pred");
    }
    RunConfig cfg = resolve(common);
    if (o.split) cfg.data.train_split = *o.split;
    const std::string split = cfg.data.train_split;
    write_echo(cfg);
    const Dataset data = load_dataset(cfg.data.root, split);
    ConfusionCounts counts;
    if (!o.checkpoint.empty()) {
        ChangeBindModel model(cfg.model, cfg.seed);
        load_parameters(o.checkpoint, model.parameters());
        counts = evaluate(model, data, cfg.train.batch_size);
    } else {
        for (const auto& sample : data) {
            const BinaryMask pred = read_mask_png(fs::path(o.pred) / (sample.id + ".png"));
            if (pred.shape() != sample.label.shape()) {
                throw DataError(fmt::format("prediction {} is {} but the label is {}", sample.id,
                                            shape_string(pred.shape()), shape_string(sample.label.shape())));
            }
            counts += confusion(pred, sample.label);
        }
    }
    write_text(cfg.out_dir / "report", metrics_json_line(split, data.size(), counts));
    out << format_metrics_report(split, static_cast<std::int64_t>(data.size()), counts) << "\n";
    return exit_ok;
}

int cmd_predict(const CommonOptions& common, const EvalOptions& o, std::ostream& out) {
    RunConfig cfg = resolve(common);
    if (o.split) cfg.data.train_split = *o.split;
    write_echo(cfg);
    const Dataset data = load_dataset(cfg.data.root, cfg.data.train_split);
    ChangeBindModel model(cfg.model, cfg.seed);
    load_parameters(o.checkpoint, model.parameters());
    std::vector<BinaryMask> predictions;
    evaluate(model, data, cfg.train.batch_size, &predictions);
    nlohmann::json ids = nlohmann::json::array();
    for (std::size_t i = 0; i < data.size(); ++i) {
        write_mask_png(cfg.out_dir / (data[i].id + ".png"), predictions[i]);
        ids.push_back(data[i].id);
    }
    nlohmann::json report{{"split", cfg.data.train_split}, {"n_images", data.size()}, {"masks", ids}};
    write_text(cfg.out_dir / "report", report.dump() + "\n");
    fmt::print(out, "wrote {} masks to {}\n", data.size(), cfg.out_dir.string());
    return exit_ok;
}

// gradcheck

struct GradcheckFlags {
    int seeds = 3;
    std::optional<std::int64_t> probes;
    bool skip_model = false;
};

int cmd_gradcheck(const CommonOptions& common, const GradcheckFlags& f, std::ostream& out) {
    RunConfig cfg = resolve(common);
    write_echo(cfg);
    if (f.seeds < 1) {
        throw ConfigError("--seeds must be >= 1");
    }
    GradCheckSuiteOptions options;
    options.seeds.clear();
    for (int i = 0; i < f.seeds; ++i) {
        options.seeds.push_back(cfg.seed + static_cast<std::uint64_t>(i));
    }
    if (f.probes) {
        options.layer_probes = *f.probes;
    }
    options.include_model = !f.skip_model;
    std::string report;
    bool ok = true;
    fmt::print(out, "{:<52} {:>12} {:>9} {:>7}  {}\n", "layer", "max_rel_err", "tol", "probes", "status");
    run_gradcheck_suite(options, [&](const GradCheckEntry& e) {
        ok = ok && e.passed();
        fmt::print(out, "{:<52} {:>12.3e} {:>9.0e} {:>7}  {}\n", e.name, e.max_rel_error, e.tolerance, e.probes,
                   e.passed() ? "PASS" : "FAIL");
        out.flush();
        report += nlohmann::json{{"layer", e.name},
                                 {"max_rel_error", e.max_rel_error},
                                 {"tolerance", e.tolerance},
                                 {"probes", e.probes},
                                 {"worst_tensor", e.worst_tensor},
                                 {"passed", e.passed()}}
                      .dump() +
                  "\n";
    });
    write_text(cfg.out_dir / "report", report);
    if (!ok) {
        throw NumericError("gradient check failed; see report");
    }
    return exit_ok;
}

// ablate

struct AblationResult {
    std::string label;
    ConfusionCounts counts;
};

std::string ablation_table(const std::vector<AblationResult>& rows) {
    std::string t = "| Method | F1 | OA | IoU |\n|---|---|---|---|\n";
    for (const auto& r : rows) {
        const Scores s = scores(r.counts);
        t += fmt::format("| {} | {:.2f} | {:.2f} | {:.2f} |\n", r.label, 100 * s.f1, 100 * s.oa, 100 * s.iou);
    }
    return t;
}

int cmd_ablate(const CommonOptions& common, const TrainFlags& flags, std::ostream& out) {
    RunConfig cfg = resolve(common);
    apply_train_flags(cfg, flags);
    if (common.data.empty()) {
        cfg.data.root = cfg.out_dir / "data";
        cfg.synth.split = cfg.data.train_split;
        synth_generate(cfg.synth, cfg.seed, cfg.data.root);
    }
    write_echo(cfg);
    const Dataset data = load_dataset(cfg.data.root, cfg.data.train_split);
    std::optional<Dataset> val;
    if (!cfg.data.val_split.empty()) {
        val = load_dataset(cfg.data.root, cfg.data.val_split);
    }
    const Dataset& scored = val ? *val : data;
    const std::string scored_split = val ? cfg.data.val_split : cfg.data.train_split;

    std::vector<AblationResult> results;
    std::string report;
    int index = 0;
    for (const auto& row : ablation_rows()) {
        RunConfig row_cfg = cfg;
        row_cfg.model.encoder.flags = row.flags;
        row_cfg.out_dir = cfg.out_dir / fmt::format("row{}", index++);
        write_echo(row_cfg);
        ChangeBindModel model(row_cfg.model, row_cfg.seed);
        TrainOptions options;
        options.out_dir = row_cfg.out_dir;
        train(model, data, row_cfg.train, options);
        const ConfusionCounts counts = evaluate(model, scored, row_cfg.train.batch_size);
        results.push_back({row.label, counts});
        const Scores s = scores(counts);
        fmt::print(out, "{:<36} f1={:.4f} oa={:.4f} iou={:.4f}\n", row.label, s.f1, s.oa, s.iou);
        out.flush();
        nlohmann::json j{{"row", row.label},
                         {"use_msf", row.flags.use_msf},
                         {"use_cce", row.flags.use_cce},
                         {"use_ace", row.flags.use_ace},
                         {"use_baseline", row.flags.use_baseline},
                         {"split", scored_split},
                         {"tp", counts.tp},
                         {"fp", counts.fp},
                         {"fn", counts.fn},
                         {"tn", counts.tn},
                         {"f1", s.f1},
                         {"oa", s.oa},
                         {"iou", s.iou}};
        report += j.dump() + "\n";
    }
    const std::string table = ablation_table(results);
    write_text(cfg.out_dir / "report", report);
    write_text(cfg.out_dir / "table.md", table);
    out << "\n" << table;
    return exit_ok;
}

std::string one_line(std::string msg) {
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    return msg;
}

int exit_code_for(ErrorCategory category) {
    switch (category) {
    case ErrorCategory::data:
    case ErrorCategory::io:
        return exit_data;
    case ErrorCategory::numeric:
        return exit_numeric;
    default:
        return exit_config;
    }
}

} // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Bi-temporal change detection: synthesis, training, evaluation and checks", "changebind"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Help for every subcommand");

    CommonOptions common;
    SynthOptions synth;
    TrainFlags train_flags;
    EvalOptions eval;
    GradcheckFlags gc;
    bool quiet = false;

    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic bi-temporal dataset");
    add_common(synth_cmd, common);
    synth_cmd->add_option("--n", synth.n, "Number of pairs");
    synth_cmd->add_option("--size", synth.size, "Image side in pixels (multiple of 32)");
    synth_cmd->add_option("--shapes", synth.shapes, "Shapes per image");
    synth_cmd->add_option("--change-fraction", synth.change_fraction, "Fraction of shapes added or removed");
    synth_cmd->add_option("--jitter", synth.jitter, "Global brightness jitter amplitude");
    synth_cmd->add_option("--noise", synth.noise, "Per-pixel noise standard deviation");
    synth_cmd->add_option("--split", synth.split, "Split directory name");

    auto* train_cmd = app.add_subcommand("train", "Train a model and write checkpoints and a per-epoch report");
    add_common(train_cmd, common);
    add_train_flags(train_cmd, train_flags);
    train_cmd->add_flag("--quiet", quiet, "Do not print per-epoch lines");

    auto* eval_cmd = app.add_subcommand("eval", "Print F1/IoU/OA for a checkpoint or a directory of predicted masks");
    add_common(eval_cmd, common);
    eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint to evaluate");
    eval_cmd->add_option("--pred", eval.pred, "Directory of <id>.png masks (0/255)");
    eval_cmd->add_option("--split", eval.split, "Split to score");

    auto* predict_cmd = app.add_subcommand("predict", "Write 0/255 change masks for a split");
    add_common(predict_cmd, common);
    predict_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint to load")->required();
    predict_cmd->add_option("--split", eval.split, "Split to predict");

    auto* gc_cmd = app.add_subcommand("gradcheck", "64-bit finite-difference check of every layer and the model");
    add_common(gc_cmd, common);
    gc_cmd->add_option("--seeds", gc.seeds, "Number of seeds, starting at --seed")->capture_default_str();
    gc_cmd->add_option("--probes", gc.probes, "Elements probed per tensor in the layer checks");
    gc_cmd->add_flag("--skip-model", gc.skip_model, "Only run the per-layer checks");

    auto* ablate_cmd = app.add_subcommand("ablate", "Train the five ablation variants and print a comparison table");
    add_common(ablate_cmd, common);
    add_train_flags(ablate_cmd, train_flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return exit_ok;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        err << "error[usage]: " << one_line(e.what()) << "\n";
        return exit_config;
    }

    try {
        if (synth_cmd->parsed()) return cmd_synth(common, synth, out);
        if (train_cmd->parsed()) return cmd_train(common, train_flags, quiet, out);
        if (eval_cmd->parsed()) return cmd_eval(common, eval, out);
        if (predict_cmd->parsed()) return cmd_predict(common, eval, out);
        if (gc_cmd->parsed()) return cmd_gradcheck(common, gc, out);
        if (ablate_cmd->parsed()) return cmd_ablate(common, train_flags, out);
    } catch (const Error& e) {
        err << "error[" << to_string(e.category()) << "]: " << one_line(e.what()) << "\n";
        return exit_code_for(e.category());
    } catch (const fs::filesystem_error& e) {
        err << "error[io]: " << one_line(e.what()) << "\n";
        return exit_data;
    }
    return exit_config;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    std::vector<const char*> argv;
    argv.push_back("changebind");
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

} // namespace changebind::cli
