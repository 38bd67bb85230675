// SPDX-License-Identifier: Apache-2.0
#include "symgrade/cli.hpp"

#include "symgrade/checkpoint.hpp"
#include "symgrade/data.hpp"
#include "symgrade/diagnostics.hpp"
#include "symgrade/errors.hpp"
#include "symgrade/metrics.hpp"
#include "symgrade/training.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>

namespace symgrade::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Raised for problems with a checkpoint file so callers can map them to
/// their own exit code.
class CheckpointProblem : public Error {
public:
    using Error::Error;
};

/// Flag values with an optional flat-JSON config file underneath them.
/// Precedence: explicit flag > config file > built-in default.
class FlagSet {
public:
    explicit FlagSet(CLI::App* app) : app_(app) {
        app_->add_option("--config", config_path_, "Flat JSON file of flag values (flags win)");
    }

    template <typename T>
    CLI::Option* add(const std::string& name, T& var, const std::string& help) {
        auto* opt = app_->add_option("--" + name, var, help)->capture_default_str();
        entries_.push_back({name, opt, [&var] { return json(var); }, [&var](const json& j) { var = j.get<T>(); }});
        return opt;
    }

    CLI::Option* flag(const std::string& name, bool& var, const std::string& help) {
        auto* opt = app_->add_flag("--" + name, var, help);
        entries_.push_back({name, opt, [&var] { return json(var); }, [&var](const json& j) { var = j.get<bool>(); }});
        return opt;
    }

    /// Fills unset flags from --config; unknown keys are usage errors.
    void apply_config_file() {
        if (config_path_.empty()) return;
        std::ifstream in(config_path_);
        if (!in) throw ConfigError("cannot read config file " + config_path_);
        json file;
        try {
            file = json::parse(in);
        } catch (const json::exception& e) {
            throw ConfigError("config file " + config_path_ + ": " + e.what());
        }
        if (!file.is_object()) throw ConfigError("config file must hold a flat JSON object");
        for (const auto& [key, value] : file.items()) {
            auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == key; });
            if (it == entries_.end()) throw ConfigError("unknown key '" + key + "' in " + config_path_);
            if (it->option->count() > 0) continue;
            try {
                it->set(value);
            } catch (const json::exception&) {
                throw ConfigError("bad value for '" + key + "' in " + config_path_);
            }
        }
    }

    json resolved() const {
        json j = json::object();
        for (const auto& e : entries_) j[e.name] = e.get();
        return j;
    }

private:
    struct Entry {
        std::string name;
        CLI::Option* option;
        std::function<json()> get;
        std::function<void(const json&)> set;
    };

    CLI::App* app_;
    std::string config_path_;
    std::vector<Entry> entries_;
};

void write_resolved(const json& resolved, const fs::path& dir) {
    std::ofstream out(dir / "config.json", std::ios::binary);
    if (!out) throw IoError("cannot write " + (dir / "config.json").string());
    out << resolved.dump(2) << '\n';
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

Checkpoint read_checkpoint(const fs::path& path) {
    try {
        return load_checkpoint(path);
    } catch (const Error& e) {
        throw CheckpointProblem(e.what());
    }
}

TrainState restore(const Checkpoint& ck, TrainConfig* cfg = nullptr) {
    try {
        return from_checkpoint(ck, cfg);
    } catch (const Error& e) {
        throw CheckpointProblem(e.what());
    }
}

std::vector<ImageSample> load_resized(const fs::path& root, std::size_t h, std::size_t w) {
    auto samples = load_image_folder(root);
    for (auto& s : samples) s = resize(s, h, w);
    return samples;
}

std::string fmt(double v, const char* spec = "%.17g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

void print_summary(const MetricsReport& r, std::ostream& out) {
    out << "samples\t" << r.samples << '\n'
        << "accuracy\t" << fmt(r.accuracy) << '\n'
        << "macro_precision\t" << fmt(r.macro_precision) << '\n'
        << "macro_recall\t" << fmt(r.macro_recall) << '\n'
        << "macro_f1\t" << fmt(r.macro_f1) << '\n'
        << "flip_consistency_rate\t" << fmt(r.flip_consistency_rate) << '\n';
}

void emit_all(const MetricsReport& r, const fs::path& dir) {
    emit_report(r, dir / "report.json", ReportFormat::json);
    emit_report(r, dir / "report.csv", ReportFormat::csv);
    write_confusion_csv(r.confusion, dir / "confusion.csv");
}

// --- generate ---

struct GenerateOptions {
    std::size_t n = 1000;
    std::size_t size = 32;
    double asymmetry = 0.5;
    double noise = 0.05;
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_generate(const GenerateOptions& o, const json& resolved, std::ostream& out) {
    SyntheticSpec spec{o.n, o.size, o.size, o.asymmetry, o.noise, o.seed};
    spec.validate();
    const auto samples = generate_synthetic(spec);
    const fs::path root(o.out);
    write_image_folder(samples, root);
    save_descriptions(default_descriptions(), root / "descriptions.tsv");
    write_resolved(resolved, root);
    out << "wrote " << samples.size() << " images to " << root.string() << '\n';
    return kOk;
}

// --- train ---

struct TrainOptions {
    TrainConfig train;
    SplitSpec split;
    std::size_t image_size = 32;
    std::size_t patch = 8;
    std::size_t hidden = 64;
    std::size_t embed_dim = 32;
    std::string data;
    std::string out;
    std::string descriptions;
    std::string resume;
    bool keep_epoch_checkpoints = false;
};

json split_json(const SplitSpec& s) {
    return {{"train_frac", s.train_frac}, {"val_frac", s.val_frac}, {"test_frac", s.test_frac},
            {"seed", s.seed},             {"stratified", s.stratified}};
}

SplitSpec split_from_json(const json& j) {
    SplitSpec s;
    s.train_frac = j.at("train_frac").get<double>();
    s.val_frac = j.at("val_frac").get<double>();
    s.test_frac = j.at("test_frac").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.stratified = j.at("stratified").get<bool>();
    return s;
}

int cmd_train(TrainOptions o, const json& resolved, std::ostream& out, std::ostream& err) {
    o.split.seed = o.train.seed;
    o.train.validate();
    o.split.validate();
    ModelConfig mc;
    mc.image_h = mc.image_w = o.image_size;
    mc.patch = o.patch;
    mc.hidden = o.hidden;
    mc.embed_dim = o.embed_dim;
    mc.temperature = o.train.temperature;
    mc.validate();

    const fs::path dir(o.out);
    ensure_dir(dir);
    write_resolved(resolved, dir);
    out << resolved.dump(2) << '\n';

    const auto descriptions = o.descriptions.empty() ? default_descriptions() : load_descriptions(o.descriptions);
    const auto samples = load_resized(o.data, o.image_size, o.image_size);
    const Split split = stratified_split(samples, o.split);
    for (int g : split.undersized_grades) {
        err << "warning: grade " << g << " has fewer than 3 samples; all placed in the training split\n";
    }
    if (split.train.empty()) throw ContractError("no training samples in " + o.data);

    TrainState state;
    std::vector<EpochLog> log;
    if (!o.resume.empty()) {
        state = restore(read_checkpoint(o.resume));
        if (state.params.config.image_h != o.image_size || state.params.config.image_w != o.image_size) {
            throw CheckpointProblem("checkpoint expects " + std::to_string(state.params.config.image_h) + "x" +
                                    std::to_string(state.params.config.image_w) + " images");
        }
        if (fs::exists(dir / "log.csv")) {
            for (const auto& row : read_log_csv(dir / "log.csv"))
                if (row.epoch <= state.epoch) log.push_back(row);
        }
    } else {
        state = initial_state(o.train, mc, descriptions, split.train);
    }

    const json extra = {{"split", split_json(o.split)}, {"image_size", o.image_size}};
    const fs::path last = dir / "last.ckpt";
    const fs::path best = dir / "best.ckpt";
    if (o.resume.empty()) {
        save_checkpoint(to_checkpoint(state, o.train, extra), last);
        if (o.train.epochs == 0) save_checkpoint(to_checkpoint(state, o.train, extra), best);
    }
    write_log_csv(log, dir / "log.csv");

    TrainHooks hooks;
    hooks.on_best = [&](const TrainState& s) { save_checkpoint(to_checkpoint(s, o.train, extra), best); };
    hooks.on_epoch = [&](const TrainState& s, const EpochLog& row) {
        const Checkpoint ck = to_checkpoint(s, o.train, extra);
        save_checkpoint(ck, last);
        if (o.keep_epoch_checkpoints) {
            char name[32];
            std::snprintf(name, sizeof name, "epoch_%03zu.ckpt", s.epoch);
            save_checkpoint(ck, dir / name);
        }
        log.push_back(row);
        write_log_csv(log, dir / "log.csv");
        out << "epoch " << row.epoch << " lr " << fmt(row.lr, "%.4g") << " l_total " << fmt(row.l_total, "%.6f")
            << " l_consistency " << fmt(row.l_consistency, "%.3g") << " val_accuracy "
            << fmt(row.val_accuracy, "%.4f") << " flip_consistency " << fmt(row.flip_consistency_rate, "%.4f")
            << '\n';
    };

    TrainResult result;
    try {
        result = train(split.train, split.val, o.train, std::move(state), hooks);
    } catch (const DivergenceError& e) {
        err << "error: " << e.what() << "\n"
            << "last finite state (epoch " << e.completed_epochs << ") kept in " << last.string() << '\n';
        return kDivergence;
    }
    if (!fs::exists(best)) save_checkpoint(to_checkpoint(result.state, o.train, extra), best);

    if (split.test.empty()) {
        err << "warning: test split is empty; no report written\n";
        return kOk;
    }
    const TrainState chosen = restore(read_checkpoint(best));
    const MetricsReport report = evaluate(chosen.params, normalize(make_batch(split.test), chosen.norm));
    emit_all(report, dir);
    out << "best epoch " << chosen.epoch << " (test split)\n";
    print_summary(report, out);
    return kOk;
}

// --- eval ---

struct EvalOptions {
    std::string checkpoint;
    std::string data;
    std::string split = "test";
    std::string out = ".";
};

int cmd_eval(const EvalOptions& o, const json& resolved, std::ostream& out) {
    const Checkpoint ck = read_checkpoint(o.checkpoint);
    const TrainState state = restore(ck);
    const auto& cfg = state.params.config;
    const auto samples = load_resized(o.data, cfg.image_h, cfg.image_w);

    std::vector<ImageSample> chosen;
    if (o.split == "all") {
        chosen = samples;
    } else {
        const json& extra = ck.meta.contains("extra") ? ck.meta.at("extra") : json::object();
        if (!extra.contains("split")) throw ConfigError("checkpoint carries no split settings; use --split all");
        SplitSpec spec;
        try {
            spec = split_from_json(extra.at("split"));
        } catch (const json::exception& e) {
            throw CheckpointProblem(std::string("checkpoint split settings: ") + e.what());
        }
        Split split = stratified_split(samples, spec);
        chosen = o.split == "train" ? std::move(split.train) : o.split == "val" ? std::move(split.val)
                                                                              : std::move(split.test);
    }
    if (chosen.empty()) throw ContractError("the '" + o.split + "' split of " + o.data + " is empty");

    const MetricsReport report = evaluate(state.params, normalize(make_batch(chosen), state.norm));
    const fs::path dir(o.out);
    ensure_dir(dir);
    emit_all(report, dir);
    write_resolved(resolved, dir);
    print_summary(report, out);
    return kOk;
}

// --- gradcheck ---

struct GradcheckOptions {
    std::uint64_t seed = 0;
    double step = kGradCheckStep;
    bool inject_fault = false;
};

int cmd_gradcheck(const GradcheckOptions& o, std::ostream& out) {
    if (!(o.step > 0.0)) throw ConfigError("--step must be positive");
    const GradFault fault = o.inject_fault ? GradFault::softmax : GradFault::none;
    auto checks = check_loss_gradients(o.seed, GradCheckTarget::similarities, o.step, fault);
    const auto model = check_loss_gradients(o.seed, GradCheckTarget::model, o.step, fault);
    bool ok = true;
    for (std::size_t i = 0; i < checks.size(); ++i) {
        checks[i].max_rel_error = std::max(checks[i].max_rel_error, model[i].max_rel_error);
        ok = ok && checks[i].passed();
        out << checks[i].component << "\tmax_rel_error=" << fmt(checks[i].max_rel_error, "%.6e") << '\t'
            << (checks[i].passed() ? "PASS" : "FAIL") << '\n';
    }
    return ok ? kOk : kGradCheckFailed;
}

// --- predict ---

struct PredictOptions {
    std::string checkpoint;
    std::string image;
};

int cmd_predict(const PredictOptions& o, std::ostream& out) {
    const TrainState state = restore(read_checkpoint(o.checkpoint));
    const auto& cfg = state.params.config;
    const GrayImage img = read_pgm(o.image);
    ImageSample s;
    s.id = fs::path(o.image).stem().string();
    s.height = img.height;
    s.width = img.width;
    for (auto v : img.pixels) s.pixels.push_back(static_cast<double>(v) / 255.0);
    s = normalize(resize(s, cfg.image_h, cfg.image_w), state.norm);
    const Batch batch = make_batch(std::span<const ImageSample>(&s, 1));
    const Tensor probs = softmax_rows(forward(state.params, batch.images).values);
    const GradeLabel grade = argmax_rows(probs).front();
    out << grade.value() << '\t' << grade.name();
    for (std::size_t k = 0; k < probs.cols(); ++k) out << '\t' << fmt(probs(0, k), "%.9g");
    out << '\n';
    return kOk;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Symmetry-aware image/text grading: data generation, training and evaluation"};
    app.name("symgrade");
    app.require_subcommand(1);

    GenerateOptions gen;
    auto* generate = app.add_subcommand("generate", "Write a synthetic grade-folder dataset");
    FlagSet gen_flags(generate);
    gen_flags.add("n", gen.n, "Number of images");
    gen_flags.add("size", gen.size, "Image height and width (even)");
    gen_flags.add("asymmetry", gen.asymmetry, "Probability of a one-sided distractor, in [0,1]");
    gen_flags.add("noise", gen.noise, "Std of symmetric Gaussian pixel noise");
    gen_flags.add("seed", gen.seed, "Random seed");
    gen_flags.add("out", gen.out, "Output dataset root");

    TrainOptions tr;
    auto* train_cmd = app.add_subcommand("train", "Train on a grade-folder dataset");
    FlagSet tr_flags(train_cmd);
    tr_flags.add("data", tr.data, "Dataset root (<root>/<grade>/<name>.pgm)");
    tr_flags.add("out", tr.out, "Output directory");
    tr_flags.add("epochs", tr.train.epochs, "Training epochs");
    tr_flags.add("batch-size", tr.train.batch_size, "Batch size");
    tr_flags.add("lr", tr.train.base_lr, "Peak (base) learning rate");
    tr_flags.add("weight-decay", tr.train.weight_decay, "AdamW decoupled weight decay");
    tr_flags.add("lambda", tr.train.lambda, "Weight of the flip consistency term");
    tr_flags.add("temperature", tr.train.temperature, "Similarity logit scale");
    tr_flags.add("seed", tr.train.seed, "Seed for init, split and shuffling");
    tr_flags.add("pct-start", tr.train.pct_start, "Warm-up fraction of the one-cycle schedule");
    tr_flags.add("div-factor", tr.train.div_factor, "Initial lr = lr / div-factor");
    tr_flags.add("final-div-factor", tr.train.final_div_factor, "Final lr = lr / final-div-factor");
    tr_flags.add("train-frac", tr.split.train_frac, "Training fraction");
    tr_flags.add("val-frac", tr.split.val_frac, "Validation fraction");
    tr_flags.add("test-frac", tr.split.test_frac, "Test fraction");
    tr_flags.add("stratified", tr.split.stratified, "Split each grade separately");
    tr_flags.add("image-size", tr.image_size, "Square input size images are resized to");
    tr_flags.add("patch", tr.patch, "Patch size of the image encoder");
    tr_flags.add("hidden", tr.hidden, "Hidden width of the image encoder");
    tr_flags.add("embed-dim", tr.embed_dim, "Shared embedding width");
    tr_flags.add("descriptions", tr.descriptions, "Grade description file (grade<TAB>text)");
    tr_flags.add("resume", tr.resume, "Continue from this checkpoint");
    tr_flags.flag("keep-epoch-checkpoints", tr.keep_epoch_checkpoints, "Also write epoch_NNN.ckpt every epoch");

    EvalOptions ev;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
    FlagSet ev_flags(eval_cmd);
    ev_flags.add("checkpoint", ev.checkpoint, "Checkpoint file");
    ev_flags.add("data", ev.data, "Dataset root");
    ev_flags.add("split", ev.split, "test | val | train | all")
        ->check(CLI::IsMember({"test", "val", "train", "all"}));
    ev_flags.add("out", ev.out, "Directory for report.json, report.csv, confusion.csv");

    GradcheckOptions gc;
    auto* gradcheck = app.add_subcommand("gradcheck", "Compare loss gradients against finite differences");
    FlagSet gc_flags(gradcheck);
    gc_flags.add("seed", gc.seed, "Seed for the random instances");
    gc_flags.add("step", gc.step, "Central-difference step");
    gc_flags.flag("inject-fault", gc.inject_fault, "Corrupt the softmax backward rule (negative control)")
        ->group("");

    PredictOptions pr;
    auto* predict_cmd = app.add_subcommand("predict", "Grade a single PGM image");
    FlagSet pr_flags(predict_cmd);
    pr_flags.add("checkpoint", pr.checkpoint, "Checkpoint file");
    pr_flags.add("image", pr.image, "PGM image");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success)) {
            out << app.help();
            if (!app.get_subcommands().empty()) out << app.get_subcommands().front()->help();
            return kOk;
        }
        err << "error: " << e.what() << '\n' << app.help();
        return kUsage;
    }

    const auto require = [](const std::string& value, const char* flag) {
        if (value.empty()) throw ConfigError(std::string("missing required flag --") + flag);
    };

    try {
        try {
            if (generate->parsed()) {
                gen_flags.apply_config_file();
                require(gen.out, "out");
                return cmd_generate(gen, gen_flags.resolved(), out);
            }
            if (train_cmd->parsed()) {
                tr_flags.apply_config_file();
                require(tr.data, "data");
                require(tr.out, "out");
                return cmd_train(tr, tr_flags.resolved(), out, err);
            }
            if (eval_cmd->parsed()) {
                ev_flags.apply_config_file();
                require(ev.checkpoint, "checkpoint");
                require(ev.data, "data");
                if (ev.split != "test" && ev.split != "val" && ev.split != "train" && ev.split != "all") {
                    throw ConfigError("--split must be test, val, train or all");
                }
                return cmd_eval(ev, ev_flags.resolved(), out);
            }
            if (gradcheck->parsed()) {
                gc_flags.apply_config_file();
                return cmd_gradcheck(gc, out);
            }
            if (predict_cmd->parsed()) {
                pr_flags.apply_config_file();
                require(pr.checkpoint, "checkpoint");
                require(pr.image, "image");
                return cmd_predict(pr, out);
            }
        } catch (const ConfigError& e) {
            err << "error: " << e.what() << '\n';
            return kUsage;
        }
    } catch (const CheckpointProblem& e) {
        err << "error: checkpoint: " << e.what() << '\n';
        return kCheckpointFormat;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kIoError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kIoError;
    }
    err << app.help();
    return kUsage;
}

int run(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args, std::cout, std::cerr);
}

} // namespace symgrade::cli
