// SPDX-License-Identifier: Apache-2.0
#include "symgrade/training.hpp"

#include "symgrade/errors.hpp"
#include "symgrade/metrics.hpp"
#include "symgrade/random.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace symgrade {

TrainState initial_state(const TrainConfig& cfg, ModelConfig model_cfg,
                         std::vector<GradeDescription> descriptions,
                         const std::vector<ImageSample>& train_set) {
    cfg.validate();
    if (train_set.empty()) throw ContractError("training set is empty");
    model_cfg.temperature = cfg.temperature;
    TrainState s;
    s.params = ModelParams::init(model_cfg, std::move(descriptions), derive_seed(cfg.seed, SeedStream::init));
    s.optimizer = OptimizerState::for_params(s.params.named());
    s.norm = compute_norm_stats(train_set);
    return s;
}

LossBreakdown compute_gradients(ModelParams& params, const Batch& batch, double lambda) {
    if (batch.size() == 0) throw ContractError("compute_gradients: empty batch");
    params.set_requires_grad(true);
    params.zero_grad();
    Tape tape;
    const BoundParams p = bind(tape, params, true);
    const Var t = encode_texts(tape, p, params.vocab.bag_of_words(params.descriptions));
    const Var x = encode_image(tape, p, params.config, batch.images);
    const Var x_flip = encode_image(tape, p, params.config, flip_horizontal(batch).images);
    const double temp = params.config.temperature;
    const Var s = similarity(tape, x, t, temp);
    const Var s_flip = similarity(tape, x_flip, t, temp);
    const TotalLoss loss = total_loss(tape, s, s_flip, one_hot(batch.labels), lambda);
    tape.backward(loss.total);
    return loss.values;
}

LossBreakdown train_step(ModelParams& params, OptimizerState& opt, const Batch& batch,
                         const TrainConfig& cfg, double lr) {
    const LossBreakdown loss = compute_gradients(params, batch, cfg.lambda);
    adamw_step(params.named(), opt, lr, cfg.weight_decay);
    return loss;
}

std::size_t batches_per_epoch(std::size_t samples, std::size_t batch_size) {
    return (samples + batch_size - 1) / batch_size;
}

TrainResult train(const std::vector<ImageSample>& train_set, const std::vector<ImageSample>& val_set,
                  const TrainConfig& cfg, TrainState state, const TrainHooks& hooks) {
    cfg.validate();
    TrainResult result;
    result.state = std::move(state);
    TrainState& st = result.state;
    if (cfg.epochs == 0 || st.epoch >= cfg.epochs) return result;
    if (train_set.empty()) throw ContractError("training set is empty");

    std::vector<ImageSample> train_n;
    train_n.reserve(train_set.size());
    for (const auto& s : train_set) train_n.push_back(normalize(s, st.norm));
    std::optional<Batch> val_batch;
    if (!val_set.empty()) val_batch = normalize(make_batch(val_set), st.norm);

    const std::size_t per_epoch = batches_per_epoch(train_n.size(), cfg.batch_size);
    const std::uint64_t total_updates = cfg.epochs * per_epoch;
    const std::uint64_t schedule_end = std::max<std::uint64_t>(total_updates - 1, 1);

    for (std::size_t epoch = st.epoch; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> order(train_n.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng(derive_seed(cfg.seed, SeedStream::shuffle, epoch)).shuffle(order);

        EpochLog row;
        row.epoch = epoch + 1;
        for (std::size_t b = 0; b < per_epoch; ++b) {
            const std::size_t begin = b * cfg.batch_size;
            const std::size_t end = std::min(begin + cfg.batch_size, order.size());
            const Batch batch = make_batch(train_n, std::span(order).subspan(begin, end - begin));
            const std::uint64_t step = st.optimizer.step;
            const double lr = onecycle_lr(std::min(step, schedule_end), schedule_end, cfg);
            LossBreakdown loss;
            try {
                loss = train_step(st.params, st.optimizer, batch, cfg, lr);
            } catch (const NumericError& e) {
                throw DivergenceError(std::string("training diverged at update ") + std::to_string(step) +
                                          ": " + e.what(),
                                      epoch);
            }
            loss.check_identities();
            if (hooks.on_step) hooks.on_step(step, loss);
            row.lr = lr;
            row.l_original += loss.l_original;
            row.l_flipped += loss.l_flipped;
            row.l_symmetry += loss.l_symmetry;
            row.l_consistency += loss.l_consistency;
            row.l_total += loss.l_total;
        }
        const double nb = static_cast<double>(per_epoch);
        row.l_original /= nb;
        row.l_flipped /= nb;
        row.l_symmetry /= nb;
        row.l_consistency /= nb;
        row.l_total /= nb;
        if (val_batch) {
            const MetricsReport report = evaluate(st.params, *val_batch);
            row.val_accuracy = report.accuracy;
            row.flip_consistency_rate = report.flip_consistency_rate;
        }
        st.epoch = epoch + 1;
        result.log.push_back(row);
        if (row.val_accuracy >= st.best_val_accuracy) {
            st.best_val_accuracy = row.val_accuracy;
            st.best_epoch = st.epoch;
            if (hooks.on_best) hooks.on_best(st);
        }
        if (hooks.on_epoch) hooks.on_epoch(st, row);
    }
    return result;
}

// --- checkpoint conversion ---

nlohmann::json to_json(const TrainConfig& c) {
    return {{"base_lr", c.base_lr},       {"weight_decay", c.weight_decay}, {"batch_size", c.batch_size},
            {"epochs", c.epochs},         {"lambda", c.lambda},             {"temperature", c.temperature},
            {"seed", c.seed},             {"pct_start", c.pct_start},       {"div_factor", c.div_factor},
            {"final_div_factor", c.final_div_factor}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.base_lr = j.value("base_lr", c.base_lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.lambda = j.value("lambda", c.lambda);
    c.temperature = j.value("temperature", c.temperature);
    c.seed = j.value("seed", c.seed);
    c.pct_start = j.value("pct_start", c.pct_start);
    c.div_factor = j.value("div_factor", c.div_factor);
    c.final_div_factor = j.value("final_div_factor", c.final_div_factor);
    return c;
}

nlohmann::json to_json(const ModelConfig& c) {
    return {{"image_h", c.image_h}, {"image_w", c.image_w},     {"patch", c.patch},
            {"hidden", c.hidden},   {"embed_dim", c.embed_dim}, {"temperature", c.temperature}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.image_h = j.at("image_h").get<std::size_t>();
    c.image_w = j.at("image_w").get<std::size_t>();
    c.patch = j.at("patch").get<std::size_t>();
    c.hidden = j.at("hidden").get<std::size_t>();
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.temperature = j.at("temperature").get<double>();
    return c;
}

namespace {

NamedArray to_array(const std::string& name, const Tensor& t) { return {name, t.shape(), t.values()}; }

NamedArray to_array(const std::string& name, const std::vector<double>& v) { return {name, {v.size()}, v}; }

const NamedArray& find(const std::vector<NamedArray>& arrays, const std::string& name) {
    for (const auto& a : arrays)
        if (a.name == name) return a;
    throw FormatError("checkpoint is missing array '" + name + "'");
}

} // namespace

Checkpoint to_checkpoint(const TrainState& state, const TrainConfig& cfg, const nlohmann::json& extra) {
    Checkpoint ck;
    for (const auto& [name, t] : state.params.named()) ck.params.push_back(to_array(name, *t));
    ck.optimizer.push_back({"adam.step", {}, {static_cast<double>(state.optimizer.step)}});
    const auto named = state.params.named();
    for (std::size_t i = 0; i < named.size(); ++i) {
        ck.optimizer.push_back(to_array("m." + named[i].first, state.optimizer.m[i]));
        ck.optimizer.push_back(to_array("v." + named[i].first, state.optimizer.v[i]));
    }
    ck.epoch = state.epoch;
    auto& m = ck.meta;
    m["train_config"] = to_json(cfg);
    m["model_config"] = to_json(state.params.config);
    auto desc = nlohmann::json::array();
    for (const auto& d : state.params.descriptions) desc.push_back(d.text);
    m["descriptions"] = desc;
    m["norm"] = {{"mean", state.norm.mean}, {"std", state.norm.std}};
    m["best_val_accuracy"] = state.best_val_accuracy;
    m["best_epoch"] = state.best_epoch;
    m["extra"] = extra;
    return ck;
}

TrainState from_checkpoint(const Checkpoint& ck, TrainConfig* cfg) {
    try {
        const auto& m = ck.meta;
        TrainState st;
        std::vector<GradeDescription> descriptions;
        const auto texts = m.at("descriptions").get<std::vector<std::string>>();
        for (std::size_t i = 0; i < texts.size(); ++i) descriptions.push_back({GradeLabel(static_cast<int>(i)), texts[i]});
        validate_descriptions(descriptions);
        const ModelConfig model_cfg = model_config_from_json(m.at("model_config"));
        model_cfg.validate();
        // Init fixes every shape; the stored arrays then overwrite the values.
        st.params = ModelParams::init(model_cfg, std::move(descriptions), 0);
        for (auto& [name, t] : st.params.named()) {
            const NamedArray& a = find(ck.params, name);
            if (a.shape != t->shape()) {
                throw FormatError("checkpoint array '" + name + "' has shape " + to_string(a.shape) +
                                  ", expected " + to_string(t->shape()));
            }
            *t = Tensor(a.shape, a.data);
        }
        st.optimizer = OptimizerState::for_params(st.params.named());
        st.optimizer.step = static_cast<std::uint64_t>(find(ck.optimizer, "adam.step").data.at(0));
        std::size_t i = 0;
        for (auto& [name, t] : st.params.named()) {
            const auto& mv = find(ck.optimizer, "m." + name).data;
            const auto& vv = find(ck.optimizer, "v." + name).data;
            if (mv.size() != t->size() || vv.size() != t->size()) {
                throw FormatError("optimizer state for '" + name + "' does not match the parameter");
            }
            st.optimizer.m[i] = mv;
            st.optimizer.v[i] = vv;
            ++i;
        }
        st.norm.mean = m.at("norm").at("mean").get<double>();
        st.norm.std = m.at("norm").at("std").get<double>();
        st.epoch = static_cast<std::size_t>(ck.epoch);
        st.best_val_accuracy = m.at("best_val_accuracy").get<double>();
        st.best_epoch = m.at("best_epoch").get<std::size_t>();
        if (cfg != nullptr && m.contains("train_config")) *cfg = train_config_from_json(m.at("train_config"));
        return st;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint metadata: ") + e.what());
    } catch (const ShapeError& e) {
        throw FormatError(std::string("checkpoint array: ") + e.what());
    } catch (const NumericError& e) {
        throw FormatError(std::string("checkpoint array: ") + e.what());
    } catch (const ContractError& e) {
        throw FormatError(std::string("checkpoint metadata: ") + e.what());
    } catch (const ConfigError& e) {
        throw FormatError(std::string("checkpoint metadata: ") + e.what());
    }
}

// --- epoch log CSV ---

static constexpr const char* kLogHeader =
    "epoch,lr,l_original,l_flipped,l_symmetry,l_consistency,l_total,val_accuracy,flip_consistency_rate";

void write_log_csv(const std::vector<EpochLog>& log, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write log " + path.string());
    out << kLogHeader << '\n';
    char buf[512];
    for (const auto& r : log) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.lr,
                      r.l_original, r.l_flipped, r.l_symmetry, r.l_consistency, r.l_total, r.val_accuracy,
                      r.flip_consistency_rate);
        out << buf;
    }
    if (!out) throw IoError("write failed for log " + path.string());
}

std::vector<EpochLog> read_log_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open log " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kLogHeader) throw FormatError(path.string() + ": unexpected log header");
    std::vector<EpochLog> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        EpochLog r;
        const int got = std::sscanf(line.c_str(), "%zu,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf", &r.epoch, &r.lr,
                                    &r.l_original, &r.l_flipped, &r.l_symmetry, &r.l_consistency, &r.l_total,
                                    &r.val_accuracy, &r.flip_consistency_rate);
        if (got != 9) throw FormatError(path.string() + ": malformed log row '" + line + "'");
        out.push_back(r);
    }
    return out;
}

} // namespace symgrade
