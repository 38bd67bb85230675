// SPDX-License-Identifier: Apache-2.0
#include "symgrade/model.hpp"

#include "symgrade/errors.hpp"
#include "symgrade/random.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>

namespace symgrade {

namespace {

constexpr std::array<std::string_view, kNumGrades> kGradeNames = {
    "Normal", "Doubtful", "Minimal", "Moderate", "Severe"};

Tensor glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t({fan_in, fan_out});
    for (double& v : t.data()) v = rng.uniform(-a, a);
    return t;
}

} // namespace

GradeLabel::GradeLabel(int value) : value_(value) {
    if (value < 0 || value >= kNumGrades) {
        throw ContractError("grade " + std::to_string(value) + " outside 0.." +
                            std::to_string(kNumGrades - 1));
    }
}

std::string_view GradeLabel::name() const noexcept { return kGradeNames[static_cast<std::size_t>(value_)]; }

std::string_view grade_name(int value) { return GradeLabel(value).name(); }

std::vector<GradeDescription> default_descriptions() {
    return {
        {GradeLabel(0), "normal knee with no joint space narrowing and no osteophytes"},
        {GradeLabel(1), "doubtful joint space narrowing with possible osteophytic lipping"},
        {GradeLabel(2), "minimal definite osteophytes with possible joint space narrowing"},
        {GradeLabel(3), "moderate multiple osteophytes with definite joint space narrowing and some sclerosis"},
        {GradeLabel(4), "severe large osteophytes with marked joint space narrowing severe sclerosis and bone deformity"},
    };
}

void validate_descriptions(const std::vector<GradeDescription>& descriptions) {
    if (descriptions.size() != kNumGrades) {
        throw ContractError("expected " + std::to_string(kNumGrades) + " grade descriptions, got " +
                            std::to_string(descriptions.size()));
    }
    for (std::size_t i = 0; i < descriptions.size(); ++i) {
        if (descriptions[i].grade.value() != static_cast<int>(i)) {
            throw ContractError("grade descriptions must be in grade order");
        }
        if (Vocabulary::tokenize(descriptions[i].text).empty()) {
            throw ContractError("empty description for grade " + std::to_string(i));
        }
    }
}

std::vector<GradeDescription> load_descriptions(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open grade descriptions " + path.string());
    std::vector<std::optional<std::string>> slots(kNumGrades);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        const std::string where = path.string() + ":" + std::to_string(lineno);
        if (tab == std::string::npos) throw FormatError(where + ": expected grade<TAB>description");
        int grade = -1;
        try {
            std::size_t used = 0;
            grade = std::stoi(line.substr(0, tab), &used);
            if (used != tab) grade = -1;
        } catch (const std::exception&) {
            grade = -1;
        }
        if (grade < 0 || grade >= kNumGrades) throw FormatError(where + ": bad grade field");
        if (slots[static_cast<std::size_t>(grade)]) throw FormatError(where + ": duplicate grade");
        slots[static_cast<std::size_t>(grade)] = line.substr(tab + 1);
    }
    std::vector<GradeDescription> out;
    for (int g = 0; g < kNumGrades; ++g) {
        if (!slots[static_cast<std::size_t>(g)]) {
            throw FormatError(path.string() + ": missing description for grade " + std::to_string(g));
        }
        out.push_back({GradeLabel(g), *slots[static_cast<std::size_t>(g)]});
    }
    validate_descriptions(out);
    return out;
}

void save_descriptions(const std::vector<GradeDescription>& descriptions,
                       const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& d : descriptions) out << d.grade.value() << '\t' << d.text << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

Vocabulary::Vocabulary(const std::vector<GradeDescription>& descriptions) {
    std::vector<std::string> words;
    for (const auto& d : descriptions) {
        for (auto& w : tokenize(d.text)) words.push_back(std::move(w));
    }
    std::sort(words.begin(), words.end());
    words.erase(std::unique(words.begin(), words.end()), words.end());
    for (auto& w : words) {
        index_.emplace(w, tokens_.size());
        tokens_.push_back(std::move(w));
    }
}

std::vector<std::string> Vocabulary::tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string current;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isspace(c)) {
            if (!current.empty()) out.push_back(std::move(current));
            current.clear();
        } else {
            current.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    if (!current.empty()) out.push_back(std::move(current));
    return out;
}

std::size_t Vocabulary::id(std::string_view token) const {
    const auto it = index_.find(std::string(token));
    return it == index_.end() ? kUnknown : it->second;
}

Tensor Vocabulary::bag_of_words(const std::vector<GradeDescription>& descriptions) const {
    Tensor bow({descriptions.size(), tokens_.size()});
    for (std::size_t k = 0; k < descriptions.size(); ++k) {
        const auto toks = tokenize(descriptions[k].text);
        if (toks.empty()) throw ContractError("empty description for grade " + std::to_string(k));
        const double w = 1.0 / static_cast<double>(toks.size());
        for (const auto& t : toks) bow(k, id(t)) += w;
    }
    return bow;
}

void ModelConfig::validate() const {
    if (patch == 0 || image_h == 0 || image_w == 0) throw ConfigError("image and patch sizes must be positive");
    if (image_h % patch != 0 || image_w % patch != 0) {
        throw ConfigError("image " + std::to_string(image_h) + "x" + std::to_string(image_w) +
                          " is not divisible by patch size " + std::to_string(patch));
    }
    if (hidden == 0 || embed_dim == 0) throw ConfigError("hidden and embedding widths must be positive");
    if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ConfigError("temperature must be positive");
}

ModelParams ModelParams::init(const ModelConfig& config, std::vector<GradeDescription> descriptions,
                              std::uint64_t seed) {
    config.validate();
    validate_descriptions(descriptions);
    ModelParams p;
    p.config = config;
    p.vocab = Vocabulary(descriptions);
    p.descriptions = std::move(descriptions);
    Rng rng(seed);
    const std::size_t pd = config.patch * config.patch;
    p.patch_w = glorot(pd, config.hidden, rng);
    p.patch_b = Tensor({config.hidden});
    p.hidden_w = glorot(config.hidden, config.embed_dim, rng);
    p.hidden_b = Tensor({config.embed_dim});
    p.token_embed = glorot(p.vocab.size(), config.embed_dim, rng);
    p.text_w = glorot(config.embed_dim, config.embed_dim, rng);
    p.text_b = Tensor({config.embed_dim});
    return p;
}

std::vector<std::pair<std::string, Tensor*>> ModelParams::named() {
    return {{"patch_w", &patch_w},     {"patch_b", &patch_b}, {"hidden_w", &hidden_w},
            {"hidden_b", &hidden_b},   {"token_embed", &token_embed},
            {"text_w", &text_w},       {"text_b", &text_b}};
}

std::vector<std::pair<std::string, const Tensor*>> ModelParams::named() const {
    std::vector<std::pair<std::string, const Tensor*>> out;
    for (auto& [name, t] : const_cast<ModelParams*>(this)->named()) out.emplace_back(name, t);
    return out;
}

void ModelParams::set_requires_grad(bool on) {
    for (auto& [name, t] : named()) t->set_requires_grad(on);
}

void ModelParams::zero_grad() {
    for (auto& [name, t] : named()) t->zero_grad();
}

bool ModelParams::all_finite() const {
    for (const auto& [name, t] : named())
        if (!t->all_finite()) return false;
    return true;
}

BoundParams bind(Tape& tape, ModelParams& params, bool trainable) {
    auto v = [&](Tensor& t) { return trainable ? tape.leaf(t) : tape.constant(t); };
    return {v(params.patch_w),     v(params.patch_b), v(params.hidden_w), v(params.hidden_b),
            v(params.token_embed), v(params.text_w),  v(params.text_b)};
}

BoundParams bind_constant(Tape& tape, const ModelParams& params) {
    return {tape.constant(params.patch_w),     tape.constant(params.patch_b),
            tape.constant(params.hidden_w),    tape.constant(params.hidden_b),
            tape.constant(params.token_embed), tape.constant(params.text_w),
            tape.constant(params.text_b)};
}

Tensor patchify(const Tensor& images, std::size_t patch) {
    if (images.rank() != 4 || images.dim(1) != 1) {
        throw ShapeError("expected [N x 1 x H x W] images, got " + to_string(images.shape()));
    }
    const std::size_t n = images.dim(0), h = images.dim(2), w = images.dim(3);
    if (patch == 0 || h % patch != 0 || w % patch != 0) {
        throw ConfigError("image " + std::to_string(h) + "x" + std::to_string(w) +
                          " is not divisible by patch size " + std::to_string(patch));
    }
    const std::size_t ph = h / patch, pw = w / patch, pd = patch * patch;
    Tensor out({n * ph * pw, pd});
    const auto src = images.data();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t py = 0; py < ph; ++py)
            for (std::size_t px = 0; px < pw; ++px) {
                const std::size_t row = (i * ph + py) * pw + px;
                for (std::size_t y = 0; y < patch; ++y)
                    for (std::size_t x = 0; x < patch; ++x)
                        out(row, y * patch + x) =
                            src[(i * h + py * patch + y) * w + px * patch + x];
            }
    return out;
}

Var encode_image(Tape& tape, const BoundParams& p, const ModelConfig& config, const Tensor& images) {
    if (images.rank() == 4 && (images.dim(2) != config.image_h || images.dim(3) != config.image_w)) {
        throw ConfigError("images are " + std::to_string(images.dim(2)) + "x" +
                          std::to_string(images.dim(3)) + " but the model expects " +
                          std::to_string(config.image_h) + "x" + std::to_string(config.image_w));
    }
    const Var patches = tape.constant(patchify(images, config.patch));
    const Var h = tape.relu(tape.add(tape.matmul(patches, p.patch_w), p.patch_b));
    const Var pooled = tape.mean_row_groups(h, config.patch_count());
    const Var e = tape.add(tape.matmul(pooled, p.hidden_w), p.hidden_b);
    return tape.l2_normalize_rows(e);
}

Var encode_texts(Tape& tape, const BoundParams& p, const Tensor& bag_of_words) {
    const Var bow = tape.constant(bag_of_words);
    const Var pooled = tape.matmul(bow, p.token_embed);
    const Var e = tape.add(tape.matmul(pooled, p.text_w), p.text_b);
    return tape.l2_normalize_rows(e);
}

Var similarity(Tape& tape, Var image_embed, Var text_embed, double temperature) {
    if (tape.value(image_embed).cols() != tape.value(text_embed).cols()) {
        throw ShapeError("similarity: embedding widths differ, " +
                         to_string(tape.value(image_embed).shape()) + " vs " +
                         to_string(tape.value(text_embed).shape()));
    }
    return tape.scale(tape.matmul(image_embed, tape.transpose(text_embed)), temperature);
}

SimilarityMatrix similarity_matrix(const Tensor& x, const Tensor& t, double temperature) {
    if (!(temperature > 0.0)) throw ContractError("temperature must be positive");
    if (x.cols() != t.cols()) {
        throw ShapeError("similarity: embedding widths differ, " + to_string(x.shape()) + " vs " +
                         to_string(t.shape()));
    }
    Tensor s = matmul(x, transpose(t));
    for (double& v : s.data()) v *= temperature;
    return {std::move(s)};
}

Tensor encode_image(const ModelParams& params, const Tensor& images) {
    Tape tape;
    const auto p = bind_constant(tape, params);
    return tape.value(encode_image(tape, p, params.config, images));
}

Tensor encode_texts(const ModelParams& params) {
    Tape tape;
    const auto p = bind_constant(tape, params);
    return tape.value(encode_texts(tape, p, params.vocab.bag_of_words(params.descriptions)));
}

SimilarityMatrix forward(const ModelParams& params, const Tensor& images) {
    Tape tape;
    const auto p = bind_constant(tape, params);
    const Var x = encode_image(tape, p, params.config, images);
    const Var t = encode_texts(tape, p, params.vocab.bag_of_words(params.descriptions));
    return {tape.value(similarity(tape, x, t, params.config.temperature))};
}

std::vector<GradeLabel> argmax_rows(const Tensor& scores) {
    const std::size_t n = scores.rows(), k = scores.cols();
    if (k > static_cast<std::size_t>(kNumGrades)) throw ShapeError("more score columns than grades");
    std::vector<GradeLabel> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < k; ++j)
            if (scores(i, j) > scores(i, best)) best = j;
        out.emplace_back(static_cast<int>(best));
    }
    return out;
}

std::vector<GradeLabel> predict(const ModelParams& params, const Tensor& images) {
    return argmax_rows(forward(params, images).values);
}

} // namespace symgrade
