// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "symgrade/autodiff.hpp"
#include "symgrade/tensor.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace symgrade {

inline constexpr int kNumGrades = 5;

/// Kellgren-Lawrence grade 0..4.
class GradeLabel {
public:
    constexpr GradeLabel() = default;
    /// Throws ContractError outside 0..4.
    explicit GradeLabel(int value);

    constexpr int value() const noexcept { return value_; }
    std::string_view name() const noexcept;

    friend constexpr bool operator==(GradeLabel a, GradeLabel b) noexcept { return a.value_ == b.value_; }

private:
    int value_ = 0;
};

std::string_view grade_name(int value);

struct GradeDescription {
    GradeLabel grade;
    std::string text;
};

/// Placeholder severity descriptions, one per grade.
std::vector<GradeDescription> default_descriptions();

/// Reads "grade<TAB>description" lines; exactly one line per grade.
std::vector<GradeDescription> load_descriptions(const std::filesystem::path& path);
void save_descriptions(const std::vector<GradeDescription>& descriptions,
                       const std::filesystem::path& path);
void validate_descriptions(const std::vector<GradeDescription>& descriptions);

/// Whitespace/lowercase tokenizer with a vocabulary fixed at construction.
/// Id 0 is reserved for unknown tokens.
class Vocabulary {
public:
    static constexpr std::size_t kUnknown = 0;

    Vocabulary() = default;
    explicit Vocabulary(const std::vector<GradeDescription>& descriptions);

    static std::vector<std::string> tokenize(std::string_view text);

    std::size_t id(std::string_view token) const;
    std::size_t size() const noexcept { return tokens_.size(); }
    const std::vector<std::string>& tokens() const noexcept { return tokens_; }

    /// [K x V] matrix whose row k averages the one-hot token vectors of text k.
    Tensor bag_of_words(const std::vector<GradeDescription>& descriptions) const;

private:
    std::vector<std::string> tokens_{"<unk>"};
    std::unordered_map<std::string, std::size_t> index_;
};

struct ModelConfig {
    std::size_t image_h = 32;
    std::size_t image_w = 32;
    std::size_t patch = 8;
    std::size_t hidden = 64;
    std::size_t embed_dim = 32;
    double temperature = 10.0;

    std::size_t patch_count() const { return (image_h / patch) * (image_w / patch); }
    void validate() const;
};

/// Trainable weights of both encoders plus the fixed text inputs they read.
struct ModelParams {
    ModelConfig config;
    std::vector<GradeDescription> descriptions;
    Vocabulary vocab;

    Tensor patch_w;      // [patch^2 x hidden]
    Tensor patch_b;      // [hidden]
    Tensor hidden_w;     // [hidden x D]
    Tensor hidden_b;     // [D]
    Tensor token_embed;  // [V x D]
    Tensor text_w;       // [D x D]
    Tensor text_b;       // [D]

    /// Glorot-uniform weights, zero biases.
    static ModelParams init(const ModelConfig& config, std::vector<GradeDescription> descriptions,
                            std::uint64_t seed);

    std::vector<std::pair<std::string, Tensor*>> named();
    std::vector<std::pair<std::string, const Tensor*>> named() const;
    void set_requires_grad(bool on);
    void zero_grad();
    bool all_finite() const;
};

/// Parameter handles on one tape, shared by every forward pass on it.
struct BoundParams {
    Var patch_w, patch_b, hidden_w, hidden_b, token_embed, text_w, text_b;
};

/// Trainable leaves when `trainable`, otherwise constants.
BoundParams bind(Tape& tape, ModelParams& params, bool trainable);
BoundParams bind_constant(Tape& tape, const ModelParams& params);

/// [N x 1 x H x W] images -> [N*P x patch^2] rows, patches in raster order.
Tensor patchify(const Tensor& images, std::size_t patch);

Var encode_image(Tape& tape, const BoundParams& p, const ModelConfig& config, const Tensor& images);
Var encode_texts(Tape& tape, const BoundParams& p, const Tensor& bag_of_words);
/// temperature * x * t^T
Var similarity(Tape& tape, Var image_embed, Var text_embed, double temperature);

struct SimilarityMatrix {
    Tensor values;  // [N x K]
};

SimilarityMatrix similarity_matrix(const Tensor& x, const Tensor& t, double temperature);

Tensor encode_image(const ModelParams& params, const Tensor& images);
Tensor encode_texts(const ModelParams& params);
SimilarityMatrix forward(const ModelParams& params, const Tensor& images);

/// Row-wise argmax; ties go to the lowest index.
std::vector<GradeLabel> argmax_rows(const Tensor& scores);
std::vector<GradeLabel> predict(const ModelParams& params, const Tensor& images);

} // namespace symgrade
