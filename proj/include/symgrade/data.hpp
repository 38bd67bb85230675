// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "symgrade/model.hpp"
#include "symgrade/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace symgrade {

struct ImageSample {
    std::string id;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> pixels;  // row-major, [0,1] before normalization
    GradeLabel grade;

    double at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
};

struct Batch {
    Tensor images;  // [N x 1 x H x W]
    std::vector<GradeLabel> labels;
    std::vector<std::string> ids;

    std::size_t size() const noexcept { return labels.size(); }
};

/// Stacks the selected samples; all must share one H x W.
Batch make_batch(std::span<const ImageSample> samples, std::span<const std::size_t> indices);
Batch make_batch(std::span<const ImageSample> samples);

/// Mirrors every image along the width axis. Labels and ids are untouched.
Batch flip_horizontal(const Batch& batch);
ImageSample flip_horizontal(const ImageSample& sample);

// --- PGM (binary P5, 8-bit) ---

struct GrayImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;
};

GrayImage read_pgm(const std::filesystem::path& path);
void write_pgm(const GrayImage& image, const std::filesystem::path& path);
/// Rounds [0,1] pixels to 8 bits.
GrayImage to_gray8(const ImageSample& sample);

/// Reads <root>/<grade>/<name>.pgm with grade directories named 0..4.
/// Files are visited in lexicographic order; pixels are scaled to [0,1].
std::vector<ImageSample> load_image_folder(const std::filesystem::path& root);

/// Bilinear resize with corner-aligned sampling.
ImageSample resize(const ImageSample& sample, std::size_t h, std::size_t w);

struct SplitSpec {
    double train_frac = 0.7;
    double val_frac = 0.1;
    double test_frac = 0.2;
    std::uint64_t seed = 0;
    bool stratified = true;

    void validate() const;
};

struct Split {
    std::vector<ImageSample> train, val, test;
    /// Grades that had too few samples to split and went entirely to train.
    std::vector<int> undersized_grades;
};

/// Per-grade seeded shuffle, then contiguous cuts sized by largest-remainder
/// rounding of the target fractions.
Split stratified_split(const std::vector<ImageSample>& samples, const SplitSpec& spec);

/// Largest-remainder apportionment of n items across fractions.
std::vector<std::size_t> apportion(std::size_t n, std::span<const double> fractions);

struct NormStats {
    double mean = 0.0;
    double std = 1.0;
};

inline constexpr double kMinStd = 1e-8;

NormStats compute_norm_stats(std::span<const ImageSample> train);
Batch normalize(const Batch& batch, const NormStats& stats);
ImageSample normalize(const ImageSample& sample, const NormStats& stats);

struct SyntheticSpec {
    std::size_t n = 1000;
    std::size_t height = 32;
    std::size_t width = 32;
    double asymmetry = 0.5;
    double noise = 0.05;
    std::uint64_t seed = 42;

    void validate() const;
};

/// Fraction of the image width covered by the central dark band, per grade.
/// Ranges are disjoint and shrink with grade.
struct BandRange {
    double lo, hi;
};
BandRange band_width_range(int grade);

inline constexpr double kBackgroundLevel = 0.75;
inline constexpr double kBandLevel = 0.25;

/// Bilaterally symmetric renders whose central band narrows with grade;
/// with probability `asymmetry` a bright blob is added on one random side.
std::vector<ImageSample> generate_synthetic(const SyntheticSpec& spec);

/// Writes <root>/<grade>/<id>.pgm plus <root>/manifest.csv (id,grade,file).
void write_image_folder(const std::vector<ImageSample>& samples, const std::filesystem::path& root);

} // namespace symgrade
