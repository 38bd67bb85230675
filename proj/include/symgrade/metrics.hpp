// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "symgrade/data.hpp"
#include "symgrade/model.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace symgrade {

/// Rows are true grades, columns predicted grades.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t k = kNumGrades) : k_(k), counts_(k * k, 0) {}

    std::size_t k() const noexcept { return k_; }
    std::uint64_t at(std::size_t truth, std::size_t pred) const { return counts_[truth * k_ + pred]; }
    std::uint64_t& at(std::size_t truth, std::size_t pred) { return counts_[truth * k_ + pred]; }

    std::uint64_t total() const noexcept;
    std::uint64_t trace() const noexcept;
    std::uint64_t row_sum(std::size_t truth) const;
    std::uint64_t col_sum(std::size_t pred) const;

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

private:
    std::size_t k_;
    std::vector<std::uint64_t> counts_;
};

ConfusionMatrix confusion_matrix(std::span<const GradeLabel> preds, std::span<const GradeLabel> truths,
                                 std::size_t k = kNumGrades);

struct MetricsReport {
    std::size_t samples = 0;
    double accuracy = 0.0;
    std::vector<double> precision, recall, f1;
    double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
    double micro_precision = 0.0, micro_recall = 0.0, micro_f1 = 0.0;
    /// Classes where a 0/0 ratio was replaced by 0.
    std::vector<int> degenerate_classes;
    ConfusionMatrix confusion;
    double flip_consistency_rate = 0.0;

    friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// Per-class and averaged precision/recall/F1. Any 0/0 counts as 0; macro
/// scores average over all K classes.
MetricsReport prf_report(const ConfusionMatrix& cm);

/// Fraction of samples whose predicted grade survives a horizontal flip.
double flip_consistency_rate(const ModelParams& params, const Batch& batch);

/// Full report for an already-normalized batch, evaluated in chunks.
MetricsReport evaluate(const ModelParams& params, const Batch& batch, std::size_t chunk = 256);

enum class ReportFormat { json, csv };

void emit_report(const MetricsReport& report, const std::filesystem::path& path, ReportFormat format);
MetricsReport read_report(const std::filesystem::path& path, ReportFormat format);
/// K rows of K comma-separated counts, true grade per row.
void write_confusion_csv(const ConfusionMatrix& cm, const std::filesystem::path& path);

} // namespace symgrade
