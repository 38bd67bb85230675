// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "symgrade/autodiff.hpp"
#include "symgrade/model.hpp"

#include <span>

namespace symgrade {

inline constexpr double kDefaultLambda = 10.0;
/// Floor applied inside every logarithm.
inline constexpr double kLogEps = 1e-12;

struct OneHotLabels {
    Tensor values;  // [N x K], one 1 per row
};

OneHotLabels one_hot(std::span<const GradeLabel> labels, std::size_t k = kNumGrades);

struct LossBreakdown {
    double l_original = 0.0;
    double l_flipped = 0.0;
    double l_symmetry = 0.0;
    double l_consistency = 0.0;
    double l_total = 0.0;
    double lambda = kDefaultLambda;

    /// Throws NumericError if the decomposition identities are off by more
    /// than `tol` or a component leaves its range.
    void check_identities(double tol = 1e-12) const;
};

/// Mean over rows of -log(max(softmax(s)[true], eps)).
Var cross_entropy_mean(Tape& tape, Var s, const OneHotLabels& y);

/// Mean over rows of JSD(p_i || q_i) in nats. Rows of both inputs must sum
/// to 1 within 1e-9.
Var jsd_mean(Tape& tape, Var p, Var q);

/// jsd_mean(softmax_rows(s), softmax_rows(s_h)).
Var consistency_loss(Tape& tape, Var s, Var s_h);

struct SymmetryTerms {
    Var original, flipped, symmetry;
};

SymmetryTerms symmetry_loss(Tape& tape, Var s, Var s_h, const OneHotLabels& y);

struct TotalLoss {
    Var original, flipped, symmetry, consistency, total;
    LossBreakdown values;
};

/// 0.5 * (CE(s, y) + CE(s_h, y)) + lambda * JSD(softmax(s), softmax(s_h)).
TotalLoss total_loss(Tape& tape, Var s, Var s_h, const OneHotLabels& y, double lambda = kDefaultLambda);

// Tensor-level conveniences (each builds a throwaway tape).
double cross_entropy_mean(const Tensor& s, const OneHotLabels& y);
double jsd_mean(const Tensor& p, const Tensor& q);
double consistency_loss(const Tensor& s, const Tensor& s_h);
LossBreakdown total_loss(const Tensor& s, const Tensor& s_h, const OneHotLabels& y,
                         double lambda = kDefaultLambda);

} // namespace symgrade
