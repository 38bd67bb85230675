// SPDX-License-Identifier: Apache-2.0
#include "symgrade/losses.hpp"

#include "symgrade/errors.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace symgrade {

namespace {

void require_row_stochastic(const char* what, const Tensor& p) {
    for (std::size_t i = 0; i < p.rows(); ++i) {
        double total = 0.0;
        bool nonneg = true;
        for (std::size_t j = 0; j < p.cols(); ++j) {
            total += p(i, j);
            nonneg = nonneg && p(i, j) >= 0.0;
        }
        if (!nonneg || std::abs(total - 1.0) > 1e-9) {
            std::ostringstream os;
            os.precision(17);
            os << "jsd_mean: " << what << " row " << i << " is not a distribution (sum " << total
               << (nonneg ? ")" : ", negative entry)");
            throw ContractError(os.str());
        }
    }
}

void require_same(const char* op, const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
    }
}

} // namespace

OneHotLabels one_hot(std::span<const GradeLabel> labels, std::size_t k) {
    Tensor y({labels.size(), k});
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto v = static_cast<std::size_t>(labels[i].value());
        if (v >= k) {
            throw ContractError("one_hot: label " + std::to_string(v) + " out of range for k=" +
                                std::to_string(k));
        }
        y(i, v) = 1.0;
    }
    return {std::move(y)};
}

void LossBreakdown::check_identities(double tol) const {
    const double sym = l_original + l_flipped;
    const double total = 0.5 * (l_original + l_flipped) + lambda * l_consistency;
    std::ostringstream os;
    os.precision(17);
    if (std::abs(l_symmetry - sym) > tol) {
        os << "l_symmetry " << l_symmetry << " != l_original + l_flipped " << sym;
    } else if (std::abs(l_total - total) > tol) {
        os << "l_total " << l_total << " != 0.5*(l_original+l_flipped) + lambda*l_consistency " << total;
    } else if (l_original < 0 || l_flipped < 0 || l_consistency < 0 ||
               l_consistency > std::numbers::ln2 + tol) {
        os << "loss component out of range (consistency " << l_consistency << ")";
    } else {
        return;
    }
    throw NumericError(os.str());
}

Var cross_entropy_mean(Tape& tape, Var s, const OneHotLabels& y) {
    const Tensor& sv = tape.value(s);
    require_same("cross_entropy_mean", sv, y.values);
    if (sv.rows() == 0) throw ContractError("cross_entropy_mean: empty batch has no mean");
    const double n = static_cast<double>(sv.rows());
    const Var logp = tape.log(tape.clamp_min(tape.softmax_rows(s), kLogEps));
    const Var picked = tape.sum(tape.mul(logp, tape.constant(y.values)));
    return tape.scale(picked, -1.0 / n);
}

Var jsd_mean(Tape& tape, Var p, Var q) {
    const Tensor& pv = tape.value(p);
    const Tensor& qv = tape.value(q);
    require_same("jsd_mean", pv, qv);
    if (pv.rows() == 0) throw ContractError("jsd_mean: empty batch has no mean");
    require_row_stochastic("p", pv);
    require_row_stochastic("q", qv);
    const double n = static_cast<double>(pv.rows());
    const Var m = tape.scale(tape.add(p, q), 0.5);
    const Var log_m = tape.log(tape.clamp_min(m, kLogEps));
    const Var log_p = tape.log(tape.clamp_min(p, kLogEps));
    const Var log_q = tape.log(tape.clamp_min(q, kLogEps));
    const Var kl_pm = tape.sum(tape.mul(p, tape.sub(log_p, log_m)));
    const Var kl_qm = tape.sum(tape.mul(q, tape.sub(log_q, log_m)));
    // Roundoff can leave a value a few ulps below zero when p ~ q.
    return tape.clamp_min(tape.scale(tape.add(kl_pm, kl_qm), 0.5 / n), 0.0);
}

Var consistency_loss(Tape& tape, Var s, Var s_h) {
    require_same("consistency_loss", tape.value(s), tape.value(s_h));
    return jsd_mean(tape, tape.softmax_rows(s), tape.softmax_rows(s_h));
}

SymmetryTerms symmetry_loss(Tape& tape, Var s, Var s_h, const OneHotLabels& y) {
    require_same("symmetry_loss", tape.value(s), tape.value(s_h));
    const Var original = cross_entropy_mean(tape, s, y);
    const Var flipped = cross_entropy_mean(tape, s_h, y);
    return {original, flipped, tape.add(original, flipped)};
}

TotalLoss total_loss(Tape& tape, Var s, Var s_h, const OneHotLabels& y, double lambda) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ContractError("total_loss: lambda must be >= 0");
    const SymmetryTerms sym = symmetry_loss(tape, s, s_h, y);
    const Var consistency = consistency_loss(tape, s, s_h);
    const Var total =
        tape.add(tape.scale(tape.add(sym.original, sym.flipped), 0.5), tape.scale(consistency, lambda));
    TotalLoss out{sym.original, sym.flipped, sym.symmetry, consistency, total, {}};
    out.values.l_original = tape.value(sym.original).item();
    out.values.l_flipped = tape.value(sym.flipped).item();
    out.values.l_symmetry = tape.value(sym.symmetry).item();
    out.values.l_consistency = tape.value(consistency).item();
    out.values.l_total = tape.value(total).item();
    out.values.lambda = lambda;
    return out;
}

double cross_entropy_mean(const Tensor& s, const OneHotLabels& y) {
    Tape tape;
    return tape.value(cross_entropy_mean(tape, tape.constant(s), y)).item();
}

double jsd_mean(const Tensor& p, const Tensor& q) {
    Tape tape;
    return tape.value(jsd_mean(tape, tape.constant(p), tape.constant(q))).item();
}

double consistency_loss(const Tensor& s, const Tensor& s_h) {
    Tape tape;
    return tape.value(consistency_loss(tape, tape.constant(s), tape.constant(s_h))).item();
}

LossBreakdown total_loss(const Tensor& s, const Tensor& s_h, const OneHotLabels& y, double lambda) {
    Tape tape;
    return total_loss(tape, tape.constant(s), tape.constant(s_h), y, lambda).values;
}

} // namespace symgrade
