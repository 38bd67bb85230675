// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "symgrade/tensor.hpp"

#include <cstddef>
#include <functional>
#include <vector>

namespace symgrade {

/// Handle to a value recorded on a Tape. Only meaningful for the tape that
/// produced it.
struct Var {
    std::size_t id = static_cast<std::size_t>(-1);
};

/// Deliberate corruption of one backward rule. Only used as a negative
/// control for the gradient checker.
enum class GradFault {
    none,
    softmax,
};

/// Reverse-mode recorder over a fixed set of operations.
///
/// Every op computes its forward value eagerly and appends a node; backward()
/// walks the nodes in exact reverse order of recording. Leaves created with
/// leaf() accumulate their gradient into the bound Tensor's grad buffer when
/// that tensor has requires_grad set.
class Tape {
public:
    Tape() = default;
    explicit Tape(GradFault fault) : fault_(fault) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Non-differentiable input.
    Var constant(Tensor value);
    /// Differentiable leaf bound to `param`; the tensor must outlive backward().
    Var leaf(Tensor& param);

    const Tensor& value(Var v) const;
    std::size_t size() const noexcept { return nodes_.size(); }

    Var matmul(Var a, Var b);
    Var transpose(Var a);
    /// Same-shape sum, or `b` a [1 x C] / [C] bias broadcast over rows of `a`.
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    /// Elementwise product of same-shape operands.
    Var mul(Var a, Var b);
    Var scale(Var a, double factor);
    Var relu(Var a);
    Var log(Var a);
    Var clamp_min(Var a, double floor);
    Var softmax_rows(Var a);
    Var l2_normalize_rows(Var a, double eps = 1e-12);
    /// [N*G x C] -> [N x C], averaging each run of G consecutive rows.
    Var mean_row_groups(Var a, std::size_t group);
    /// Sum of all elements, as a rank-0 tensor.
    Var sum(Var a);

    /// Propagates d(loss)/d(leaf) into every requires_grad leaf. The loss
    /// must be a one-element tensor that depends on at least one such leaf.
    void backward(Var loss);

private:
    using Rule = std::function<void(std::span<const double> grad_out)>;

    struct Node {
        Tensor value;
        std::vector<std::size_t> inputs;
        Rule rule;
        Tensor* target = nullptr;
        bool needs_grad = false;
    };

    Var push(const char* op, Tensor value, std::vector<std::size_t> inputs, Rule rule);
    const Node& node(Var v) const;
    const Tensor& val(std::size_t id) const { return nodes_[id].value; }
    /// Gradient slot of node `id`, or an empty span when it needs none.
    std::span<double> grad_slot(std::size_t id);

    std::vector<Node> nodes_;
    std::vector<std::vector<double>> grads_;
    GradFault fault_ = GradFault::none;
};

} // namespace symgrade
