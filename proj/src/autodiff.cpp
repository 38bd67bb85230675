// SPDX-License-Identifier: Apache-2.0
#include "symgrade/autodiff.hpp"

#include "symgrade/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace symgrade {

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
    }
}

} // namespace

Var Tape::push(const char* op, Tensor value, std::vector<std::size_t> inputs, Rule rule) {
    if (!value.all_finite()) {
        throw NumericError(std::string(op) + ": produced a non-finite value");
    }
    Node n;
    n.value = std::move(value);
    n.needs_grad = std::any_of(inputs.begin(), inputs.end(),
                               [this](std::size_t i) { return nodes_[i].needs_grad; });
    n.inputs = std::move(inputs);
    if (n.needs_grad) n.rule = std::move(rule);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

const Tape::Node& Tape::node(Var v) const {
    if (v.id >= nodes_.size()) throw ContractError("variable does not belong to this tape");
    return nodes_[v.id];
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

std::span<double> Tape::grad_slot(std::size_t id) {
    if (!nodes_[id].needs_grad) return {};
    auto& g = grads_[id];
    if (g.empty()) g.assign(nodes_[id].value.size(), 0.0);
    return g;
}

Var Tape::constant(Tensor value) {
    value.clear_grad();
    return push("constant", std::move(value), {}, {});
}

Var Tape::leaf(Tensor& param) {
    Tensor copy(param.shape(), param.values());
    Var v = push("leaf", std::move(copy), {}, {});
    nodes_[v.id].target = &param;
    nodes_[v.id].needs_grad = param.requires_grad();
    return v;
}

Var Tape::matmul(Var a, Var b) {
    const Tensor& av = node(a).value;
    const Tensor& bv = node(b).value;
    Tensor out = symgrade::matmul(av, bv);
    const std::size_t ia = a.id, ib = b.id;
    return push("matmul", std::move(out), {ia, ib}, [this, ia, ib](std::span<const double> g) {
        const Tensor& x = val(ia);
        const Tensor& y = val(ib);
        const std::size_t m = x.rows(), k = x.cols(), n = y.cols();
        if (auto ga = grad_slot(ia); !ga.empty()) {
            // dA = G * B^T
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * y(p, j);
                    ga[i * k + p] += acc;
                }
        }
        if (auto gb = grad_slot(ib); !gb.empty()) {
            // dB = A^T * G
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double xip = x(i, p);
                    if (xip == 0.0) continue;
                    for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += xip * g[i * n + j];
                }
        }
    });
}

Var Tape::transpose(Var a) {
    Tensor out = symgrade::transpose(node(a).value);
    const std::size_t ia = a.id;
    return push("transpose", std::move(out), {ia}, [this, ia](std::span<const double> g) {
        auto ga = grad_slot(ia);
        const std::size_t m = val(ia).rows(), n = val(ia).cols();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
    });
}

Var Tape::add(Var a, Var b) {
    const Tensor& av = node(a).value;
    const Tensor& bv = node(b).value;
    const std::size_t ia = a.id, ib = b.id;
    if (av.shape() == bv.shape()) {
        Tensor out = av;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
        return push("add", std::move(out), {ia, ib}, [this, ia, ib](std::span<const double> g) {
            for (std::size_t id : {ia, ib}) {
                auto gs = grad_slot(id);
                for (std::size_t i = 0; i < gs.size(); ++i) gs[i] += g[i];
            }
        });
    }
    const bool bias = av.rank() == 2 && bv.size() == av.cols() &&
                      (bv.rank() == 1 || (bv.rank() == 2 && bv.rows() == 1));
    if (!bias) {
        throw ShapeError("add: cannot combine " + to_string(av.shape()) + " with " +
                         to_string(bv.shape()));
    }
    Tensor out = av;
    const std::size_t n = av.rows(), c = av.cols();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) out(i, j) += bv[j];
    return push("add", std::move(out), {ia, ib}, [this, ia, ib, n, c](std::span<const double> g) {
        if (auto ga = grad_slot(ia); !ga.empty())
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
        if (auto gb = grad_slot(ib); !gb.empty())
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < c; ++j) gb[j] += g[i * c + j];
    });
}

Var Tape::sub(Var a, Var b) {
    const Tensor& av = node(a).value;
    const Tensor& bv = node(b).value;
    require_same_shape("sub", av, bv);
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    const std::size_t ia = a.id, ib = b.id;
    return push("sub", std::move(out), {ia, ib}, [this, ia, ib](std::span<const double> g) {
        if (auto ga = grad_slot(ia); !ga.empty())
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
        if (auto gb = grad_slot(ib); !gb.empty())
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
    });
}

Var Tape::mul(Var a, Var b) {
    const Tensor& av = node(a).value;
    const Tensor& bv = node(b).value;
    require_same_shape("mul", av, bv);
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    const std::size_t ia = a.id, ib = b.id;
    return push("mul", std::move(out), {ia, ib}, [this, ia, ib](std::span<const double> g) {
        if (auto ga = grad_slot(ia); !ga.empty())
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * val(ib)[i];
        if (auto gb = grad_slot(ib); !gb.empty())
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * val(ia)[i];
    });
}

Var Tape::scale(Var a, double factor) {
    Tensor out = node(a).value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= factor;
    const std::size_t ia = a.id;
    return push("scale", std::move(out), {ia}, [this, ia, factor](std::span<const double> g) {
        auto ga = grad_slot(ia);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += factor * g[i];
    });
}

Var Tape::relu(Var a) {
    Tensor out = node(a).value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(out[i], 0.0);
    const std::size_t ia = a.id;
    return push("relu", std::move(out), {ia}, [this, ia](std::span<const double> g) {
        auto ga = grad_slot(ia);
        const Tensor& x = val(ia);
        for (std::size_t i = 0; i < ga.size(); ++i)
            if (x[i] > 0.0) ga[i] += g[i];
    });
}

Var Tape::log(Var a) {
    const Tensor& av = node(a).value;
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!(av[i] > 0.0)) {
            throw NumericError("log: non-positive argument " + std::to_string(av[i]) +
                               " at element " + std::to_string(i));
        }
        out[i] = std::log(av[i]);
    }
    const std::size_t ia = a.id;
    return push("log", std::move(out), {ia}, [this, ia](std::span<const double> g) {
        auto ga = grad_slot(ia);
        const Tensor& x = val(ia);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] / x[i];
    });
}

Var Tape::clamp_min(Var a, double floor) {
    Tensor out = node(a).value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(out[i], floor);
    const std::size_t ia = a.id;
    return push("clamp_min", std::move(out), {ia}, [this, ia, floor](std::span<const double> g) {
        auto ga = grad_slot(ia);
        const Tensor& x = val(ia);
        for (std::size_t i = 0; i < ga.size(); ++i)
            if (x[i] > floor) ga[i] += g[i];
    });
}

Var Tape::softmax_rows(Var a) {
    Tensor out = symgrade::softmax_rows(node(a).value);
    const std::size_t ia = a.id;
    const std::size_t self = nodes_.size();
    const double fault = fault_ == GradFault::softmax ? 1.01 : 1.0;
    return push("softmax_rows", std::move(out), {ia}, [this, ia, self, fault](std::span<const double> g) {
        // dx = y * (g - <g, y>) per row
        auto ga = grad_slot(ia);
        const Tensor& y = val(self);
        const std::size_t n = y.rows(), k = y.cols();
        for (std::size_t i = 0; i < n; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < k; ++j) dot += g[i * k + j] * y(i, j);
            for (std::size_t j = 0; j < k; ++j)
                ga[i * k + j] += fault * y(i, j) * (g[i * k + j] - dot);
        }
    });
}

Var Tape::l2_normalize_rows(Var a, double eps) {
    const Tensor& av = node(a).value;
    Tensor out = symgrade::l2_normalize_rows(av, eps);
    const std::size_t n = av.rows(), d = av.cols();
    std::vector<double> norms(n);
    for (std::size_t i = 0; i < n; ++i) {
        double sq = 0.0;
        for (std::size_t j = 0; j < d; ++j) sq += av(i, j) * av(i, j);
        norms[i] = std::sqrt(sq);
    }
    const std::size_t ia = a.id;
    const std::size_t self = nodes_.size();
    return push("l2_normalize_rows", std::move(out), {ia},
                [this, ia, self, eps, norms = std::move(norms)](std::span<const double> g) {
                    auto ga = grad_slot(ia);
                    const Tensor& y = val(self);
                    const std::size_t rows = y.rows(), width = y.cols();
                    for (std::size_t i = 0; i < rows; ++i) {
                        if (norms[i] > eps) {
                            // dx = (g - y <g, y>) / |x|
                            double dot = 0.0;
                            for (std::size_t j = 0; j < width; ++j) dot += g[i * width + j] * y(i, j);
                            for (std::size_t j = 0; j < width; ++j)
                                ga[i * width + j] += (g[i * width + j] - y(i, j) * dot) / norms[i];
                        } else {
                            for (std::size_t j = 0; j < width; ++j) ga[i * width + j] += g[i * width + j] / eps;
                        }
                    }
                });
}

Var Tape::mean_row_groups(Var a, std::size_t group) {
    const Tensor& av = node(a).value;
    if (group == 0 || av.rows() % group != 0) {
        throw ShapeError("mean_row_groups: " + std::to_string(av.rows()) +
                         " rows not divisible into groups of " + std::to_string(group));
    }
    const std::size_t n = av.rows() / group, c = av.cols();
    Tensor out({n, c});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t r = 0; r < group; ++r)
            for (std::size_t j = 0; j < c; ++j) out(i, j) += av(i * group + r, j);
    const double inv = 1.0 / static_cast<double>(group);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= inv;
    const std::size_t ia = a.id;
    return push("mean_row_groups", std::move(out), {ia}, [this, ia, group, n, c, inv](std::span<const double> g) {
        auto ga = grad_slot(ia);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t r = 0; r < group; ++r)
                for (std::size_t j = 0; j < c; ++j) ga[(i * group + r) * c + j] += inv * g[i * c + j];
    });
}

Var Tape::sum(Var a) {
    const Tensor& av = node(a).value;
    double total = 0.0;
    for (double v : av.data()) total += v;
    const std::size_t ia = a.id;
    return push("sum", Tensor::scalar(total), {ia}, [this, ia](std::span<const double> g) {
        auto ga = grad_slot(ia);
        for (double& x : ga) x += g[0];
    });
}

void Tape::backward(Var loss) {
    const Node& root = node(loss);
    if (root.value.size() != 1) {
        throw ContractError("backward: loss must be scalar, got shape " + to_string(root.value.shape()));
    }
    if (!root.needs_grad) {
        throw ContractError("backward: loss has an empty tape (no trainable leaf reaches it)");
    }
    grads_.assign(nodes_.size(), {});
    grad_slot(loss.id)[0] = 1.0;
    for (std::size_t id = loss.id + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (!n.needs_grad || grads_[id].empty()) continue;
        if (n.rule) {
            n.rule(grads_[id]);
        } else if (n.target != nullptr) {
            auto dst = n.target->grad_mut();
            const auto& src = grads_[id];
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
        }
    }
    grads_.clear();
}

} // namespace symgrade
