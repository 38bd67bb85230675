// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace symgrade {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t element_count(const Shape& shape);

/// Dense row-major array of doubles with an optional gradient buffer.
///
/// A rank-0 tensor (empty shape) holds exactly one element. Gradients are
/// only ever accumulated into, never reset implicitly; callers clear them
/// with zero_grad() before each backward pass.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double value);
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor row(std::initializer_list<double> values);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t dim(std::size_t axis) const;

    /// Extents of a rank-2 tensor; throw ShapeError otherwise.
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }

    /// The single value of a one-element tensor.
    double item() const;

    bool requires_grad() const noexcept { return requires_grad_; }
    void set_requires_grad(bool on) noexcept { requires_grad_ = on; }

    bool has_grad() const noexcept { return grad_.has_value(); }
    std::span<const double> grad() const;
    /// Gradient buffer, allocated as zeros on first access.
    std::span<double> grad_mut();
    void zero_grad();
    void clear_grad() noexcept { grad_.reset(); }

    /// Same data under a new shape with the same element count.
    Tensor reshaped(Shape shape) const;

    bool all_finite() const noexcept;
    bool same_values(const Tensor& other) const noexcept;

private:
    Shape shape_{0};
    std::vector<double> data_;
    std::optional<std::vector<double>> grad_;
    bool requires_grad_ = false;
};

/// Plain (untaped) kernels shared by the tape and by evaluation code.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor softmax_rows(const Tensor& logits);
Tensor l2_normalize_rows(const Tensor& x, double eps = 1e-12);

} // namespace symgrade
