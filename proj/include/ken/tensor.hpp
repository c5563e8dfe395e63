#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ken/errors.hpp"

namespace ken {

using Shape = std::vector<int>;

inline std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace detail {

struct TensorData {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until touched by backward
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  }
};

}  // namespace detail

// Dense row-major tensor of 64-bit floats, rank 1 or 2. Copies share storage
// (handle semantics); ops produce fresh tensors.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape) : impl_(std::make_shared<detail::TensorData>()) {
    validate_shape(shape);
    impl_->shape = std::move(shape);
    impl_->values.assign(static_cast<std::size_t>(numel(impl_->shape)), 0.0);
  }

  Tensor(Shape shape, std::vector<double> values)
      : impl_(std::make_shared<detail::TensorData>()) {
    validate_shape(shape);
    if (static_cast<std::int64_t>(values.size()) != numel(shape)) {
      throw ShapeError("tensor data length " + std::to_string(values.size()) +
                       " does not match shape " + shape_str(shape));
    }
    impl_->shape = std::move(shape);
    impl_->values = std::move(values);
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor full(Shape shape, double v) {
    Tensor t(std::move(shape));
    for (double& x : t.impl_->values) x = v;
    return t;
  }

  static Tensor ones(Shape shape) { return full(std::move(shape), 1.0); }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  bool defined() const { return impl_ != nullptr; }

  const Shape& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  int dim(int i) const { return impl_->shape[static_cast<std::size_t>(i)]; }
  std::int64_t size() const { return static_cast<std::int64_t>(impl_->values.size()); }

  // Rank-2 conveniences.
  int rows() const { return impl_->shape[0]; }
  int cols() const { return rank() == 2 ? impl_->shape[1] : 1; }

  std::span<double> data() { return impl_->values; }
  std::span<const double> data() const { return impl_->values; }

  double& at(int i) { return impl_->values[static_cast<std::size_t>(i)]; }
  double at(int i) const { return impl_->values[static_cast<std::size_t>(i)]; }
  double& at(int r, int c) {
    return impl_->values[static_cast<std::size_t>(r) * impl_->shape[1] + c];
  }
  double at(int r, int c) const {
    return impl_->values[static_cast<std::size_t>(r) * impl_->shape[1] + c];
  }

  // Scalar extraction; throws unless the tensor holds exactly one element.
  double value() const {
    if (size() != 1) {
      throw ShapeError("expected scalar tensor, got shape " + shape_str(shape()));
    }
    return impl_->values[0];
  }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool v) {
    impl_->requires_grad = v;
    return *this;
  }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<double> grad() {
    impl_->ensure_grad();
    return impl_->grad;
  }
  std::span<const double> grad() const { return impl_->grad; }
  double grad_at(int i) const {
    return impl_->grad.empty() ? 0.0 : impl_->grad[static_cast<std::size_t>(i)];
  }

  // Allocates the grad buffer if needed; a parameter untouched by backward
  // reads as an all-zero gradient afterwards.
  void zero_grad() { impl_->grad.assign(impl_->values.size(), 0.0); }

  bool all_finite() const {
    for (double v : impl_->values) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  // Identity of the underlying storage; two handles alias iff these compare equal.
  const void* id() const { return impl_.get(); }

  std::shared_ptr<detail::TensorData> impl() const { return impl_; }

 private:
  static void validate_shape(const Shape& shape) {
    if (shape.empty() || shape.size() > 2) {
      throw ShapeError("tensor rank must be 1 or 2, got " + shape_str(shape));
    }
    for (int d : shape) {
      if (d <= 0) throw ShapeError("tensor dims must be positive, got " + shape_str(shape));
    }
  }

  std::shared_ptr<detail::TensorData> impl_;
};

}  // namespace ken
