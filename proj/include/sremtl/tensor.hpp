#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sremtl/errors.hpp"

namespace sremtl {

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node;

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  // Empty unless has_grad.
  std::vector<double> grad;
  bool has_grad = false;
  bool requires_grad = false;
  std::shared_ptr<Node> grad_fn;

  std::vector<double>& grad_buffer();
};

// Reads out.grad (and out.data when handy) and accumulates into the inputs.
using BackwardFn = std::function<void(const TensorImpl& out)>;

struct Node {
  std::uint64_t id = 0;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  BackwardFn backward;
  bool consumed = false;
};

}  // namespace detail

/// Dense row-major float64 array with an optional gradient record.
///
/// Copies share storage (a Tensor is a handle); use clone() for an
/// independent copy. Operations build the computation graph on the fly
/// whenever one of their inputs requires a gradient; backward() walks it once
/// and releases it.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const double> data() const { return impl_->data; }
  // Writable view; only meaningful on leaves (parameters, inputs).
  std::span<double> mutable_data() { return impl_->data; }
  double item() const;
  double operator[](std::size_t i) const { return impl_->data[i]; }
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool is_leaf() const { return impl_->grad_fn == nullptr; }

  bool has_grad() const { return impl_->has_grad; }
  std::span<const double> grad() const;
  void zero_grad();

  // 0 for leaves.
  std::uint64_t node_id() const;

  Tensor detach() const;
  Tensor clone() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl);

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Reverse-mode sweep from a scalar loss. Populates grad on every reachable
/// tensor that requires one, then frees the graph. Calling it twice on the
/// same graph is a ContractError; a constant loss is a no-op.
void backward(const Tensor& loss);

namespace detail {

// Builds the output of an operation: attaches a graph node when any input
// requires a gradient, otherwise returns a plain constant.
Tensor make_result(Shape shape, std::vector<double> data,
                   std::vector<Tensor> inputs, BackwardFn fn);

// Accumulation target for an input gradient, or nullptr when the input does
// not participate in differentiation.
std::vector<double>* grad_target(const Tensor& t);

}  // namespace detail

}  // namespace sremtl
