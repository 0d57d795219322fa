#include "sremtl/tensor.hpp"

#include <atomic>
#include <sstream>
#include <unordered_set>

namespace sremtl {

std::size_t numel_of(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

std::vector<double>& TensorImpl::grad_buffer() {
  if (!has_grad) {
    grad.assign(data.size(), 0.0);
    has_grad = true;
  }
  return grad;
}

namespace {
std::atomic<std::uint64_t> next_node_id{1};
}

Tensor make_result(Shape shape, std::vector<double> data,
                   std::vector<Tensor> inputs, BackwardFn fn) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in.requires_grad();
  if (needs) {
    auto node = std::make_shared<Node>();
    node->id = next_node_id.fetch_add(1, std::memory_order_relaxed);
    node->inputs.reserve(inputs.size());
    for (const auto& in : inputs) node->inputs.push_back(in.impl());
    node->backward = std::move(fn);
    impl->requires_grad = true;
    impl->grad_fn = std::move(node);
  }
  return Tensor(std::move(impl));
}

std::vector<double>* grad_target(const Tensor& t) {
  if (!t.requires_grad()) return nullptr;
  return &t.impl()->grad_buffer();
}

}  // namespace detail

Tensor::Tensor() : Tensor(Shape{}, 0.0) {}

Tensor::Tensor(Shape shape, double fill)
    : impl_(std::make_shared<detail::TensorImpl>()) {
  impl_->data.assign(numel_of(shape), fill);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : impl_(std::make_shared<detail::TensorImpl>()) {
  if (numel_of(shape) != values.size()) {
    throw ShapeError("tensor shape " + shape_str(shape) + " needs " +
                     std::to_string(numel_of(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

Tensor::Tensor(std::shared_ptr<detail::TensorImpl> impl)
    : impl_(std::move(impl)) {}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, value); }

Tensor Tensor::vector(std::vector<double> values) {
  Shape s{values.size()};
  return Tensor(std::move(s), std::move(values));
}

Tensor Tensor::matrix(
    std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged matrix literal");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor(Shape{r, c}, std::move(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                     shape_str(shape()));
  }
  return impl_->shape[axis];
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  }
  return impl_->data[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  if (rank() != 2) throw ShapeError("at(row, col) needs a matrix");
  return impl_->data[row * impl_->shape[1] + col];
}

Tensor& Tensor::set_requires_grad(bool on) {
  if (!is_leaf()) {
    throw ContractError("requires_grad can only be toggled on leaf tensors");
  }
  impl_->requires_grad = on;
  return *this;
}

std::span<const double> Tensor::grad() const {
  if (!impl_->has_grad) throw ContractError("tensor has no gradient");
  return impl_->grad;
}

void Tensor::zero_grad() {
  impl_->grad.clear();
  impl_->grad.shrink_to_fit();
  impl_->has_grad = false;
}

std::uint64_t Tensor::node_id() const {
  return impl_->grad_fn ? impl_->grad_fn->id : 0;
}

Tensor Tensor::detach() const { return Tensor(impl_->shape, impl_->data); }

Tensor Tensor::clone() const {
  Tensor t(impl_->shape, impl_->data);
  t.impl_->requires_grad = impl_->requires_grad && is_leaf();
  return t;
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) return;
  using detail::TensorImpl;
  TensorImpl* root = loss.impl().get();
  if (root->grad_fn && root->grad_fn->consumed) {
    throw ContractError(
        "backward() called twice on the same graph; run the forward pass "
        "again");
  }

  // Iterative post-order DFS gives a topological order (inputs first).
  std::vector<TensorImpl*> order;
  std::vector<TensorImpl*> leaves;
  std::unordered_set<TensorImpl*> seen;
  std::vector<std::pair<TensorImpl*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [impl, next] = stack.back();
    if (!impl->grad_fn) {
      leaves.push_back(impl);
      stack.pop_back();
      continue;
    }
    auto& inputs = impl->grad_fn->inputs;
    if (next < inputs.size()) {
      TensorImpl* child = inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) {
        stack.emplace_back(child, 0);
      }
      continue;
    }
    order.push_back(impl);
    stack.pop_back();
  }

  root->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* impl = *it;
    if (impl->has_grad && impl->grad_fn->backward) {
      impl->grad_fn->backward(*impl);
    }
  }
  for (TensorImpl* leaf : leaves) leaf->grad_buffer();

  for (TensorImpl* impl : order) {
    auto& node = *impl->grad_fn;
    node.backward = nullptr;
    node.inputs.clear();
    node.consumed = true;
    if (impl != root) {
      impl->grad.clear();
      impl->grad.shrink_to_fit();
      impl->has_grad = false;
    }
  }
}

}  // namespace sremtl
