#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "sremtl/ops.hpp"
#include "sremtl/rng.hpp"
#include "sremtl/tensor.hpp"

namespace sremtl::testing {

struct GradCheck {
  double max_error = 0.0;  // worst relative error over all checked entries
  std::size_t checked = 0;
};

/// Compares backward() against central differences for every entry of
/// `inputs`. The error of one entry is |analytic - numeric| /
/// max(|analytic|, |numeric|, floor). `loss` must rebuild the graph from the
/// current input values on every call.
inline GradCheck grad_check(const std::function<Tensor()>& loss,
                            std::vector<Tensor> inputs, double h = 1e-5,
                            double floor = 1e-3) {
  for (auto& x : inputs) {
    x.set_requires_grad(true);
    x.zero_grad();
  }
  Tensor out = loss();
  backward(out);
  std::vector<std::vector<double>> analytic;
  for (auto& x : inputs) {
    if (x.has_grad()) {
      analytic.emplace_back(x.grad().begin(), x.grad().end());
    } else {
      analytic.emplace_back(x.numel(), 0.0);
    }
    x.zero_grad();
  }
  GradCheck result;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto data = inputs[k].mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + h;
      const double up = loss().item();
      data[i] = saved - h;
      const double down = loss().item();
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      result.max_error = std::max(result.max_error, std::abs(a - numeric) / denom);
      ++result.checked;
    }
    inputs[k].zero_grad();
  }
  return result;
}

inline Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  std::vector<double> v(numel_of(shape));
  for (double& x : v) x = rng.normal(0.0, scale);
  return Tensor(std::move(shape), std::move(v));
}

inline Tensor random_positive(Shape shape, Rng& rng, double lo = 0.5, double hi = 2.0) {
  std::vector<double> v(numel_of(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v));
}

// Weighted sum of every output entry so that each one influences the loss
// differently.
inline Tensor probe(const Tensor& y, std::uint64_t seed = 99) {
  Rng rng(seed);
  Tensor w = random_tensor(y.shape(), rng);
  return sum(mul(y, w));
}

}  // namespace sremtl::testing
