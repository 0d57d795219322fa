#include "sremtl/params.hpp"

namespace sremtl {

Tensor normal_param(Shape shape, double stddev, Rng& rng) {
  std::vector<double> v(numel_of(shape));
  for (double& x : v) x = rng.normal(0.0, stddev);
  Tensor t(std::move(shape), std::move(v));
  t.set_requires_grad(true);
  return t;
}

Tensor uniform_param(Shape shape, double lo, double hi, Rng& rng) {
  std::vector<double> v(numel_of(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  Tensor t(std::move(shape), std::move(v));
  t.set_requires_grad(true);
  return t;
}

Tensor constant_param(Shape shape, double value) {
  Tensor t(std::move(shape), value);
  t.set_requires_grad(true);
  return t;
}

void set_trainable(const ParameterList& params, bool on) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.set_requires_grad(on);
    if (!on) t.zero_grad();
  }
}

double squared_norm(const ParameterList& params) {
  double total = 0.0;
  for (const auto& p : params)
    if (p.decay)
      for (double v : p.tensor.data()) total += v * v;
  return total;
}

}  // namespace sremtl
