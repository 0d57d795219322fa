#pragma once

#include <string>
#include <vector>

#include "sremtl/rng.hpp"
#include "sremtl/tensor.hpp"

namespace sremtl {

struct NamedTensor {
  std::string name;
  Tensor tensor;
  // Counted by the L2 penalty (weight matrices and conv kernels).
  bool decay = false;
};

using ParameterList = std::vector<NamedTensor>;

// Leaf initializers.
Tensor normal_param(Shape shape, double stddev, Rng& rng);
Tensor uniform_param(Shape shape, double lo, double hi, Rng& rng);
Tensor constant_param(Shape shape, double value);

void set_trainable(const ParameterList& params, bool on);
double squared_norm(const ParameterList& params);

}  // namespace sremtl
