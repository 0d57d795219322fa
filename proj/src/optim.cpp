#include "sremtl/optim.hpp"

#include <cmath>

namespace sremtl {

Adam::Adam(AdamConfig config) : config_(config) {
  if (!(config_.beta1 >= 0.0 && config_.beta1 < 1.0) ||
      !(config_.beta2 >= 0.0 && config_.beta2 < 1.0) || !(config_.eps > 0.0)) {
    throw ParameterError("adam: betas must lie in [0, 1) and eps must be > 0");
  }
}

void Adam::add_group(const std::string& name, ParameterList params, double lr) {
  if (!(lr > 0.0)) throw ParameterError("adam: learning rate for '" + name + "' must be > 0");
  if (groups_.count(name)) throw ContractError("adam: duplicate group '" + name + "'");
  groups_[name] = Group{std::move(params), lr};
  order_.push_back(name);
}

bool Adam::has_group(const std::string& name) const { return groups_.count(name) > 0; }

const ParameterList& Adam::group(const std::string& name) const {
  auto it = groups_.find(name);
  if (it == groups_.end()) throw ContractError("adam: no group '" + name + "'");
  return it->second.params;
}

double Adam::learning_rate(const std::string& name) const {
  auto it = groups_.find(name);
  if (it == groups_.end()) throw ContractError("adam: no group '" + name + "'");
  return it->second.lr;
}

void Adam::step_all() { step(order_); }

void Adam::step(const std::vector<std::string>& groups) {
  const double b1 = config_.beta1, b2 = config_.beta2;
  for (const auto& name : groups) {
    auto it = groups_.find(name);
    if (it == groups_.end()) throw ContractError("adam: no group '" + name + "'");
    for (const auto& p : it->second.params) {
      if (!p.tensor.requires_grad() || !p.tensor.has_grad()) {
        throw ContractError("adam: parameter '" + p.name + "' in group '" + name +
                            "' has no gradient");
      }
    }
  }
  for (const auto& name : groups) {
    const Group& g = groups_.at(name);
    for (const auto& p : g.params) {
      Tensor t = p.tensor;
      Moments& s = state_[t.impl().get()];
      const std::size_t n = t.numel();
      if (s.m.empty()) {
        s.m.assign(n, 0.0);
        s.v.assign(n, 0.0);
      }
      ++s.steps;
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(s.steps));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(s.steps));
      auto grad = t.grad();
      auto data = t.mutable_data();
      for (std::size_t i = 0; i < n; ++i) {
        s.m[i] = b1 * s.m[i] + (1.0 - b1) * grad[i];
        s.v[i] = b2 * s.v[i] + (1.0 - b2) * grad[i] * grad[i];
        const double mhat = s.m[i] / c1, vhat = s.v[i] / c2;
        data[i] -= g.lr * mhat / (std::sqrt(vhat) + config_.eps);
      }
      t.zero_grad();
    }
  }
  ++updates_;
}

}  // namespace sremtl
