#pragma once

#include <cstddef>
#include <initializer_list>
#include <map>
#include <string>
#include <vector>

#include "sremtl/params.hpp"

namespace sremtl {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with named parameter groups, each with its own learning rate.
///
/// Moments and step counts are kept per parameter, so a parameter shared by
/// several groups (or stepped only on some updates) gets the usual
/// bias correction for the number of updates it actually received.
class Adam {
 public:
  explicit Adam(AdamConfig config = {});

  void add_group(const std::string& name, ParameterList params, double lr);
  bool has_group(const std::string& name) const;
  const ParameterList& group(const std::string& name) const;
  double learning_rate(const std::string& name) const;

  // Updates every parameter of the listed groups from its gradient and then
  // clears the gradients. A parameter with requires_grad set but no gradient
  // is a ContractError.
  void step(const std::vector<std::string>& groups);
  void step_all();

  std::size_t updates() const { return updates_; }

 private:
  struct Group {
    ParameterList params;
    double lr = 0.0;
  };
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
    std::size_t steps = 0;
  };

  AdamConfig config_;
  std::map<std::string, Group> groups_;
  std::vector<std::string> order_;
  std::map<const void*, Moments> state_;
  std::size_t updates_ = 0;
};

}  // namespace sremtl
