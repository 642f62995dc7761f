#pragma once
// Optimizers: Adam for the adversarial parts, SGD with momentum (optionally
// with per-group learning rates) for the feature learner.  Learning rates are
// plain public fields so schedules can update them between steps.

#include <cstdint>
#include <vector>

#include "translearn/nn.hpp"

namespace translearn {

class Adam {
 public:
  Adam(std::vector<Param*> params, double lr, double beta1 = 0.5,
       double beta2 = 0.999, double eps = 1e-8);

  void step();
  void zero_grad();
  const std::vector<Param*>& params() const { return params_; }

  double lr;
  double beta1, beta2, eps;

  struct State {
    std::int64_t t = 0;
    std::vector<Tensor> m, v;
  };
  State& state() { return state_; }
  const State& state() const { return state_; }

 private:
  std::vector<Param*> params_;
  State state_;
};

class SGD {
 public:
  struct Group {
    std::vector<Param*> params;
    double lr;
  };

  SGD(std::vector<Group> groups, double momentum = 0.9, double weight_decay = 0.0);

  void step();
  void zero_grad();
  std::vector<Group>& groups() { return groups_; }

  double momentum, weight_decay;

  struct State {
    // One velocity tensor per parameter, flattened over groups in order.
    std::vector<Tensor> velocity;
  };
  State& state() { return state_; }
  const State& state() const { return state_; }

 private:
  std::vector<Group> groups_;
  State state_;
};

}  // namespace translearn
