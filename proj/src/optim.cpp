#include "translearn/optim.hpp"

#include <cmath>

namespace translearn {

Adam::Adam(std::vector<Param*> params, double lr_, double b1, double b2,
           double eps_)
    : lr(lr_), beta1(b1), beta2(b2), eps(eps_), params_(std::move(params)) {
  state_.m.reserve(params_.size());
  state_.v.reserve(params_.size());
  for (Param* p : params_) {
    state_.m.push_back(Tensor::zeros(p->value.shape()));
    state_.v.push_back(Tensor::zeros(p->value.shape()));
  }
}

void Adam::step() {
  ++state_.t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state_.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state_.t));
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    Param* p = params_[pi];
    Tensor& m = state_.m[pi];
    Tensor& v = state_.v[pi];
    for (std::int64_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      m[i] = beta1 * m[i] + (1.0 - beta1) * g;
      v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p->value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

void Adam::zero_grad() {
  for (Param* p : params_) p->grad.fill(0.0);
}

SGD::SGD(std::vector<Group> groups, double momentum_, double weight_decay_)
    : momentum(momentum_), weight_decay(weight_decay_), groups_(std::move(groups)) {
  for (const Group& g : groups_)
    for (Param* p : g.params)
      state_.velocity.push_back(Tensor::zeros(p->value.shape()));
}

void SGD::step() {
  std::size_t vi = 0;
  for (Group& g : groups_) {
    for (Param* p : g.params) {
      Tensor& vel = state_.velocity[vi++];
      for (std::int64_t i = 0; i < p->value.size(); ++i) {
        double grad = p->grad[i] + weight_decay * p->value[i];
        vel[i] = momentum * vel[i] + grad;
        p->value[i] -= g.lr * vel[i];
      }
    }
  }
}

void SGD::zero_grad() {
  for (Group& g : groups_)
    for (Param* p : g.params) p->grad.fill(0.0);
}

}  // namespace translearn
