#include "minconv/optimizer.hpp"

#include <cmath>

namespace minconv::train {

double base_lr(const OptimizerConfig& cfg) {
  return std::visit([](const auto& c) { return c.lr; }, cfg);
}

std::string optimizer_name(const OptimizerConfig& cfg) {
  return std::holds_alternative<SgdConfig>(cfg) ? "sgd" : "adam";
}

double StepSchedule::lr_at(double base, std::uint64_t epoch, std::uint64_t total_epochs) const {
  double lr = base;
  for (double m : milestones) {
    if (static_cast<double>(epoch) >= m * static_cast<double>(total_epochs)) lr *= factor;
  }
  return lr;
}

template <typename T>
void Optimizer<T>::ensure_state(const std::vector<nn::Param<T>>& params) {
  const std::size_t per_param = std::holds_alternative<SgdConfig>(cfg_) ? 1 : 2;
  if (state_.size() == per_param * params.size()) return;
  state_.clear();
  for (std::size_t s = 0; s < per_param; ++s) {
    for (const auto& p : params) state_.emplace_back(p.value->shape());
  }
}

template <typename T>
void Optimizer<T>::restore(std::vector<Tensor<T>> state, std::uint64_t steps) {
  state_ = std::move(state);
  steps_ = steps;
}

template <typename T>
void Optimizer<T>::step(const std::vector<nn::Param<T>>& params, double lr) {
  ensure_state(params);
  ++steps_;
  if (const auto* sgd = std::get_if<SgdConfig>(&cfg_)) {
    const T m = static_cast<T>(sgd->momentum);
    const T rate = static_cast<T>(lr);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto v = state_[i].values();
      auto w = params[i].value->values();
      auto g = params[i].grad->values();
      for (std::size_t j = 0; j < w.size(); ++j) {
        v[j] = m * v[j] + g[j];
        w[j] -= rate * v[j];
      }
    }
    return;
  }
  const auto& adam = std::get<AdamConfig>(cfg_);
  const double bc1 = 1.0 - std::pow(adam.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(adam.beta2, static_cast<double>(steps_));
  const std::size_t n = params.size();
  for (std::size_t i = 0; i < n; ++i) {
    auto m1 = state_[i].values();
    auto m2 = state_[n + i].values();
    auto w = params[i].value->values();
    auto g = params[i].grad->values();
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = static_cast<double>(g[j]);
      m1[j] = static_cast<T>(adam.beta1 * m1[j] + (1.0 - adam.beta1) * gj);
      m2[j] = static_cast<T>(adam.beta2 * m2[j] + (1.0 - adam.beta2) * gj * gj);
      const double mhat = m1[j] / bc1;
      const double vhat = m2[j] / bc2;
      w[j] = static_cast<T>(w[j] - lr * mhat / (std::sqrt(vhat) + adam.eps));
    }
  }
}

template class Optimizer<float>;
template class Optimizer<double>;

}  // namespace minconv::train
