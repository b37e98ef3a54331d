#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "minconv/network.hpp"

namespace minconv::train {

struct SgdConfig {
  double lr = 0.01;
  double momentum = 0.9;
};

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

using OptimizerConfig = std::variant<SgdConfig, AdamConfig>;

double base_lr(const OptimizerConfig& cfg);
std::string optimizer_name(const OptimizerConfig& cfg);

/// Step decay: the rate is multiplied by `factor` once the epoch index reaches
/// each fraction of the total epoch count.
struct StepSchedule {
  std::vector<double> milestones{0.5, 0.75};
  double factor = 0.1;

  double lr_at(double base, std::uint64_t epoch, std::uint64_t total_epochs) const;
};

/// SGD with momentum (v <- m*v + g; p <- p - lr*v) or Adam with bias
/// correction.
template <typename T>
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}

  void step(const std::vector<nn::Param<T>>& params, double lr);

  const OptimizerConfig& config() const { return cfg_; }
  std::uint64_t steps() const { return steps_; }
  /// Momentum buffers (SGD) or first then second moments (Adam), in parameter
  /// order. Empty before the first step.
  std::vector<Tensor<T>>& state() { return state_; }
  const std::vector<Tensor<T>>& state() const { return state_; }
  void restore(std::vector<Tensor<T>> state, std::uint64_t steps);

 private:
  void ensure_state(const std::vector<nn::Param<T>>& params);

  OptimizerConfig cfg_;
  std::vector<Tensor<T>> state_;
  std::uint64_t steps_ = 0;
};

extern template class Optimizer<float>;
extern template class Optimizer<double>;

}  // namespace minconv::train
