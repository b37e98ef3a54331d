#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "minconv/checkpoint.hpp"
#include "minconv/data.hpp"
#include "minconv/network.hpp"
#include "minconv/optimizer.hpp"

namespace minconv::train {

struct TrainConfig {
  std::size_t batch_size = 64;
  std::uint64_t epochs = 10;
  OptimizerConfig optimizer = SgdConfig{};
  StepSchedule schedule;
  double gamma = 0.99;
  std::uint64_t seed = 1;
  bool shuffle = true;

  void validate() const;
};

struct Metrics {
  double loss = 0.0;
  double top1 = 0.0;  // fraction in [0, 1]
};

struct MetricsRow {
  std::uint64_t epoch = 0;
  std::string split;  // "train" or "test"
  Metrics metrics;
};

/// Mini-batch training loop. Each batch runs forward with batch statistics,
/// softmax cross-entropy, backward and one optimizer step.
class Trainer {
 public:
  Trainer(nn::Network<float>& net, TrainConfig cfg);

  /// One pass over `data` using the permutation for (seed, epoch). Returns the
  /// mean training loss and top-1 accuracy. Throws DivergenceError when the
  /// loss stops being finite.
  Metrics train_epoch(const data::Dataset& data, std::uint64_t epoch);

  /// Applies one optimizer step on a single batch and returns its loss.
  double train_step(const Tensor<float>& x, const std::vector<int>& y, double lr);

  double lr_for_epoch(std::uint64_t epoch) const;
  Optimizer<float>& optimizer() { return optimizer_; }
  const TrainConfig& config() const { return cfg_; }

 private:
  nn::Network<float>& net_;
  TrainConfig cfg_;
  Optimizer<float> optimizer_;
};

/// Inference-phase loss and top-1 accuracy.
Metrics evaluate(nn::Network<float>& net, const data::Dataset& data, std::size_t batch_size = 256);

/// Resets every conv layer's running mean |x| to the element-weighted mean
/// of the per-batch means over one pass of `data` (training-phase forward,
/// no parameter updates).
void calibrate_statistics(nn::Network<float>& net, const data::Dataset& data, std::size_t batch_size,
                          std::uint64_t seed);

/// Loads parameters from a checkpoint (conv modes may differ) then
/// recalibrates the running statistics on `calibration` data.
void transfer_init(nn::Network<float>& net, const checkpoint::Checkpoint& ckpt, const data::Dataset& calibration,
                   std::size_t batch_size, std::uint64_t seed);

/// Diagnostic summary of per-layer statistics, used in divergence reports.
std::string describe_statistics(const nn::Network<float>& net);

void write_metrics_header(std::ostream& os);
void write_metrics_row(std::ostream& os, const MetricsRow& row);
std::vector<MetricsRow> read_metrics_csv(std::istream& is);

using EpochCallback =
    std::function<void(std::uint64_t epoch, const Metrics& train, const Metrics& test, Trainer& trainer)>;

/// Trains for cfg.epochs, evaluating on `test` after each epoch and appending
/// both rows to `metrics_out` when given.
std::vector<MetricsRow> fit(nn::Network<float>& net, const TrainConfig& cfg, const data::Dataset& train_set,
                            const data::Dataset& test_set, std::ostream* metrics_out = nullptr,
                            const EpochCallback& on_epoch = {});

}  // namespace minconv::train
