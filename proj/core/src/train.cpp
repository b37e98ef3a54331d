#include "minconv/train.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "minconv/errors.hpp"

namespace minconv::train {

void TrainConfig::validate() const {
  if (batch_size == 0) throw UsageError("batch size must be positive");
  if (epochs == 0) throw UsageError("epoch count must be positive");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw UsageError("gamma must lie in [0, 1)");
  const double lr = base_lr(optimizer);
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw UsageError("learning rate must be a finite non-negative number");
}

Trainer::Trainer(nn::Network<float>& net, TrainConfig cfg) : net_(net), cfg_(std::move(cfg)), optimizer_(cfg_.optimizer) {
  cfg_.validate();
  net_.set_input_grad(false);
  for (auto* conv : net_.conv_layers()) conv->core().stats.gamma = cfg_.gamma;
}

double Trainer::lr_for_epoch(std::uint64_t epoch) const {
  return cfg_.schedule.lr_at(base_lr(cfg_.optimizer), epoch, cfg_.epochs);
}

double Trainer::train_step(const Tensor<float>& x, const std::vector<int>& y, double lr) {
  const Tensor<float> logits = net_.forward(x, Phase::train);
  auto loss = nn::softmax_cross_entropy(logits, y);
  if (!std::isfinite(loss.loss)) {
    throw DivergenceError("training diverged: loss is " + std::to_string(loss.loss) + "\n" +
                          describe_statistics(net_));
  }
  net_.backward(loss.grad_logits);
  optimizer_.step(net_.params(), lr);
  return loss.loss;
}

Metrics Trainer::train_epoch(const data::Dataset& data, std::uint64_t epoch) {
  if (data.size() == 0) throw DegenerateInputError("training set is empty");
  const data::BatchSampler sampler(data.size(), cfg_.batch_size, cfg_.seed, cfg_.shuffle);
  const double lr = lr_for_epoch(epoch);
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (const auto& idx : sampler.epoch_batches(epoch)) {
    const data::Batch b = data::gather(data, idx);
    const Tensor<float> logits = net_.forward(b.x, Phase::train);
    auto loss = nn::softmax_cross_entropy(logits, b.y);
    if (!std::isfinite(loss.loss)) {
      throw DivergenceError("training diverged in epoch " + std::to_string(epoch) + ": loss is " +
                            std::to_string(loss.loss) + "\n" + describe_statistics(net_));
    }
    const auto pred = nn::argmax_rows(logits);
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == b.y[i];
    loss_sum += loss.loss * static_cast<double>(b.y.size());
    net_.backward(loss.grad_logits);
    optimizer_.step(net_.params(), lr);
  }
  const double n = static_cast<double>(data.size());
  return {loss_sum / n, static_cast<double>(correct) / n};
}

Metrics evaluate(nn::Network<float>& net, const data::Dataset& data, std::size_t batch_size) {
  if (data.size() == 0) throw DegenerateInputError("evaluation set is empty");
  if (batch_size == 0) throw UsageError("batch size must be positive");
  double loss_sum = 0.0;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(data.size(), start + batch_size);
    idx.clear();
    for (std::size_t i = start; i < end; ++i) idx.push_back(i);
    const data::Batch b = data::gather(data, idx);
    const Tensor<float> logits = net.forward(b.x, Phase::infer);
    const auto loss = nn::softmax_cross_entropy(logits, b.y);
    const auto pred = nn::argmax_rows(logits);
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == b.y[i];
    loss_sum += loss.loss * static_cast<double>(b.y.size());
  }
  const double n = static_cast<double>(data.size());
  return {loss_sum / n, static_cast<double>(correct) / n};
}

void calibrate_statistics(nn::Network<float>& net, const data::Dataset& data, std::size_t batch_size,
                          std::uint64_t seed) {
  if (data.size() == 0) throw DegenerateInputError("calibration set is empty");
  if (batch_size == 0) throw UsageError("batch size must be positive");
  auto convs = net.conv_layers();
  std::vector<double> saved_gamma;
  for (auto* c : convs) saved_gamma.push_back(c->core().stats.gamma);
  const data::BatchSampler sampler(data.size(), batch_size, seed, false);
  double seen = 0.0;
  for (const auto& idx : sampler.epoch_batches(0)) {
    const double n = static_cast<double>(idx.size());
    // With gamma = seen / (seen + n) the moving average becomes the running
    // sample-weighted mean of the batch means.
    for (auto* c : convs) {
      c->core().stats.gamma = seen / (seen + n);
      c->core().stats.updates = seen > 0 ? c->core().stats.updates : 1;
      if (seen == 0) c->core().stats.mu_x_running = 0.0;
    }
    const data::Batch b = data::gather(data, idx);
    net.forward(b.x, Phase::train);
    seen += n;
  }
  for (std::size_t i = 0; i < convs.size(); ++i) convs[i]->core().stats.gamma = saved_gamma[i];
}

void transfer_init(nn::Network<float>& net, const checkpoint::Checkpoint& ckpt, const data::Dataset& calibration,
                   std::size_t batch_size, std::uint64_t seed) {
  checkpoint::restore_network(ckpt, net);
  calibrate_statistics(net, calibration, batch_size, seed);
}

std::string describe_statistics(const nn::Network<float>& net) {
  std::ostringstream os;
  os.precision(6);
  const auto convs = net.conv_layers();
  for (std::size_t i = 0; i < convs.size(); ++i) {
    const auto& core = convs[i]->core();
    double lo = 0.0, hi = 0.0;
    if (!core.stats.mu_w.empty()) {
      lo = hi = core.stats.mu_w.front();
      for (double m : core.stats.mu_w) {
        lo = std::min(lo, m);
        hi = std::max(hi, m);
      }
    }
    os << "conv " << i << " (" << nn::to_string(core.mode) << "): mu_x_running=" << core.stats.mu_x_running
       << " updates=" << core.stats.updates << " mu_w in [" << lo << ", " << hi << "]\n";
  }
  return os.str();
}

void write_metrics_header(std::ostream& os) { os << "epoch,split,loss,top1\n"; }

void write_metrics_row(std::ostream& os, const MetricsRow& row) {
  const auto old = os.precision(17);
  os << row.epoch << ',' << row.split << ',' << row.metrics.loss << ',' << row.metrics.top1 << '\n';
  os.precision(old);
}

std::vector<MetricsRow> read_metrics_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "epoch,split,loss,top1") throw FormatError("metrics CSV: bad header");
  std::vector<MetricsRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string epoch, split, loss, top1;
    if (!std::getline(ls, epoch, ',') || !std::getline(ls, split, ',') || !std::getline(ls, loss, ',') ||
        !std::getline(ls, top1)) {
      throw FormatError("metrics CSV: malformed row '" + line + "'");
    }
    try {
      rows.push_back({std::stoull(epoch), split, {std::stod(loss), std::stod(top1)}});
    } catch (const std::exception&) {
      throw FormatError("metrics CSV: malformed row '" + line + "'");
    }
  }
  return rows;
}

std::vector<MetricsRow> fit(nn::Network<float>& net, const TrainConfig& cfg, const data::Dataset& train_set,
                            const data::Dataset& test_set, std::ostream* metrics_out, const EpochCallback& on_epoch) {
  Trainer trainer(net, cfg);
  std::vector<MetricsRow> rows;
  if (metrics_out) write_metrics_header(*metrics_out);
  for (std::uint64_t e = 0; e < cfg.epochs; ++e) {
    const Metrics tr = trainer.train_epoch(train_set, e);
    const Metrics te = evaluate(net, test_set);
    rows.push_back({e + 1, "train", tr});
    rows.push_back({e + 1, "test", te});
    if (metrics_out) {
      write_metrics_row(*metrics_out, rows[rows.size() - 2]);
      write_metrics_row(*metrics_out, rows.back());
      metrics_out->flush();
    }
    if (on_epoch) on_epoch(e + 1, tr, te, trainer);
  }
  return rows;
}

}  // namespace minconv::train
