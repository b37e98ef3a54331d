// Acceptance checks that train on real datasets. Usage:
//   acceptance_training mnist   accuracy and CPU-time targets on MNIST
//   acceptance_training cifar   warm start versus cold start on CIFAR-10
// The data root comes from MINCONV_DATA_DIR. Exits 77 (skipped) when the
// dataset files are not there.

#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>

#include "minconv/checkpoint.hpp"
#include "minconv/train.hpp"

using namespace minconv;
namespace fs = std::filesystem;

namespace {

constexpr int kSkip = 77;

std::string num(double v, int prec = 6) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

void note(const std::string& s) { std::cout << "    " << s << std::endl; }

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

fs::path find_dir(const char* sub, const char* marker) {
  const char* env = std::getenv("MINCONV_DATA_DIR");
  if (env == nullptr || *env == '\0') return {};
  for (const fs::path d : {fs::path(env) / sub, fs::path(env), fs::path(env) / sub / "cifar-10-batches-bin"}) {
    if (fs::exists(d / marker)) return d;
  }
  return {};
}

struct Reached {
  bool ok = false;
  std::uint64_t epoch = 0;
  double top1 = 0.0;
  double cpu = 0.0;
};

// Trains with the default recipe for at most `epochs` epochs and stops at
// the first epoch whose test accuracy reaches `target`.
Reached train_until(const nn::NetworkSpec& spec, const data::DatasetPair& data, std::uint64_t epochs,
                    double target) {
  nn::Network<float> net(spec, 1);
  train::TrainConfig cfg;
  cfg.epochs = epochs;
  train::Trainer trainer(net, cfg);
  Reached r;
  const double start = cpu_seconds();
  for (std::uint64_t e = 0; e < epochs; ++e) {
    const auto tr = trainer.train_epoch(data.train, e);
    const auto te = train::evaluate(net, data.test);
    r.epoch = e + 1;
    r.top1 = te.top1;
    r.cpu = cpu_seconds() - start;
    note(spec.name + " epoch " + std::to_string(r.epoch) + " train_loss=" + num(tr.loss) +
         " test_top1=" + num(te.top1) + " cpu_s=" + num(r.cpu, 5));
    if (te.top1 >= target) {
      r.ok = true;
      break;
    }
  }
  return r;
}

int run_mnist() {
  const auto dir = find_dir("mnist", "train-images-idx3-ubyte");
  if (dir.empty()) {
    std::cout << "criterion 5 mnist accuracy: SKIP  MINCONV_DATA_DIR/mnist not found" << std::endl;
    return kSkip;
  }
  const auto data = data::load_mnist(dir);
  const auto exact = train_until(nn::build_lenet({ConvMode::exact, ConvMode::exact}), data, 5, 0.98);
  const auto approx = train_until(nn::build_lenet({ConvMode::min_approx, ConvMode::min_approx}), data, 10, 0.96);
  const bool exact_ok = exact.ok && exact.cpu < 900.0;
  const bool pass = exact_ok && approx.ok;
  std::cout << "criterion 5 mnist accuracy: " << (pass ? "PASS" : "FAIL") << "  exact top1=" << num(exact.top1)
            << " at epoch " << exact.epoch << " (>=0.98 within 5, cpu " << num(exact.cpu, 5)
            << " s < 900), approx top1=" << num(approx.top1) << " at epoch " << approx.epoch
            << " (>=0.96 within 10)" << std::endl;
  return pass ? 0 : 1;
}

int run_cifar() {
  const auto dir = find_dir("cifar10", "test_batch.bin");
  if (dir.empty()) {
    std::cout << "criterion 6 cifar warm start: SKIP  CIFAR-10 binary batches not found under MINCONV_DATA_DIR"
              << std::endl;
    return kSkip;
  }
  auto data = data::load_cifar10(dir);
  data.train = data::subset(data.train, 5000, 1);
  train::TrainConfig cfg;
  cfg.epochs = 20;

  nn::Network<float> exact(nn::build_mini_cifar({ConvMode::exact, ConvMode::exact}), 1);
  train::fit(exact, cfg, data.train, data.test);
  const auto source = checkpoint::capture(exact, cfg.epochs);
  note("exact pretrain test_top1=" + num(train::evaluate(exact, data.test).top1));

  const auto approx_spec = nn::build_mini_cifar({ConvMode::min_approx, ConvMode::min_approx});
  nn::Network<float> warm(approx_spec, 1);
  train::transfer_init(warm, source, data.train, cfg.batch_size, 1);
  const auto warm_rows = train::fit(warm, cfg, data.train, data.test);
  nn::Network<float> cold(approx_spec, 1);
  const auto cold_rows = train::fit(cold, cfg, data.train, data.test);

  const double w = warm_rows.back().metrics.top1, c = cold_rows.back().metrics.top1;
  const bool pass = w > c;
  std::cout << "criterion 6 cifar warm start: " << (pass ? "PASS" : "FAIL") << "  warm top1=" << num(w)
            << " cold top1=" << num(c) << " (warm must be higher after " << cfg.epochs << " epochs)" << std::endl;
  return pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  const std::string which = argc > 1 ? argv[1] : "";
  try {
    if (which == "mnist") return run_mnist();
    if (which == "cifar") return run_cifar();
  } catch (const std::exception& e) {
    std::cout << "error: " << e.what() << std::endl;
    return 1;
  }
  std::cerr << "usage: acceptance_training mnist|cifar" << std::endl;
  return 2;
}
