#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include "minconv/checkpoint.hpp"
#include "minconv/errors.hpp"
#include "minconv/nn.hpp"
#include "minconv/simlab.hpp"
#include "minconv/train.hpp"
#include "mulcount.hpp"

namespace minconv::cli {
namespace fs = std::filesystem;

data::DatasetPair load_dataset(const std::string& name, const fs::path& dir) {
  if (dir.empty()) {
    throw UsageError(std::string("no data directory: pass --data-dir or set ") + kDataDirEnv);
  }
  if (!fs::is_directory(dir)) throw Error("data directory " + dir.string() + " does not exist");
  if (name == "mnist") {
    const fs::path sub = dir / "mnist";
    const bool direct = fs::exists(dir / "train-images-idx3-ubyte");
    return data::load_mnist(direct || !fs::is_directory(sub) ? dir : sub);
  }
  if (name == "cifar10" || name == "cifar-10") {
    const fs::path sub = dir / "cifar10";
    const bool direct = fs::exists(dir / "data_batch_1.bin") || fs::is_directory(dir / "cifar-10-batches-bin");
    return data::load_cifar10(direct || !fs::is_directory(sub) ? dir : sub);
  }
  throw UsageError("unknown dataset '" + name + "' (expected mnist or cifar10)");
}

namespace {

ImageDims dataset_dims(const std::string& name) {
  if (name == "mnist") return {1, 28, 28};
  if (name == "cifar10" || name == "cifar-10") return {3, 32, 32};
  throw UsageError("unknown dataset '" + name + "' (expected mnist or cifar10)");
}

std::string default_dataset(const std::string& net) { return net == "lenet" ? "mnist" : "cifar10"; }

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  return f;
}

struct AnalyzeOptions {
  std::size_t samples = simlab::kDefaultSamples;
  std::uint64_t seed = 7;
  double epsilon = simlab::kDefaultEpsilon;
  std::string out_dir = ".";
  std::string x_dist, w_dist, op;
  double v = 1.0;
  double k = 0.0;
};

struct TrainOptions {
  std::string net = "lenet";
  std::string dataset;
  std::string mode = "all-exact";
  std::uint64_t epochs = 10;
  std::size_t batch_size = 64;
  double lr = 0.01;
  double momentum = 0.9;
  std::string optimizer = "sgd";
  double gamma = 0.99;
  std::uint64_t seed = 1;
  std::string init;
  std::string data_dir;
  std::string out_dir = ".";
  std::size_t subset = 0;
};

struct EvalOptions {
  std::string ckpt;
  std::string net = "lenet";
  std::string dataset;
  std::string mode;
  std::string split = "test";
  std::string data_dir;
  std::size_t batch_size = 256;
  std::uint64_t seed = 1;
};

struct MulcountOptions {
  std::string net = "lenet";
  std::string dataset;
  std::string mode = "all-exact";
  std::uint64_t seed = 1;
};

simlab::DistributionSpec parse_dist_arg(const std::string& text) {
  try {
    return simlab::DistributionSpec::parse(text);
  } catch (const FormatError& e) {
    throw UsageError(e.what());
  }
}

void cmd_corr(const AnalyzeOptions& o, std::ostream& out) {
  std::vector<simlab::CorrelationCell> cells;
  if (!o.x_dist.empty() || !o.w_dist.empty() || !o.op.empty()) {
    if (o.x_dist.empty() || o.w_dist.empty()) throw UsageError("--x and --w must be given together");
    const auto dx = parse_dist_arg(o.x_dist);
    const auto dw = parse_dist_arg(o.w_dist);
    std::vector<simlab::OperatorKind> ops;
    if (o.op.empty()) {
      ops = {simlab::OperatorKind::min_selector, simlab::OperatorKind::addition, simlab::OperatorKind::max_selector};
    } else {
      try {
        ops = {simlab::parse_operator(o.op)};
      } catch (const Error& e) {
        throw UsageError(e.what());
      }
    }
    for (auto op : ops) cells.push_back({dx.label(), dw.label(), op, simlab::correlation(op, dx, dw, o.samples, o.seed)});
  } else {
    cells = simlab::similarity_table(o.samples, o.seed);
  }
  const fs::path path = fs::path(o.out_dir) / "correlation.csv";
  auto f = open_out(path);
  simlab::write_correlation_csv(f, cells);
  simlab::write_correlation_csv(out, cells);
}

void report_sweep(const simlab::SweepResult& r, const fs::path& path, const char* param, std::ostream& out) {
  auto f = open_out(path);
  simlab::write_sweep_csv(f, r);
  out << "argmin " << param << "=" << fmt(r.argmin_param) << " L=" << fmt(r.argmin_value)
      << " mean|w|=" << fmt(r.mean_abs_at_argmin) << "\n";
  out << "wrote " << path.string() << "\n";
}

void cmd_sweep_k(const AnalyzeOptions& o, std::ostream& out) {
  if (!(o.v > 0.0)) throw UsageError("--v must be positive");
  const auto r = simlab::sweep_L_over_k(o.v, simlab::default_k_grid(), {o.samples, o.epsilon, o.seed});
  std::ostringstream name;
  name << "sweep_k_v" << o.v << ".csv";
  report_sweep(r, fs::path(o.out_dir) / name.str(), "k", out);
}

void cmd_sweep_v(const AnalyzeOptions& o, std::ostream& out) {
  const auto r = simlab::sweep_L_over_v(o.k, simlab::default_v_grid(), {o.samples, o.epsilon, o.seed});
  std::ostringstream name;
  name << "sweep_v_k" << o.k << ".csv";
  report_sweep(r, fs::path(o.out_dir) / name.str(), "v", out);
}

void cmd_train(const TrainOptions& o, std::ostream& out) {
  const std::string ds_name = o.dataset.empty() ? default_dataset(o.net) : o.dataset;
  const std::size_t convs = nn::conv_count_of(o.net);
  const auto modes = nn::parse_mode_list(o.mode, convs);
  const auto spec = nn::build_network(o.net, modes, dataset_dims(ds_name));

  train::TrainConfig cfg;
  cfg.batch_size = o.batch_size;
  cfg.epochs = o.epochs;
  cfg.gamma = o.gamma;
  cfg.seed = o.seed;
  if (o.optimizer == "sgd") {
    cfg.optimizer = train::SgdConfig{o.lr, o.momentum};
  } else if (o.optimizer == "adam") {
    train::AdamConfig a;
    a.lr = o.lr;
    cfg.optimizer = a;
  } else {
    throw UsageError("unknown optimizer '" + o.optimizer + "' (expected sgd or adam)");
  }
  cfg.validate();

  std::optional<checkpoint::Checkpoint> init;
  if (!o.init.empty()) init = checkpoint::load(o.init);

  auto data = load_dataset(ds_name, o.data_dir);
  if (o.subset > 0) data.train = data::subset(data.train, o.subset, o.seed);

  nn::Network<float> net(spec, o.seed);
  if (init) {
    train::transfer_init(net, *init, data.train, cfg.batch_size, o.seed);
    const auto m = train::evaluate(net, data.test);
    out << "init from " << o.init << ": test_loss=" << fmt(m.loss) << " test_top1=" << fmt(m.top1) << "\n";
  }

  const fs::path dir(o.out_dir);
  fs::create_directories(dir);
  auto metrics = open_out(dir / "metrics.csv");
  const fs::path ckpt_path = dir / "checkpoint.bin";
  out << "training " << spec.name << " [" << nn::format_mode_list(modes) << "] on " << ds_name << " ("
      << data.train.size() << " train / " << data.test.size() << " test)\n";
  train::fit(net, cfg, data.train, data.test, &metrics,
             [&](std::uint64_t epoch, const train::Metrics& tr, const train::Metrics& te, train::Trainer& t) {
               checkpoint::save(checkpoint::capture(net, epoch, &t.optimizer()), ckpt_path);
               out << "epoch " << epoch << " train_loss=" << fmt(tr.loss) << " train_top1=" << fmt(tr.top1)
                   << " test_loss=" << fmt(te.loss) << " test_top1=" << fmt(te.top1) << std::endl;
             });
  out << "wrote " << (dir / "metrics.csv").string() << " and " << ckpt_path.string() << "\n";
}

void cmd_eval(const EvalOptions& o, std::ostream& out) {
  std::optional<checkpoint::Checkpoint> ckpt;
  nn::NetworkSpec spec;
  if (!o.ckpt.empty()) {
    ckpt = checkpoint::load(o.ckpt);
    spec = ckpt->network_spec();
  } else {
    const std::string ds = o.dataset.empty() ? default_dataset(o.net) : o.dataset;
    spec = nn::build_network(o.net, std::vector<ConvMode>(nn::conv_count_of(o.net), ConvMode::exact),
                             dataset_dims(ds));
  }
  if (!o.mode.empty()) spec.set_conv_modes(nn::parse_mode_list(o.mode, spec.conv_count()));
  std::string ds_name = o.dataset;
  if (ds_name.empty()) ds_name = spec.input.channels == 1 ? "mnist" : "cifar10";
  if (o.split != "test" && o.split != "train") throw UsageError("--split must be train or test");

  auto data = load_dataset(ds_name, o.data_dir);
  const data::Dataset& ds = o.split == "test" ? data.test : data.train;
  nn::Network<float> net(spec, o.seed);
  if (ckpt) checkpoint::restore_network(*ckpt, net);
  if (!ckpt) {
    // A fresh network has no running statistics yet.
    const auto calib = data::subset(data.train, std::min<std::size_t>(data.train.size(), 2000), o.seed);
    train::calibrate_statistics(net, calib, o.batch_size, o.seed);
  }
  const auto m = train::evaluate(net, ds, o.batch_size);
  out << "split=" << o.split << " modes=" << nn::format_mode_list(spec.conv_modes()) << " loss=" << fmt(m.loss)
      << " top1=" << fmt(m.top1) << "\n";
}

void cmd_mulcount(const MulcountOptions& o, std::ostream& out) {
  const std::string ds = o.dataset.empty() ? default_dataset(o.net) : o.dataset;
  const auto modes = nn::parse_mode_list(o.mode, nn::conv_count_of(o.net));
  const auto spec = nn::build_network(o.net, modes, dataset_dims(ds));
  print_mulcount(out, count_conv_ops(spec, o.seed));
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multiplication-free approximate convolution: analysis, training and evaluation"};
  app.name("minconv");
  app.fallthrough();
  app.require_subcommand(1);
  app.set_config("--config", "", "Read options from an INI file ([train], [eval], ... sections); flags win");
  app.allow_config_extras(false);

  AnalyzeOptions ao;
  auto* analyze = app.add_subcommand("analyze", "Operator similarity statistics");
  analyze->require_subcommand(1);
  auto add_common = [&](CLI::App* c) {
    c->add_option("--samples", ao.samples, "Monte Carlo samples")->capture_default_str();
    c->add_option("--seed", ao.seed, "Random seed")->capture_default_str();
    c->add_option("--out-dir", ao.out_dir, "Directory for CSV output")->capture_default_str();
  };
  auto* corr = analyze->add_subcommand("corr", "Correlation of min/add/max with |x*w|");
  add_common(corr);
  corr->add_option("--x", ao.x_dist, "x distribution, N(mean,var) or U(a,b); default: full table");
  corr->add_option("--w", ao.w_dist, "w distribution");
  corr->add_option("--op", ao.op, "Operator: min, add or max");
  auto* sweep_k = analyze->add_subcommand("sweep-k", "Relative error L over the mean k");
  add_common(sweep_k);
  sweep_k->add_option("--v", ao.v, "Standard deviation of both operands")->capture_default_str();
  sweep_k->add_option("--eps", ao.epsilon, "Discard |x*w| below this")->capture_default_str();
  auto* sweep_v = analyze->add_subcommand("sweep-v", "Relative error L over the standard deviation v");
  add_common(sweep_v);
  sweep_v->add_option("--k", ao.k, "Mean of both operands")->capture_default_str();
  sweep_v->add_option("--eps", ao.epsilon, "Discard |x*w| below this")->capture_default_str();

  TrainOptions to;
  auto* trn = app.add_subcommand("train", "Train a network");
  trn->add_option("--net", to.net, "lenet or mini-cifar")->capture_default_str();
  trn->add_option("--dataset", to.dataset, "mnist or cifar10 (default follows --net)");
  trn->add_option("--mode", to.mode, "exact|approx per conv, comma separated, or all-exact/all-approx")
      ->capture_default_str();
  trn->add_option("--epochs", to.epochs)->capture_default_str();
  trn->add_option("--batch-size", to.batch_size)->capture_default_str();
  trn->add_option("--lr", to.lr, "Initial learning rate")->capture_default_str();
  trn->add_option("--momentum", to.momentum, "SGD momentum")->capture_default_str();
  trn->add_option("--optimizer", to.optimizer, "sgd or adam")->capture_default_str();
  trn->add_option("--gamma", to.gamma, "Momentum of the running mean |x|")->capture_default_str();
  trn->add_option("--seed", to.seed)->capture_default_str();
  trn->add_option("--init", to.init, "Checkpoint to start from (conv modes may differ)");
  trn->add_option("--data-dir", to.data_dir)->envname(kDataDirEnv);
  trn->add_option("--out-dir", to.out_dir, "Receives metrics.csv and checkpoint.bin")->capture_default_str();
  trn->add_option("--subset", to.subset, "Train on n images chosen by a seeded shuffle (0 = all)");

  EvalOptions eo;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint (or a fresh network)");
  ev->add_option("--ckpt", eo.ckpt, "Checkpoint file; without it a randomly initialized network is used");
  ev->add_option("--net", eo.net, "Network when no checkpoint is given")->capture_default_str();
  ev->add_option("--dataset", eo.dataset);
  ev->add_option("--mode", eo.mode, "Override the checkpoint's conv modes");
  ev->add_option("--split", eo.split, "train or test")->capture_default_str();
  ev->add_option("--data-dir", eo.data_dir)->envname(kDataDirEnv);
  ev->add_option("--batch-size", eo.batch_size)->capture_default_str();
  ev->add_option("--seed", eo.seed)->capture_default_str();

  MulcountOptions mo;
  auto* mc = app.add_subcommand("mulcount", "Count arithmetic inside the conv kernels for one image");
  mc->add_option("--net", mo.net)->capture_default_str();
  mc->add_option("--dataset", mo.dataset, "Input geometry: mnist or cifar10");
  mc->add_option("--mode", mo.mode)->capture_default_str();
  mc->add_option("--seed", mo.seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (corr->parsed()) cmd_corr(ao, out);
    else if (sweep_k->parsed()) cmd_sweep_k(ao, out);
    else if (sweep_v->parsed()) cmd_sweep_v(ao, out);
    else if (trn->parsed()) cmd_train(to, out);
    else if (ev->parsed()) cmd_eval(eo, out);
    else if (mc->parsed()) cmd_mulcount(mo, out);
  } catch (const UsageError& e) {
    err << "minconv: usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::string msg = e.what();
    while (!msg.empty() && msg.back() == '\n') msg.pop_back();
    for (std::size_t p = msg.find('\n'); p != std::string::npos; p = msg.find('\n', p)) msg.replace(p, 1, "; ");
    err << "minconv: error: " << msg << "\n";
    return kFailure;
  }
  return kOk;
}

}  // namespace minconv::cli
