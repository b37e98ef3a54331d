#include "minconv/simlab.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "minconv/errors.hpp"

namespace minconv::simlab {

namespace {

std::string format_number(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

double parse_double(std::string_view text) {
  std::string s(text);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw UsageError("not a number: '" + s + "'");
  }
  if (used != s.size()) throw UsageError("not a number: '" + s + "'");
  return v;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) fields.push_back(std::string(trim(field)));
  return fields;
}

}  // namespace

std::string_view to_string(OperatorKind op) {
  switch (op) {
    case OperatorKind::abs_mul: return "abs_mul";
    case OperatorKind::min_selector: return "min_selector";
    case OperatorKind::addition: return "addition";
    case OperatorKind::max_selector: return "max_selector";
  }
  return "unknown";
}

OperatorKind parse_operator(std::string_view name) {
  if (name == "abs_mul" || name == "mul") return OperatorKind::abs_mul;
  if (name == "min_selector" || name == "min") return OperatorKind::min_selector;
  if (name == "addition" || name == "add") return OperatorKind::addition;
  if (name == "max_selector" || name == "max") return OperatorKind::max_selector;
  throw UsageError("unknown operator '" + std::string(name) + "'");
}

DistributionSpec DistributionSpec::normal(double mean, double variance) {
  if (!(variance > 0.0) || !std::isfinite(variance) || !std::isfinite(mean)) {
    throw UsageError("normal distribution needs a finite mean and variance > 0");
  }
  return DistributionSpec(Kind::normal, mean, variance);
}

DistributionSpec DistributionSpec::uniform(double a, double b) {
  if (!(a < b) || !std::isfinite(a) || !std::isfinite(b)) {
    throw UsageError("uniform distribution needs finite bounds with a < b");
  }
  return DistributionSpec(Kind::uniform, a, b);
}

DistributionSpec DistributionSpec::parse(std::string_view text) {
  const std::string_view t = trim(text);
  const auto open = t.find('(');
  const auto comma = t.find(',');
  if (t.size() < 6 || open != 1 || comma == std::string_view::npos || t.back() != ')') {
    throw UsageError("distribution must look like N(mean,variance) or U(a,b): '" + std::string(text) + "'");
  }
  const double p1 = parse_double(trim(t.substr(2, comma - 2)));
  const double p2 = parse_double(trim(t.substr(comma + 1, t.size() - comma - 2)));
  switch (t.front()) {
    case 'N': case 'n': return normal(p1, p2);
    case 'U': case 'u': return uniform(p1, p2);
    default: throw UsageError("unknown distribution family in '" + std::string(text) + "'");
  }
}

double DistributionSpec::mean() const { return kind_ == Kind::normal ? a_ : 0.5 * (a_ + b_); }

double DistributionSpec::variance() const {
  return kind_ == Kind::normal ? b_ : (b_ - a_) * (b_ - a_) / 12.0;
}

double DistributionSpec::stddev() const { return std::sqrt(variance()); }

double DistributionSpec::sample(Rng& rng) const {
  return kind_ == Kind::normal ? rng.normal(a_, std::sqrt(b_)) : rng.uniform(a_, b_);
}

std::string DistributionSpec::label() const {
  return std::string(kind_ == Kind::normal ? "N(" : "U(") + format_number(a_) + "," + format_number(b_) + ")";
}

double apply_operator(OperatorKind op, double x, double w) {
  const double ax = std::abs(x);
  const double aw = std::abs(w);
  switch (op) {
    case OperatorKind::abs_mul: return std::abs(x * w);
    case OperatorKind::min_selector: return std::min(ax, aw);
    case OperatorKind::addition: return ax + aw;
    case OperatorKind::max_selector: return std::max(ax, aw);
  }
  return 0.0;
}

namespace {

/// Single-pass co-moment accumulator (Welford update).
class PearsonAccumulator {
 public:
  void add(double h, double g) {
    ++n_;
    const double dh = h - mean_h_;
    mean_h_ += dh / static_cast<double>(n_);
    const double dg = g - mean_g_;
    mean_g_ += dg / static_cast<double>(n_);
    c_hg_ += dh * (g - mean_g_);
    c_hh_ += dh * (h - mean_h_);
    c_gg_ += dg * (g - mean_g_);
  }

  double value() const {
    if (n_ < 2) throw UndefinedCorrelationError("correlation needs at least two samples");
    if (!(c_hh_ > 0.0) || !(c_gg_ > 0.0)) {
      throw UndefinedCorrelationError("correlation undefined: a sample has zero variance");
    }
    return c_hg_ / std::sqrt(c_hh_ * c_gg_);
  }

 private:
  std::size_t n_ = 0;
  double mean_h_ = 0.0, mean_g_ = 0.0;
  double c_hg_ = 0.0, c_hh_ = 0.0, c_gg_ = 0.0;
};

/// Independent generators for the x and w operands.
struct OperandStreams {
  explicit OperandStreams(std::uint64_t seed) : x(derive_seed(seed, 0)), w(derive_seed(seed, 1)) {}
  Rng x;
  Rng w;
};

}  // namespace

double correlation(OperatorKind op, const DistributionSpec& dx, const DistributionSpec& dw,
                   std::size_t n_samples, std::uint64_t seed) {
  if (n_samples < 2) throw UndefinedCorrelationError("correlation needs n_samples >= 2");
  OperandStreams rng(seed);
  PearsonAccumulator acc;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const double x = dx.sample(rng.x);
    const double w = dw.sample(rng.w);
    acc.add(apply_operator(OperatorKind::abs_mul, x, w), apply_operator(op, x, w));
  }
  return acc.value();
}

double pearson(const std::vector<double>& h, const std::vector<double>& g) {
  if (h.size() != g.size()) throw DimensionError("pearson: samples differ in length");
  PearsonAccumulator acc;
  for (std::size_t i = 0; i < h.size(); ++i) acc.add(h[i], g[i]);
  return acc.value();
}

double relative_error_L(OperatorKind g, const DistributionSpec& dx, const DistributionSpec& dw,
                        std::size_t n_samples, double epsilon, std::uint64_t seed) {
  if (n_samples < 1) throw DegenerateInputError("relative_error_L needs n_samples >= 1");
  if (!(epsilon > 0.0)) throw UsageError("relative_error_L needs epsilon > 0");
  OperandStreams rng(seed);
  double sum = 0.0;
  std::size_t kept = 0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const double x = dx.sample(rng.x);
    const double w = dw.sample(rng.w);
    const double h = apply_operator(OperatorKind::abs_mul, x, w);
    if (h < epsilon) continue;
    sum += std::abs((h - apply_operator(g, x, w)) / h);
    ++kept;
  }
  if (kept == 0) throw DegenerateInputError("relative_error_L: every sample fell on a break-point");
  return sum / static_cast<double>(kept);
}

namespace {

double mean_abs(const DistributionSpec& d, std::size_t n_samples, std::uint64_t seed) {
  OperandStreams rng(seed);
  double sum = 0.0;
  for (std::size_t i = 0; i < n_samples; ++i) sum += std::abs(d.sample(rng.w));
  return sum / static_cast<double>(n_samples);
}

template <typename MakeDist>
SweepResult sweep(const std::vector<double>& grid, const SweepOptions& opt, MakeDist make) {
  if (grid.empty()) throw UsageError("sweep grid is empty");
  SweepResult r;
  r.points.reserve(grid.size());
  r.argmin_value = std::numeric_limits<double>::infinity();
  // Every grid point reuses the same seed (common random numbers), which keeps
  // the curve smooth and the argmin stable.
  for (double p : grid) {
    const DistributionSpec d = make(p);
    const double L = relative_error_L(OperatorKind::min_selector, d, d, opt.n_samples, opt.epsilon, opt.seed);
    r.points.push_back({p, L});
    if (L < r.argmin_value) {
      r.argmin_value = L;
      r.argmin_param = p;
    }
  }
  r.mean_abs_at_argmin = mean_abs(make(r.argmin_param), opt.n_samples, opt.seed);
  return r;
}

}  // namespace

SweepResult sweep_L_over_k(double sigma, const std::vector<double>& k_grid, const SweepOptions& opt) {
  return sweep(k_grid, opt, [sigma](double k) { return DistributionSpec::normal_sd(k, sigma); });
}

SweepResult sweep_L_over_v(double k, const std::vector<double>& sigma_grid, const SweepOptions& opt) {
  for (double s : sigma_grid) {
    if (!(s > 0.0)) throw UsageError("sweep over v needs every grid value > 0");
  }
  return sweep(sigma_grid, opt, [k](double sigma) { return DistributionSpec::normal_sd(k, sigma); });
}

std::vector<double> linear_grid(double first, double last, double step) {
  if (!(step > 0.0) || last < first) throw UsageError("grid needs step > 0 and last >= first");
  std::vector<double> g;
  const auto n = static_cast<std::size_t>(std::floor((last - first) / step + 0.5));
  for (std::size_t i = 0; i <= n; ++i) g.push_back(first + static_cast<double>(i) * step);
  return g;
}

std::vector<double> default_k_grid() { return linear_grid(0.0, 2.0, 0.05); }
std::vector<double> default_v_grid() { return linear_grid(0.05, 3.0, 0.05); }

std::vector<SimilarityRow> similarity_table_rows() {
  using D = DistributionSpec;
  return {
      {D::normal_sd(0, 1), D::normal_sd(0, 1)},
      {D::normal_sd(0, 1), D::normal_sd(0, 10)},
      {D::normal_sd(0, 10), D::normal_sd(0, 1)},
      {D::uniform(0, 1), D::uniform(0, 1)},
      {D::uniform(0, 10), D::uniform(0, 1)},
      {D::uniform(0, 1), D::uniform(0, 10)},
  };
}

std::vector<CorrelationCell> similarity_table(std::size_t n_samples, std::uint64_t seed) {
  std::vector<CorrelationCell> cells;
  const auto rows = similarity_table_rows();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (OperatorKind op : {OperatorKind::min_selector, OperatorKind::addition, OperatorKind::max_selector}) {
      cells.push_back({rows[i].dx.label(), rows[i].dw.label(), op,
                       correlation(op, rows[i].dx, rows[i].dw, n_samples, derive_seed(seed, i))});
    }
  }
  return cells;
}

void write_sweep_csv(std::ostream& out, const SweepResult& result) {
  out << "param,L\n" << std::setprecision(17);
  for (const auto& p : result.points) out << p.param << ',' << p.value << '\n';
}

SweepResult read_sweep_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != "param,L") throw FormatError("sweep CSV: missing 'param,L' header");
  SweepResult r;
  r.argmin_value = std::numeric_limits<double>::infinity();
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 2) throw FormatError("sweep CSV: expected 2 fields in '" + line + "'");
    SweepPoint p{parse_double(f[0]), parse_double(f[1])};
    r.points.push_back(p);
    if (p.value < r.argmin_value) {
      r.argmin_value = p.value;
      r.argmin_param = p.param;
    }
  }
  return r;
}

void write_correlation_csv(std::ostream& out, const std::vector<CorrelationCell>& cells) {
  out << "x_dist,w_dist,operator,rho\n" << std::setprecision(17);
  for (const auto& c : cells) {
    // Labels contain commas; quote them.
    out << '"' << c.x_dist << "\",\"" << c.w_dist << "\"," << to_string(c.op) << ',' << c.rho << '\n';
  }
}

std::vector<CorrelationCell> read_correlation_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != "x_dist,w_dist,operator,rho") {
    throw FormatError("correlation CSV: missing header");
  }
  std::vector<CorrelationCell> cells;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (char ch : line) {
      if (ch == '"') {
        quoted = !quoted;
      } else if (ch == ',' && !quoted) {
        fields.push_back(cur);
        cur.clear();
      } else {
        cur += ch;
      }
    }
    fields.push_back(cur);
    if (fields.size() != 4) throw FormatError("correlation CSV: expected 4 fields in '" + line + "'");
    cells.push_back({fields[0], fields[1], parse_operator(trim(fields[2])), parse_double(trim(fields[3]))});
  }
  return cells;
}

}  // namespace minconv::simlab
