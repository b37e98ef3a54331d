#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "minconv/rng.hpp"

// Statistical comparison of candidate operators against |x*w|: Monte Carlo
// Pearson correlation between operator outputs, and the expected relative
// error of the min-selector together with grid sweeps over the operand
// distribution parameters.
namespace minconv::simlab {

enum class OperatorKind { abs_mul, min_selector, addition, max_selector };

std::string_view to_string(OperatorKind op);
/// Accepts the names printed by to_string plus the short forms mul/min/add/max.
OperatorKind parse_operator(std::string_view name);

/// Scalar operand distribution. Normal distributions are parameterized by mean
/// and variance, uniform ones by their closed interval [a, b].
class DistributionSpec {
 public:
  enum class Kind { normal, uniform };

  static DistributionSpec normal(double mean, double variance);
  static DistributionSpec normal_sd(double mean, double stddev) { return normal(mean, stddev * stddev); }
  static DistributionSpec uniform(double a, double b);
  /// "N(mean,variance)" or "U(a,b)".
  static DistributionSpec parse(std::string_view text);

  Kind kind() const noexcept { return kind_; }
  double mean() const;
  double variance() const;
  double stddev() const;
  double lower() const { return a_; }
  double upper() const { return b_; }

  double sample(Rng& rng) const;
  std::string label() const;

 private:
  DistributionSpec(Kind kind, double a, double b) : kind_(kind), a_(a), b_(b) {}
  Kind kind_;
  double a_;  // mean (normal) or lower bound (uniform)
  double b_;  // variance (normal) or upper bound (uniform)
};

double apply_operator(OperatorKind op, double x, double w);

inline constexpr std::size_t kDefaultSamples = 1'000'000;
inline constexpr double kDefaultEpsilon = 1e-8;

/// Pearson coefficient between h = |x*w| and g = op(x, w) over n_samples
/// i.i.d. draws of (x, w). Throws UndefinedCorrelationError when either sample
/// has zero variance.
double correlation(OperatorKind op, const DistributionSpec& dx, const DistributionSpec& dw,
                   std::size_t n_samples, std::uint64_t seed);

/// Pearson coefficient of two equally long samples.
double pearson(const std::vector<double>& h, const std::vector<double>& g);

/// Monte Carlo estimate of E[|(H - G) / H|] with H = |x*w| and G = op(x, w).
/// Draws with H < epsilon are discarded and the mean is taken over the rest.
double relative_error_L(OperatorKind g, const DistributionSpec& dx, const DistributionSpec& dw,
                        std::size_t n_samples, double epsilon, std::uint64_t seed);

struct SweepPoint {
  double param = 0.0;
  double value = 0.0;
};

struct SweepResult {
  std::vector<SweepPoint> points;
  double argmin_param = 0.0;
  double argmin_value = 0.0;
  /// Sample mean of |w| under the argmin distribution.
  double mean_abs_at_argmin = 0.0;
};

struct SweepOptions {
  std::size_t n_samples = kDefaultSamples;
  double epsilon = kDefaultEpsilon;
  std::uint64_t seed = 0;
};

/// L(k): both operands drawn from a normal with mean k and standard deviation
/// `sigma`, for every k in the grid.
SweepResult sweep_L_over_k(double sigma, const std::vector<double>& k_grid, const SweepOptions& opt);

/// L(sigma): both operands drawn from a normal with mean k and standard
/// deviation sigma, for every sigma in the grid.
SweepResult sweep_L_over_v(double k, const std::vector<double>& sigma_grid, const SweepOptions& opt);

/// Inclusive arithmetic grid first, first+step, ... up to last (within step/2).
std::vector<double> linear_grid(double first, double last, double step);
std::vector<double> default_k_grid();
std::vector<double> default_v_grid();

/// One row of the operator comparison table: an (x, w) distribution pair.
struct SimilarityRow {
  DistributionSpec dx;
  DistributionSpec dw;
};

/// The six (x, w) distribution pairs of the operator comparison table:
/// N(0,1)xN(0,1), N(0,1)xN(0,sd 10), N(0,sd 10)xN(0,1), U(0,1)xU(0,1),
/// U(0,10)xU(0,1), U(0,1)xU(0,10).
std::vector<SimilarityRow> similarity_table_rows();

struct CorrelationCell {
  std::string x_dist;
  std::string w_dist;
  OperatorKind op;
  double rho;
};

/// Correlation of min/addition/max against |x*w| for every table row; each row
/// uses a seed derived from (seed, row index).
std::vector<CorrelationCell> similarity_table(std::size_t n_samples, std::uint64_t seed);

void write_sweep_csv(std::ostream& out, const SweepResult& result);
SweepResult read_sweep_csv(std::istream& in);
void write_correlation_csv(std::ostream& out, const std::vector<CorrelationCell>& cells);
std::vector<CorrelationCell> read_correlation_csv(std::istream& in);

}  // namespace minconv::simlab
