#include <doctest.h>

#include <cmath>
#include <sstream>

#include "minconv/simlab.hpp"
#include "oracles.hpp"

using namespace minconv;
using namespace minconv::simlab;

namespace {

// For x, w ~ U(0,1) independent, with h = xw:
//   E[h] = 1/4, Var h = 7/144
//   min:  Var = 1/18, Cov(h, min) = 2/15 - 1/4 * 1/3 = 1/20
//   add:  Var = 1/6,  Cov(h, x+w) = 2 * 1/3 * 1/2 - 1/4 = 1/12
//   max:  max = x + w - min, Var = 1/18, Cov = 1/12 - 1/20 = 1/30
double closed_form_uniform(OperatorKind op) {
  const double var_h = 7.0 / 144.0;
  switch (op) {
    case OperatorKind::min_selector: return (1.0 / 20.0) / std::sqrt(var_h / 18.0);
    case OperatorKind::addition: return (1.0 / 12.0) / std::sqrt(var_h / 6.0);
    case OperatorKind::max_selector: return (1.0 / 30.0) / std::sqrt(var_h / 18.0);
    default: return 1.0;
  }
}

}  // namespace

TEST_CASE("operators on hand values") {
  CHECK(apply_operator(OperatorKind::abs_mul, -2.0, 3.0) == 6.0);
  CHECK(apply_operator(OperatorKind::min_selector, -2.0, 3.0) == 2.0);
  CHECK(apply_operator(OperatorKind::addition, -2.0, 3.0) == 5.0);
  CHECK(apply_operator(OperatorKind::max_selector, -2.0, 3.0) == 3.0);
  CHECK(parse_operator("min") == OperatorKind::min_selector);
  CHECK(parse_operator("max_selector") == OperatorKind::max_selector);
  CHECK_THROWS_AS(parse_operator("mul2"), UsageError);
}

TEST_CASE("distribution parsing and moments") {
  const auto n = DistributionSpec::parse("N(2,9)");
  CHECK(n.kind() == DistributionSpec::Kind::normal);
  CHECK(n.mean() == 2.0);
  CHECK(n.stddev() == 3.0);
  const auto u = DistributionSpec::parse(" U(0, 10) ");
  CHECK(u.kind() == DistributionSpec::Kind::uniform);
  CHECK(u.mean() == 5.0);
  CHECK(u.variance() == doctest::Approx(100.0 / 12.0));
  CHECK(DistributionSpec::parse(n.label()).variance() == 9.0);
  CHECK_THROWS_AS(DistributionSpec::parse("N(0,0)"), UsageError);
  CHECK_THROWS_AS(DistributionSpec::parse("U(1,1)"), UsageError);
  CHECK_THROWS_AS(DistributionSpec::parse("Z(0,1)"), UsageError);
  CHECK_THROWS_AS(DistributionSpec::parse("N(0,"), UsageError);
}

TEST_CASE("streaming pearson agrees with the two-pass formula") {
  Rng r(9);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(500), b(500);
    const double mix = r.uniform(-1, 1);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = r.normal(3.0, 1.0) * 1e3;
      b[i] = mix * a[i] + r.normal(0, 500.0);
    }
    CHECK(pearson(a, b) == doctest::Approx(oracle::pearson(a, b)).epsilon(1e-12));
  }
  CHECK(pearson({1, 2, 3}, {2, 4, 6}) == doctest::Approx(1.0));
  CHECK_THROWS_AS(pearson({1, 1, 1}, {1, 2, 3}), UndefinedCorrelationError);
  CHECK_THROWS_AS(pearson({1, 2}, {1, 2, 3}), DimensionError);
}

TEST_CASE("correlation reproduces the draws an independent loop would make") {
  const auto dx = DistributionSpec::normal(0, 1), dw = DistributionSpec::uniform(-2, 3);
  Rng rx(derive_seed(4, 0)), rw(derive_seed(4, 1));
  std::vector<double> h, g;
  for (int i = 0; i < 2000; ++i) {
    const double x = dx.sample(rx), w = dw.sample(rw);
    h.push_back(std::fabs(x * w));
    g.push_back(std::fabs(x) + std::fabs(w));
  }
  CHECK(correlation(OperatorKind::addition, dx, dw, 2000, 4) == doctest::Approx(oracle::pearson(h, g)).epsilon(1e-12));
}

TEST_CASE("uniform correlations converge to their closed forms") {
  const auto u = DistributionSpec::uniform(0, 1);
  for (auto op : {OperatorKind::min_selector, OperatorKind::addition, OperatorKind::max_selector}) {
    CHECK(correlation(op, u, u, 400000, 3) == doctest::Approx(closed_form_uniform(op)).epsilon(0.004));
  }
}

TEST_CASE("correlation is invariant to a common scale of both operands") {
  // Scaling x and w by c scales h by c^2 and every g by c.
  const double a = correlation(OperatorKind::min_selector, DistributionSpec::uniform(0, 1),
                               DistributionSpec::uniform(0, 1), 5000, 12);
  const double b = correlation(OperatorKind::min_selector, DistributionSpec::uniform(0, 7),
                               DistributionSpec::uniform(0, 7), 5000, 12);
  CHECK(a == doctest::Approx(b).epsilon(1e-9));
}

TEST_CASE("relative error L") {
  // U(1,2) operands never fall below epsilon, so every draw is kept.
  const auto d = DistributionSpec::uniform(1, 2);
  Rng rx(derive_seed(8, 0)), rw(derive_seed(8, 1));
  double sum = 0;
  for (int i = 0; i < 3000; ++i) {
    const double x = d.sample(rx), w = d.sample(rw);
    sum += std::fabs((x * w - std::min(x, w)) / (x * w));
  }
  CHECK(relative_error_L(OperatorKind::min_selector, d, d, 3000, 1e-8, 8) == doctest::Approx(sum / 3000).epsilon(1e-12));
  // The identity operator has zero error.
  CHECK(relative_error_L(OperatorKind::abs_mul, d, d, 100, 1e-8, 1) == 0.0);
  CHECK_THROWS_AS(relative_error_L(OperatorKind::min_selector, DistributionSpec::uniform(0, 1e-6),
                                   DistributionSpec::uniform(0, 1e-6), 100, 1.0, 1),
                  DegenerateInputError);
  CHECK_THROWS_AS(relative_error_L(OperatorKind::min_selector, d, d, 100, 0.0, 1), UsageError);
}

TEST_CASE("sweeps report the grid minimum") {
  SweepOptions opt;
  opt.n_samples = 20000;
  opt.seed = 2;
  const auto grid = linear_grid(0.0, 2.0, 0.25);
  const auto r = sweep_L_over_k(1.0, grid, opt);
  REQUIRE(r.points.size() == grid.size());
  double best = 1e300;
  for (const auto& p : r.points) best = std::min(best, p.value);
  CHECK(r.argmin_value == best);
  for (const auto& p : r.points) {
    CHECK(p.value == relative_error_L(OperatorKind::min_selector, DistributionSpec::normal_sd(p.param, 1.0),
                                      DistributionSpec::normal_sd(p.param, 1.0), opt.n_samples, opt.epsilon,
                                      opt.seed));
  }
  CHECK(r.mean_abs_at_argmin > 0.0);
  CHECK_THROWS_AS(sweep_L_over_v(0.0, {0.0, 1.0}, opt), UsageError);
  CHECK_THROWS_AS(sweep_L_over_k(1.0, {}, opt), UsageError);
}

TEST_CASE("grids") {
  CHECK(linear_grid(0.0, 1.0, 0.25) == std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0});
  CHECK(default_k_grid().size() == 41);
  CHECK(default_v_grid().front() > 0.0);
  CHECK_THROWS_AS(linear_grid(1.0, 0.0, 0.1), UsageError);
}

TEST_CASE("CSV round trips are exact") {
  SweepResult s;
  s.points = {{0.1, 0.123456789012345678}, {0.2, 1.0 / 3.0}, {0.3, 0.5}};
  std::stringstream ss;
  write_sweep_csv(ss, s);
  const auto back = read_sweep_csv(ss);
  REQUIRE(back.points.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.points[i].param == s.points[i].param);
    CHECK(back.points[i].value == s.points[i].value);
  }
  CHECK(back.argmin_param == 0.1);

  const auto cells = similarity_table(200, 1);
  CHECK(cells.size() == 18);
  std::stringstream cs;
  write_correlation_csv(cs, cells);
  const auto cback = read_correlation_csv(cs);
  REQUIRE(cback.size() == cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    CHECK(cback[i].x_dist == cells[i].x_dist);
    CHECK(cback[i].w_dist == cells[i].w_dist);
    CHECK(cback[i].op == cells[i].op);
    CHECK(cback[i].rho == cells[i].rho);
  }

  std::stringstream bad("param,X\n1,2\n");
  CHECK_THROWS_AS(read_sweep_csv(bad), FormatError);
  std::stringstream bad2("param,L\n1,2,3\n");
  CHECK_THROWS_AS(read_sweep_csv(bad2), FormatError);
}
