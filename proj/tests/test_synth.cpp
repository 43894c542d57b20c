#include "doctest.h"

#include <cmath>

#include "physio/common.hpp"
#include "physio/synth.hpp"
#include "test_util.hpp"
#include "physio/trex.hpp"

using namespace physio;
using namespace physio::synth;

namespace {

double corr(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::VectorXd x = a.array() - a.mean(), y = b.array() - b.mean();
  return x.dot(y) / std::sqrt(x.squaredNorm() * y.squaredNorm());
}

}  // namespace

TEST_CASE("independent columns are nearly uncorrelated") {
  SynthSpec s;
  s.n = 500;
  s.p = 30;
  s.seed = 4;
  const auto d = generate(s);
  double worst = 0.0;
  for (int i = 0; i < s.p; ++i)
    for (int j = i + 1; j < s.p; ++j) worst = std::max(worst, std::abs(corr(d.X.col(i), d.X.col(j))));
  CHECK(worst < 0.2);
  for (int j = 0; j < s.p; ++j) {
    CHECK(std::abs(d.X.col(j).mean()) < 1e-12);
    CHECK(d.X.col(j).squaredNorm() / (s.n - 1) == doctest::Approx(1.0));
  }
  CHECK(std::abs(d.y.mean()) < 1e-12);
  CHECK(d.truth.empty());
}

TEST_CASE("AR(1) neighbours carry the requested correlation") {
  SynthSpec s;
  s.n = 500;
  s.p = 20;
  s.correlation = Correlation::ar1;
  s.rho = 0.8;
  s.seed = 5;
  const auto d = generate(s);
  for (int j = 0; j + 1 < s.p; ++j) CHECK(std::abs(corr(d.X.col(j), d.X.col(j + 1)) - 0.8) < 0.1);
}

TEST_CASE("duplicated pairs are noisy copies") {
  SynthSpec s;
  s.n = 500;
  s.p = 10;
  s.correlation = Correlation::duplicated;
  s.duplicate_sd = 0.5;
  s.seed = 6;
  const auto d = generate(s);
  const double expected = 1.0 / std::sqrt(1.25);
  for (int j = 0; j < s.p; j += 2) CHECK(std::abs(corr(d.X.col(j), d.X.col(j + 1)) - expected) < 0.05);
}

TEST_CASE("benchmark designs hit the target marginal correlation") {
  for (auto family : {Correlation::independent, Correlation::ar1, Correlation::duplicated}) {
    auto spec = benchmark_spec(family, 3, 0.3, 4000, 164);
    spec.seed = 7;
    const auto d = generate(spec);
    REQUIRE(d.truth.size() == 3);
    for (int j : d.truth) CHECK(std::abs(corr(d.X.col(j), d.y) - 0.3) < 0.06);
    if (family == Correlation::duplicated)
      for (int j : d.truth) CHECK(j % 2 == 0);
  }
  CHECK_THROWS_AS(benchmark_spec(Correlation::independent, 20, 0.3), Error);
}

TEST_CASE("groups add a shared intercept") {
  SynthSpec s;
  s.n = 400;
  s.p = 5;
  s.groups = 8;
  s.group_sd = 3.0;
  s.seed = 8;
  const auto d = generate(s);
  REQUIRE(d.group.size() == 400);
  // Between-group spread dominates: group means differ far more than noise allows.
  std::vector<double> sum(8, 0.0), count(8, 0.0);
  for (int i = 0; i < s.n; ++i) {
    sum[d.group[i]] += d.y(i);
    count[d.group[i]] += 1.0;
  }
  double spread = 0.0;
  for (int g = 0; g < 8; ++g) spread = std::max(spread, std::abs(sum[g] / count[g]));
  CHECK(spread > 0.5);
}

TEST_CASE("invalid specifications are config errors") {
  SynthSpec s;
  s.p = 3;
  s.support = {0, 1, 2};
  s.beta = {1, 1, 1};
  CHECK_THROWS_AS(generate(s), Error);
  SynthSpec r;
  r.correlation = Correlation::ar1;
  r.rho = 1.0;
  CHECK_THROWS_AS(generate(r), Error);
  SynthSpec z;
  z.noise_sd = 0.0;
  CHECK_THROWS_AS(generate(z), Error);
  CHECK_THROWS_AS(parse_correlation("banded"), Error);
}

TEST_CASE("scoring") {
  const auto a = score({1, 2, 9}, {1, 2, 3});
  CHECK(a.fdp == doctest::Approx(1.0 / 3.0));
  CHECK(a.tp_rate == doctest::Approx(2.0 / 3.0));
  CHECK(a.selected == 3);
  const auto empty = score({}, {1});
  CHECK(empty.fdp == 0.0);
  CHECK(empty.tp_rate == 0.0);
  CHECK(score({4}, {}).fdp == 1.0);
}

TEST_CASE("FDR experiments are reproducible and written as CSV") {
  SynthSpec s;
  s.n = 60;
  s.p = 12;
  s.support = {2};
  s.beta = {1.0};
  s.noise_sd = 1.0;
  trex::Options opt;
  opt.threads = 1;
  opt.K = 20;
  const auto a = run_fdr_experiment(s, {0.1, 0.2}, {trex::Variant::da_nn, trex::Variant::plain}, 6, 3, opt);
  const auto b = run_fdr_experiment(s, {0.1, 0.2}, {trex::Variant::da_nn, trex::Variant::plain}, 6, 3, opt);
  REQUIRE(a.size() == 4);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].fdp_by_rep == b[i].fdp_by_rep);
    CHECK(a[i].tpr_by_rep == b[i].tpr_by_rep);
    CHECK(a[i].fdp_by_rep.size() == 6);
    CHECK(a[i].fdr_se >= 0.0);
  }
  testutil::TempDir dir("synth_csv");
  write_fdr_csv(dir.file("fdr_report.csv"), a, "abc123");
  const auto text = testutil::read_file(dir.file("fdr_report.csv"));
  CHECK(text.find("abc123") != std::string::npos);
  std::size_t lines = 0;
  for (char c : text) lines += c == '\n' ? 1 : 0;
  CHECK(lines >= 5);
}
