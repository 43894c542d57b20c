#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "physio/common.hpp"
#include "physio/mixed.hpp"

using namespace physio;
using namespace physio::mixed;

namespace {

struct Toy {
  Eigen::VectorXd y;
  Eigen::MatrixXd X;  // without intercept
  std::vector<int> groups;
};

// y = 1 + X beta + u_g + e with standard-normal predictors.
Toy simulate(const std::vector<int>& sizes, const std::vector<double>& beta, double su, double se,
             std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal;
  const int n = std::accumulate(sizes.begin(), sizes.end(), 0);
  const auto s = static_cast<Eigen::Index>(beta.size());
  Toy t;
  t.y.resize(n);
  t.X.resize(n, s);
  int row = 0;
  for (std::size_t g = 0; g < sizes.size(); ++g) {
    const double u = su * normal(gen);
    for (int i = 0; i < sizes[g]; ++i, ++row) {
      double v = 1.0 + u + se * normal(gen);
      for (Eigen::Index j = 0; j < s; ++j) {
        t.X(row, j) = normal(gen);
        v += beta[static_cast<std::size_t>(j)] * t.X(row, j);
      }
      t.y(row) = v;
      t.groups.push_back(static_cast<int>(10 + 3 * g));  // arbitrary ids
    }
  }
  return t;
}

std::vector<std::string> names_for(Eigen::Index s) {
  std::vector<std::string> n;
  for (Eigen::Index j = 0; j < s; ++j) n.push_back("x" + std::to_string(j));
  return n;
}

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& X) {
  Eigen::MatrixXd full(X.rows(), X.cols() + 1);
  full.col(0).setOnes();
  full.rightCols(X.cols()) = X;
  return full;
}

}  // namespace

TEST_CASE("REML matches the brute-force lambda grid") {
  struct Case {
    std::vector<int> sizes;
    double su;
    std::uint64_t seed;
  };
  const std::vector<Case> cases{
      {{10, 10}, 0.7, 1}, {{8, 8, 8, 8, 8, 8}, 1.0, 2}, {{5, 12, 7, 9}, 0.6, 3}, {{6, 6, 6, 6, 6}, 0.4, 4}};
  for (const auto& c : cases) {
    const auto t = simulate(c.sizes, {0.5, -0.3}, c.su, 1.0, c.seed);
    const auto fit = fit_lmer(t.y, t.X, names_for(2), t.groups);
    const auto grid = oracle::reml_grid(t.y, with_intercept(t.X), t.groups);
    MESSAGE("lambda " << fit.lambda << " grid " << grid.lambda);
    for (Eigen::Index j = 0; j < 3; ++j) CHECK(std::abs(fit.coef[j].estimate - grid.beta(j)) <= 1e-4);
    CHECK(std::abs(fit.sigma_u - grid.sigma_u) <= 1e-4);
    CHECK(std::abs(fit.sigma_e - grid.sigma_e) <= 1e-4);
    CHECK(fit.reml_deviance == doctest::Approx(grid.deviance).epsilon(1e-8));
  }
}

TEST_CASE("REML deviance agrees with the dense marginal likelihood") {
  const auto t = simulate({7, 9, 4, 11}, {0.8}, 0.9, 1.3, 5);
  const RemlProblem prob(t.y, with_intercept(t.X), t.groups);
  for (double lambda : {0.0, 0.05, 0.7, 3.0, 40.0}) {
    Eigen::VectorXd beta;
    double sigma2 = 0.0;
    const double dense = oracle::reml_deviance_dense(t.y, with_intercept(t.X), t.groups, lambda, &beta, &sigma2);
    const auto sol = prob.solve(lambda);
    CHECK(sol.deviance == doctest::Approx(dense).epsilon(1e-10));
    CHECK((sol.beta - beta).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(sol.sigma2 == doctest::Approx(sigma2).epsilon(1e-10));
  }
}

TEST_CASE("REML optimum is locally optimal and GLS residuals are orthogonal") {
  for (std::uint64_t seed = 10; seed < 15; ++seed) {
    const auto t = simulate({12, 12, 12, 12, 12}, {0.4, 0.2}, 0.8, 1.0, seed);
    const auto full = with_intercept(t.X);
    const RemlProblem prob(t.y, full, t.groups);
    const double lambda = optimize_lambda(prob);
    REQUIRE(lambda > 0.0);
    const double at = prob.solve(lambda).deviance;
    CHECK(at <= prob.solve(lambda * (1 + 1e-3)).deviance);
    CHECK(at <= prob.solve(lambda * (1 - 1e-3)).deviance);

    const Eigen::Index n = t.y.size();
    Eigen::MatrixXd V = Eigen::MatrixXd::Identity(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (t.groups[i] == t.groups[j]) V(i, j) += lambda;
    const Eigen::VectorXd r = t.y - full * prob.solve(lambda).beta;
    CHECK((full.transpose() * V.ldlt().solve(r)).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("without a group effect the fit is ordinary least squares") {
  auto t = simulate({10, 10, 10, 10}, {0.6, -0.2}, 0.0, 1.0, 21);
  // Equalize the group means of the response residual so lambda hits 0.
  const auto full = with_intercept(t.X);
  const Eigen::VectorXd b0 = full.colPivHouseholderQr().solve(t.y);
  Eigen::VectorXd r = t.y - full * b0;
  for (int g = 0; g < 4; ++g) {
    const double m = r.segment(10 * g, 10).mean();
    t.y.segment(10 * g, 10).array() -= m;
  }
  const auto fit = fit_lmer(t.y, t.X, names_for(2), t.groups);
  CHECK(fit.lambda == 0.0);
  CHECK(fit.sigma_u == 0.0);

  const Eigen::VectorXd ols = full.colPivHouseholderQr().solve(t.y);
  const Eigen::VectorXd res = t.y - full * ols;
  const double s2 = res.squaredNorm() / static_cast<double>(t.y.size() - full.cols());
  const Eigen::MatrixXd cov = s2 * (full.transpose() * full).inverse();
  for (Eigen::Index j = 0; j < 3; ++j) {
    CHECK(fit.coef[j].estimate == doctest::Approx(ols(j)).epsilon(1e-12));
    CHECK(fit.coef[j].se == doctest::Approx(std::sqrt(cov(j, j))).epsilon(1e-10));
  }
  CHECK(fit.sigma_e == doctest::Approx(std::sqrt(s2)).epsilon(1e-12));
  CHECK(fit.icc == 0.0);
  CHECK(fit.r2_conditional == doctest::Approx(fit.r2_marginal));
}

TEST_CASE("summary statistics follow their definitions") {
  const auto t = simulate({20, 20, 20, 20, 20, 20}, {0.5, 0.3}, 0.7, 1.0, 31);
  const auto fit = fit_lmer(t.y, t.X, names_for(2), t.groups);
  const double su2 = fit.sigma_u * fit.sigma_u, se2 = fit.sigma_e * fit.sigma_e;
  CHECK(fit.icc == doctest::Approx(su2 / (su2 + se2)));
  CHECK(fit.icc >= 0.0);
  CHECK(fit.icc <= 1.0);
  const double var_f = fit.r2_marginal * (su2 + se2) / (1.0 - fit.r2_marginal);
  CHECK(fit.r2_conditional == doctest::Approx((var_f + su2) / (var_f + su2 + se2)));
  CHECK(fit.aic == doctest::Approx(fit.reml_deviance + 2 * 5));
  CHECK(fit.bic == doctest::Approx(fit.reml_deviance + 5 * std::log(120.0)));
  CHECK(fit.rmse >= 0.0);
  CHECK(fit.n_groups == 6);
  for (const auto& c : fit.coef) {
    CHECK(c.se > 0.0);
    CHECK(c.t == doctest::Approx(c.estimate / c.se));
    CHECK(c.df == 120 - 2 - 2);
    CHECK(c.p_adj >= c.p_raw);
  }

  const auto null_fit = fit_lmer(t.y, Eigen::MatrixXd(120, 0), {}, t.groups);
  CHECK(null_fit.r2_marginal == doctest::Approx(0.0));
}

TEST_CASE("collinear predictors are a rank error naming the columns") {
  auto t = simulate({10, 10, 10}, {0.5, 0.1}, 0.5, 1.0, 41);
  t.X.col(1) = 2.0 * t.X.col(0);
  try {
    fit_lmer(t.y, t.X, {"SCL_mean", "SCL_twice"}, t.groups);
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::rank);
    CHECK(std::string(e.what()).find("SCL_") != std::string::npos);
  }
}

TEST_CASE("simulated slopes fall within 3 SE") {
  int covered = 0;
  const int sims = 200;
  for (int s = 0; s < sims; ++s) {
    const auto t = simulate(std::vector<int>(12, 20), {0.5}, 0.5, 1.0, 1000 + s);
    const auto fit = fit_lmer(t.y, t.X, names_for(1), t.groups);
    covered += std::abs(fit.coef[1].estimate - 0.5) <= 3.0 * fit.coef[1].se ? 1 : 0;
  }
  MESSAGE("covered " << covered << " of " << sims);
  CHECK(covered >= 190);
}

TEST_CASE("robust fit agrees on clean data and resists outliers") {
  double mean_robust = 0.0, mean_classical = 0.0;
  int robust_closer = 0;
  double err_robust = 0.0, err_classical = 0.0;
  const int seeds = 50;
  for (int s = 0; s < seeds; ++s) {
    auto t = simulate(std::vector<int>(10, 24), {0.5}, 0.3, 1.0, 2000 + s);
    const auto c = fit_lmer(t.y, t.X, names_for(1), t.groups);
    const auto r = fit_rlmer(t.y, t.X, names_for(1), t.groups);
    CHECK(r.robust);
    CHECK(r.coef[1].df == c.coef[1].df);
    mean_robust += r.coef[1].estimate / seeds;
    mean_classical += c.coef[1].estimate / seeds;

    // 5% gross outliers placed where the predictor is large.
    std::vector<Eigen::Index> order(static_cast<std::size_t>(t.y.size()));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return t.X(a, 0) > t.X(b, 0); });
    for (std::size_t k = 0; k < order.size() / 20; ++k) t.y(order[k]) -= 8.0;
    const auto cc = fit_lmer(t.y, t.X, names_for(1), t.groups);
    const auto rr = fit_rlmer(t.y, t.X, names_for(1), t.groups);
    const double er = std::abs(rr.coef[1].estimate - 0.5), ec = std::abs(cc.coef[1].estimate - 0.5);
    robust_closer += er < ec ? 1 : 0;
    err_robust += er / seeds;
    err_classical += ec / seeds;
  }
  const double rel = std::abs(mean_robust - mean_classical) / mean_classical;
  MESSAGE("clean: Monte Carlo means differ by " << rel << "; contaminated: robust closer in " << robust_closer
                                             << " of " << seeds << ", mean error " << err_robust << " vs "
                                             << err_classical);
  CHECK(rel <= 0.02);
  CHECK(robust_closer == seeds);
}

TEST_CASE("Benjamini-Hochberg adjustment") {
  const std::vector<double> a{0.01, 0.02, 0.04};
  CHECK(bh_adjust(a) == std::vector<double>{0.03, 0.03, 0.04});
  const std::vector<double> one{0.2};
  CHECK(bh_adjust(one) == one);
  const std::vector<double> same(5, 0.3);
  for (double v : bh_adjust(same)) CHECK(v == doctest::Approx(0.3));
  const std::vector<double> big{0.9, 0.8};
  CHECK(bh_adjust(big) == std::vector<double>{0.9, 0.9});
  const std::vector<double> perm{0.04, 0.01, 0.02};
  CHECK(bh_adjust(perm) == std::vector<double>{0.04, 0.03, 0.03});
  CHECK(bh_adjust(std::vector<double>{}).empty());
  CHECK_THROWS_AS(bh_adjust(std::vector<double>{0.1, 1.2}), Error);
  CHECK_THROWS_AS(bh_adjust(std::vector<double>{-0.1}), Error);

  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> unif;
  std::vector<double> p(40);
  for (auto& v : p) v = unif(gen) * unif(gen);
  const auto adj = bh_adjust(p);
  std::vector<std::size_t> idx(p.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto x, auto y) { return p[x] < p[y]; });
  for (std::size_t k = 0; k < idx.size(); ++k) {
    CHECK(adj[idx[k]] >= p[idx[k]]);
    CHECK(adj[idx[k]] <= 1.0);
    if (k > 0) CHECK(adj[idx[k]] >= adj[idx[k - 1]]);
  }
}
