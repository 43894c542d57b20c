#include "physio/mixed.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "physio/common.hpp"

namespace physio::mixed {

RemlProblem::RemlProblem(Eigen::VectorXd y, Eigen::MatrixXd X, const std::vector<int>& groups,
                         Eigen::VectorXd weights)
    : y_(std::move(y)), w_(std::move(weights)), X_(std::move(X)) {
  const Eigen::Index n = y_.size();
  if (X_.rows() != n || static_cast<Eigen::Index>(groups.size()) != n)
    throw Error(ErrorKind::contract, "response, design and groups differ in length");
  if (w_.size() == 0) w_ = Eigen::VectorXd::Ones(n);
  if (w_.size() != n || (w_.array() <= 0.0).any())
    throw Error(ErrorKind::contract, "weights must be positive, one per observation");

  std::map<int, int> ids;
  for (int g : groups) ids.emplace(g, 0);
  int next = 0;
  for (auto& [g, i] : ids) i = next++;
  gidx_.resize(groups.size());
  for (std::size_t i = 0; i < groups.size(); ++i) gidx_[i] = ids[groups[i]];

  const int G = next;
  group_size_.assign(static_cast<std::size_t>(G), 0);
  XtW1_ = Eigen::MatrixXd::Zero(X_.cols(), G);
  ytW1_ = Eigen::VectorXd::Zero(G);
  group_w_ = Eigen::VectorXd::Zero(G);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int g = gidx_[static_cast<std::size_t>(i)];
    ++group_size_[static_cast<std::size_t>(g)];
    XtW1_.col(g) += w_(i) * X_.row(i).transpose();
    ytW1_(g) += w_(i) * y_(i);
    group_w_(g) += w_(i);
  }
  const Eigen::MatrixXd WX = w_.asDiagonal() * X_;
  XtWX_ = X_.transpose() * WX;
  XtWy_ = WX.transpose() * y_;
  ytWy_ = (w_.array() * y_.array().square()).sum();
  log_w_ = w_.array().log().sum();
}

RemlProblem::Solution RemlProblem::solve(double lambda) const {
  const Eigen::Index n = y_.size(), p = X_.cols();
  // Per group V_g^-1 = W_g - c_g w_g w_g', c_g = lambda / (1 + lambda s_g).
  const Eigen::VectorXd c = lambda * (1.0 + lambda * group_w_.array()).inverse();
  const Eigen::MatrixXd A = XtWX_ - XtW1_ * c.asDiagonal() * XtW1_.transpose();
  const Eigen::VectorXd b = XtWy_ - XtW1_ * (c.array() * ytW1_.array()).matrix();
  const double q = ytWy_ - (c.array() * ytW1_.array().square()).sum();

  Eigen::LLT<Eigen::MatrixXd> llt(A);
  if (llt.info() != Eigen::Success) throw Error(ErrorKind::numeric, "X' V^-1 X is not positive definite");
  Solution s;
  s.beta = llt.solve(b);
  s.cov_unscaled = llt.solve(Eigen::MatrixXd::Identity(p, p));
  const double rss = std::max(q - b.dot(s.beta), 0.0);
  const double dof = static_cast<double>(n - p);
  s.sigma2 = rss / dof;
  double logdet_a = 0.0;
  for (Eigen::Index i = 0; i < p; ++i) logdet_a += 2.0 * std::log(llt.matrixL()(i, i));
  const double logdet_v = -log_w_ + (1.0 + lambda * group_w_.array()).log().sum();
  if (!(s.sigma2 > 0.0)) throw Error(ErrorKind::numeric, "REML residual variance is zero (exact fit)");
  s.deviance = logdet_v + logdet_a + dof * (1.0 + std::log(2.0 * std::numbers::pi * s.sigma2));
  return s;
}

Eigen::VectorXd RemlProblem::blups(double lambda, const Eigen::VectorXd& beta) const {
  const Eigen::VectorXd wr = ytW1_ - XtW1_.transpose() * beta;
  return (lambda * wr.array() / (1.0 + lambda * group_w_.array())).matrix();
}

double optimize_lambda(const RemlProblem& prob) {
  constexpr double lo = -12.0, hi = 12.0, step = 0.5, tol = 1e-10;
  auto f = [&](double t) { return prob.solve(std::exp(t)).deviance; };
  const int m = static_cast<int>(std::lround((hi - lo) / step));
  int best = 0;
  double best_f = f(lo);
  for (int i = 1; i <= m; ++i) {
    const double v = f(lo + step * i);
    if (v < best_f) {
      best_f = v;
      best = i;
    }
  }
  double a = lo + step * std::max(0, best - 1), b = lo + step * std::min(m, best + 1);
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - g * (b - a), x2 = a + g * (b - a);
  double f1 = f(x1), f2 = f(x2);
  while (b - a > tol) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - g * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + g * (b - a);
      f2 = f(x2);
    }
  }
  double t = 0.5 * (a + b);
  double ft = f(t);
  if (best_f < ft) {
    t = lo + step * best;
    ft = best_f;
  }
  if (prob.solve(0.0).deviance <= ft) return 0.0;
  return std::exp(t);
}

namespace {

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& X) {
  Eigen::MatrixXd full(X.rows(), X.cols() + 1);
  full.col(0).setOnes();
  full.rightCols(X.cols()) = X;
  return full;
}

void check_inputs(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, const std::vector<std::string>& names,
                  const std::vector<int>& groups) {
  if (X.rows() != y.size() || static_cast<Eigen::Index>(groups.size()) != y.size())
    throw Error(ErrorKind::contract, "response, design and groups differ in length");
  if (static_cast<Eigen::Index>(names.size()) != X.cols())
    throw Error(ErrorKind::contract, "one name per predictor column is required");
  if (y.size() <= X.cols() + 2)
    throw Error(ErrorKind::insufficient_data, "mixed model needs more observations than predictors + 2");
  std::vector<int> g(groups);
  std::sort(g.begin(), g.end());
  if (std::unique(g.begin(), g.end()) - g.begin() < 2)
    throw Error(ErrorKind::insufficient_data, "mixed model needs at least 2 groups");
  if (!y.allFinite() || !X.allFinite()) throw Error(ErrorKind::data, "mixed model inputs contain non-finite values");
}

void check_rank(const Eigen::MatrixXd& full, const std::vector<std::string>& names) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(full);
  const Eigen::Index rank = qr.rank();
  if (rank == full.cols()) return;
  std::vector<Eigen::Index> dropped;
  for (Eigen::Index i = rank; i < full.cols(); ++i) dropped.push_back(qr.colsPermutation().indices()(i));
  std::sort(dropped.begin(), dropped.end());
  std::string msg = "singular fixed-effect design; collinear columns:";
  for (auto j : dropped) msg += " " + (j == 0 ? std::string("(Intercept)") : names[static_cast<std::size_t>(j - 1)]);
  throw Error(ErrorKind::rank, msg);
}

MixedModelFit assemble(const RemlProblem& prob, double lambda, const Eigen::VectorXd& y, const Eigen::MatrixXd& full,
                       const std::vector<std::string>& names, double df) {
  const auto sol = prob.solve(lambda);
  MixedModelFit fit;
  fit.lambda = lambda;
  fit.n_obs = static_cast<int>(y.size());
  fit.n_groups = prob.n_groups();
  fit.sigma_e = std::sqrt(sol.sigma2);
  fit.sigma_u = std::sqrt(lambda * sol.sigma2);
  fit.reml_deviance = sol.deviance;

  boost::math::students_t tdist(df);
  std::vector<double> slope_p;
  for (Eigen::Index j = 0; j < full.cols(); ++j) {
    Coefficient c;
    c.name = j == 0 ? "(Intercept)" : names[static_cast<std::size_t>(j - 1)];
    c.estimate = sol.beta(j);
    c.se = std::sqrt(sol.sigma2 * sol.cov_unscaled(j, j));
    c.t = c.estimate / c.se;
    c.df = df;
    c.p_raw = 2.0 * boost::math::cdf(boost::math::complement(tdist, std::abs(c.t)));
    c.p_adj = c.p_raw;
    if (j > 0) slope_p.push_back(c.p_raw);
    fit.coef.push_back(c);
  }
  const auto adj = bh_adjust(slope_p);
  for (std::size_t j = 0; j < adj.size(); ++j) fit.coef[j + 1].p_adj = adj[j];

  const Eigen::VectorXd fixed = full * sol.beta;
  const Eigen::VectorXd u = prob.blups(lambda, sol.beta);
  Eigen::VectorXd resid = y - fixed;
  for (Eigen::Index i = 0; i < resid.size(); ++i) resid(i) -= u(prob.group_index()[static_cast<std::size_t>(i)]);
  fit.blups.assign(u.data(), u.data() + u.size());
  fit.rmse = std::sqrt(resid.squaredNorm() / static_cast<double>(resid.size()));

  const double var_f = stats::variance(std::span<const double>(fixed.data(), static_cast<std::size_t>(fixed.size())));
  const double su2 = fit.sigma_u * fit.sigma_u, se2 = sol.sigma2;
  fit.r2_marginal = var_f / (var_f + su2 + se2);
  fit.r2_conditional = (var_f + su2) / (var_f + su2 + se2);
  fit.icc = su2 / (su2 + se2);
  const double k = static_cast<double>(full.cols() + 2);
  fit.aic = sol.deviance + 2.0 * k;
  fit.bic = sol.deviance + k * std::log(static_cast<double>(y.size()));
  return fit;
}

}  // namespace

MixedModelFit fit_lmer(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, const std::vector<std::string>& names,
                       const std::vector<int>& groups) {
  check_inputs(y, X, names, groups);
  const Eigen::MatrixXd full = with_intercept(X);
  check_rank(full, names);
  const RemlProblem prob(y, full, groups);
  const double lambda = optimize_lambda(prob);
  const double df = static_cast<double>(y.size() - X.cols() - 2);
  return assemble(prob, lambda, y, full, names, df);
}

MixedModelFit fit_rlmer(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, const std::vector<std::string>& names,
                        const std::vector<int>& groups, const RobustOptions& opt) {
  const MixedModelFit classical = fit_lmer(y, X, names, groups);
  const Eigen::MatrixXd full = with_intercept(X);
  const double df = classical.coef.front().df;
  const Eigen::Index n = y.size();

  Eigen::VectorXd beta(full.cols());
  for (Eigen::Index j = 0; j < beta.size(); ++j) beta(j) = classical.coef[static_cast<std::size_t>(j)].estimate;
  double lambda = classical.lambda;
  Eigen::VectorXd u = Eigen::Map<const Eigen::VectorXd>(classical.blups.data(),
                                                        static_cast<Eigen::Index>(classical.blups.size()));
  std::vector<int> gidx = RemlProblem(y, full, groups).group_index();
  Eigen::VectorXd w = Eigen::VectorXd::Ones(n);
  std::vector<double> trace;

  for (int iter = 1; iter <= opt.max_iter; ++iter) {
    std::vector<double> e(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
      e[static_cast<std::size_t>(i)] = y(i) - full.row(i).dot(beta) - u(gidx[static_cast<std::size_t>(i)]);
    const double scale = 1.4826 * stats::mad(e);
    if (!(scale > 0.0)) {
      trace.push_back(0.0);
      break;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      const double r = std::abs(e[static_cast<std::size_t>(i)]) / scale;
      w(i) = r <= opt.k ? 1.0 : opt.k / r;
    }
    const RemlProblem prob(y, full, groups, w);
    lambda = optimize_lambda(prob);
    const auto sol = prob.solve(lambda);
    const double delta = (sol.beta - beta).cwiseAbs().maxCoeff();
    beta = sol.beta;
    u = prob.blups(lambda, beta);
    trace.push_back(delta);
    if (delta < opt.tol) break;
    if (iter == opt.max_iter) {
      std::string msg = "robust fit did not converge in " + std::to_string(opt.max_iter) + " iterations; max|dbeta|:";
      char buf[32];
      for (std::size_t i = trace.size() > 5 ? trace.size() - 5 : 0; i < trace.size(); ++i) {
        std::snprintf(buf, sizeof buf, " %.3g", trace[i]);
        msg += buf;
      }
      throw Error(ErrorKind::numeric, msg);
    }
  }

  const RemlProblem prob(y, full, groups, w);
  MixedModelFit fit = assemble(prob, lambda, y, full, names, df);
  fit.robust = true;
  fit.iterations = static_cast<int>(trace.size());
  fit.weights.assign(w.data(), w.data() + w.size());
  return fit;
}

std::vector<double> bh_adjust(std::span<const double> p) {
  const std::size_t m = p.size();
  for (double v : p)
    if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorKind::contract, "p-values must lie in [0, 1]");
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  std::vector<double> out(m);
  double running = 1.0;
  for (std::size_t r = m; r-- > 0;) {
    const std::size_t i = order[r];
    running = std::min(running, p[i] * static_cast<double>(m) / static_cast<double>(r + 1));
    out[i] = running;
  }
  return out;
}

std::string model_summary(const std::vector<const MixedModelFit*>& fits, const std::vector<std::string>& labels) {
  if (fits.size() != labels.size()) throw Error(ErrorKind::contract, "one label per fit is required");
  std::vector<std::string> names;
  for (const auto* f : fits)
    for (const auto& c : f->coef)
      if (std::find(names.begin(), names.end(), c.name) == names.end()) names.push_back(c.name);

  std::string out;
  char buf[128];
  auto row = [&](const std::string& label, const std::vector<std::string>& cells) {
    std::snprintf(buf, sizeof buf, "%-22s", label.c_str());
    out += buf;
    for (const auto& c : cells) {
      std::snprintf(buf, sizeof buf, " %24s", c.c_str());
      out += buf;
    }
    out += '\n';
  };
  row("", labels);
  for (const auto& name : names) {
    std::vector<std::string> est, tp;
    for (const auto* f : fits) {
      const auto it = std::find_if(f->coef.begin(), f->coef.end(), [&](const Coefficient& c) { return c.name == name; });
      if (it == f->coef.end()) {
        est.emplace_back("-");
        tp.emplace_back("");
        continue;
      }
      std::snprintf(buf, sizeof buf, "%.3f (%.3f)", it->estimate, it->se);
      est.emplace_back(buf);
      std::snprintf(buf, sizeof buf, "t=%.3f p_adj=%.3g", it->t, it->p_adj);
      tp.emplace_back(buf);
    }
    row(name, est);
    row("", tp);
  }
  auto stat = [&](const char* label, auto get, const char* fmt) {
    std::vector<std::string> cells;
    for (const auto* f : fits) {
      std::snprintf(buf, sizeof buf, fmt, get(*f));
      cells.emplace_back(buf);
    }
    row(label, cells);
  };
  stat("SD (group)", [](const MixedModelFit& f) { return f.sigma_u; }, "%.3f");
  stat("SD (observations)", [](const MixedModelFit& f) { return f.sigma_e; }, "%.3f");
  stat("Observations", [](const MixedModelFit& f) { return f.n_obs; }, "%d");
  stat("Groups", [](const MixedModelFit& f) { return f.n_groups; }, "%d");
  stat("R2 marginal", [](const MixedModelFit& f) { return f.r2_marginal; }, "%.3f");
  stat("R2 conditional", [](const MixedModelFit& f) { return f.r2_conditional; }, "%.3f");
  stat("AIC", [](const MixedModelFit& f) { return f.aic; }, "%.1f");
  stat("BIC", [](const MixedModelFit& f) { return f.bic; }, "%.1f");
  stat("ICC", [](const MixedModelFit& f) { return f.icc; }, "%.3f");
  stat("RMSE", [](const MixedModelFit& f) { return f.rmse; }, "%.3f");
  return out;
}

}  // namespace physio::mixed
