#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace physio::mixed {

/// Random-intercept design: y = X b + Z u + e with one intercept per group.
/// X here includes the intercept column. Observation weights scale the
/// residual precision (all ones for the classical fit).
struct RemlProblem {
  RemlProblem(Eigen::VectorXd y, Eigen::MatrixXd X, const std::vector<int>& groups,
              Eigen::VectorXd weights = Eigen::VectorXd());

  struct Solution {
    double deviance = 0.0;  // -2 restricted log-likelihood, with constants
    Eigen::VectorXd beta;
    Eigen::MatrixXd cov_unscaled;  // (X' V^-1 X)^-1
    double sigma2 = 0.0;           // residual variance
  };
  /// lambda = sigma_u^2 / sigma_e^2 >= 0.
  Solution solve(double lambda) const;
  /// Conditional modes of the group intercepts at (lambda, beta).
  Eigen::VectorXd blups(double lambda, const Eigen::VectorXd& beta) const;

  Eigen::Index n() const { return y_.size(); }
  Eigen::Index fixed() const { return X_.cols(); }
  int n_groups() const { return static_cast<int>(group_size_.size()); }
  const std::vector<int>& group_index() const { return gidx_; }

 private:
  Eigen::VectorXd y_, w_;
  Eigen::MatrixXd X_;
  std::vector<int> gidx_;
  Eigen::MatrixXd XtWX_;
  Eigen::VectorXd XtWy_;
  double ytWy_ = 0.0;
  double log_w_ = 0.0;
  Eigen::MatrixXd XtW1_;  // fixed x groups
  Eigen::VectorXd ytW1_;
  Eigen::VectorXd group_w_;  // sum of weights per group
  std::vector<int> group_size_;
};

/// Minimizes the REML deviance over log(lambda) in [-12, 12]: coarse grid,
/// golden-section refinement, then a check of the lambda = 0 boundary.
double optimize_lambda(const RemlProblem& prob);

struct Coefficient {
  std::string name;
  double estimate = 0.0;
  double se = 0.0;
  double t = 0.0;
  double df = 0.0;
  double p_raw = 1.0;
  double p_adj = 1.0;
};

struct MixedModelFit {
  std::vector<Coefficient> coef;  // intercept first
  double lambda = 0.0;
  double sigma_u = 0.0;
  double sigma_e = 0.0;
  double reml_deviance = 0.0;
  double r2_marginal = 0.0;
  double r2_conditional = 0.0;
  double aic = 0.0;
  double bic = 0.0;
  double icc = 0.0;
  double rmse = 0.0;
  int n_obs = 0;
  int n_groups = 0;
  bool robust = false;
  int iterations = 0;
  std::vector<double> weights;  // robust fit only
  std::vector<double> blups;
};

/// X holds the selected predictors without an intercept; names label its
/// columns. Throws a rank error naming collinear columns.
MixedModelFit fit_lmer(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, const std::vector<std::string>& names,
                       const std::vector<int>& groups);

struct RobustOptions {
  double k = 1.345;
  double tol = 1e-8;
  int max_iter = 100;
};

/// Huber-weighted REML refit by iteratively reweighting on the conditional
/// residuals scaled by 1.4826 * MAD. Degrees of freedom are the classical ones.
MixedModelFit fit_rlmer(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, const std::vector<std::string>& names,
                        const std::vector<int>& groups, const RobustOptions& opt = {});

/// Benjamini-Hochberg step-up adjustment, returned in input order.
std::vector<double> bh_adjust(std::span<const double> p);

/// Plain-text table with one column per fit.
std::string model_summary(const std::vector<const MixedModelFit*>& fits, const std::vector<std::string>& labels);

}  // namespace physio::mixed
