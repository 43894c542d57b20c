#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace physio::trex {

/// n x L standard-normal dummies, column-standardized. Dummies are nested:
/// column j of experiment k depends only on (seed, k, j), so the matrix for L
/// is the left block of the matrix for any larger count.
Eigen::MatrixXd generate_dummies(Eigen::Index n, Eigen::Index L, std::uint64_t seed, std::uint64_t experiment);
/// Writes dummy columns first .. first + D.cols() - 1 into D.
void fill_dummies(Eigen::Ref<Eigen::MatrixXd> D, Eigen::Index first, std::uint64_t seed, std::uint64_t experiment);

/// Resumable least-angle regression path. Columns enter one at a time; ties
/// on the entry correlation go to the lowest column index. Columns that are
/// numerically collinear with the active set are skipped for good.
class LarsPath {
 public:
  LarsPath() = default;
  /// Advances until `stop(entries)` returns true after an entry or the path ends.
  void run(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::VectorXd& y,
           const std::function<bool(const std::vector<int>&)>& stop);
  const std::vector<int>& entries() const { return entries_; }
  bool exhausted() const { return exhausted_; }

 private:
  bool step(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::VectorXd& y);
  bool add(const Eigen::Ref<const Eigen::MatrixXd>& X, int j, double sign);

  bool started_ = false;
  bool exhausted_ = false;
  std::vector<int> active_;
  std::vector<double> sign_;
  std::vector<char> blocked_;  // active or skipped
  Eigen::MatrixXd chol_;       // lower factor of X_A' X_A, grown in place
  Eigen::VectorXd mu_;
  Eigen::VectorXd c_;
  std::vector<int> entries_;
};

struct ExperimentResult {
  int k = 0;
  std::vector<int> order;        // column indices; >= p means dummy
  std::size_t termination = 0;   // prefix length ending at the stop_T-th dummy
};

/// One random experiment on [X | dummies]: path halted when the stop_T-th
/// dummy enters. Throws degenerate_signal if y is constant.
ExperimentResult forward_path(const Eigen::MatrixXd& Xt, const Eigen::VectorXd& y, int p, int stop_T);

struct RelativeOccurrences {
  std::vector<double> phi;        // p entries
  std::vector<double> phi_dummy;  // L entries
  int K = 0;
};
RelativeOccurrences relative_occurrences(const std::vector<ExperimentResult>& results, int T, int p, int L);

/// Sample correlation of the columns of X; zero-variance columns get zero
/// off-diagonal entries.
Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& X);

/// Dependency-aware nearest-neighbour penalty on the occurrences.
std::vector<double> da_nn_penalize(const std::vector<double>& phi, const Eigen::MatrixXd& C, double rho_thr);

/// Knockoff-style plug-in estimate (p / L) * #{dummies above v} / max(1, R).
double estimate_fdp_dummy_plugin(const std::vector<double>& phi_real, const std::vector<double>& phi_dummy,
                                 double v, int p, int L);

/// Deflated occurrences for T = 1..phi_by_T.size(); phi_by_T[t-1] is the
/// occurrence vector at dummy budget t.
std::vector<double> deflated_occurrences(const std::vector<std::vector<double>>& phi_by_T, int p, int L);

/// sum over selected j of (1 - deflated_j), divided by max(1, R).
double estimate_fdp(const std::vector<double>& phi_select, const std::vector<double>& deflated, double v);

enum class Variant { plain, da_nn };
const char* to_string(Variant v);
Variant parse_variant(const std::string& s);

struct Options {
  double alpha = 0.1;
  std::vector<double> alpha_grid;
  int K = 100;
  std::uint64_t seed = 42;
  Variant variant = Variant::da_nn;
  std::vector<double> rho_grid{0.5, 0.7, 0.9};
  int max_T = 0;             // 0 means L
  int max_L_factor = 16;     // L is doubled from p up to this multiple of p
  int stall_limit = 2;
  unsigned threads = 0;      // 0 means all cores
};

/// Per-experiment augmented designs [X | dummies], widened as L grows. Gives
/// up (reserve returns false) when the designs would exceed the memory budget.
class DesignStore {
 public:
  DesignStore(const Eigen::MatrixXd& X, int K, std::uint64_t seed, unsigned threads, double budget_bytes);
  bool reserve(int L);
  Eigen::Map<const Eigen::MatrixXd> view(std::size_t k, int L) const;

 private:
  const Eigen::MatrixXd& X_;
  std::uint64_t seed_;
  unsigned threads_;
  double budget_;
  int width_ = 0;  // dummy columns held
  std::vector<Eigen::MatrixXd> designs_;
};

/// K random experiments at fixed L, advanced lazily in T.
class ExperimentSet {
 public:
  ExperimentSet(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, int L, int K, std::uint64_t seed,
                unsigned threads, DesignStore* store = nullptr);
  void run_to(int T);
  /// Occurrences of real (p) and dummy (L) columns at budget T <= reached.
  RelativeOccurrences occurrences(int T) const;
  int L() const { return L_; }
  int reached() const { return reached_; }

 private:
  const Eigen::MatrixXd& X_;
  const Eigen::VectorXd& y_;
  int L_, K_;
  std::uint64_t seed_;
  unsigned threads_;
  int reached_ = 0;
  DesignStore* store_;
  std::vector<LarsPath> paths_;
};

struct SweepRow {
  double alpha = 0.0;
  std::vector<int> selected;
  double selected_percent = 0.0;
  double fdp_hat = 0.0;
  double v = 0.0;
  int T = 0;
  int L = 0;
  double rho = 0.0;
};

struct SelectionResult {
  double alpha = 0.0;
  int K = 0;
  std::uint64_t seed = 0;
  Variant variant = Variant::da_nn;
  bool feasible = false;
  double v = 0.0;
  int T = 0;
  int L = 0;
  double rho = 0.0;  // 0 for the plain variant
  double fdp_hat = 0.0;
  std::vector<int> selected;          // column indices, ascending
  std::vector<double> phi;            // plain occurrences at (T, L)
  std::vector<double> phi_penalized;  // what the vote used
  std::vector<double> phi_deflated;
  std::vector<SweepRow> sweep;
};

/// Calibrated selection. X columns and y are expected standardized. Paths are
/// cached across calls so an alpha sweep and both variants reuse them.
class Selector {
 public:
  Selector(Eigen::MatrixXd X, Eigen::VectorXd y, int K, std::uint64_t seed, unsigned threads = 0);
  SelectionResult select(double alpha, Variant variant, const Options& opt);
  SelectionResult run(const Options& opt);  // opt.alpha plus sweep over opt.alpha_grid

 private:
  ExperimentSet& experiments(int L);
  Eigen::MatrixXd X_;
  Eigen::VectorXd y_;
  Eigen::MatrixXd C_;
  int K_;
  std::uint64_t seed_;
  unsigned threads_;
  std::unique_ptr<DesignStore> designs_;
  std::map<int, std::unique_ptr<ExperimentSet>> cache_;
};

SelectionResult calibrate_and_select(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Options& opt);

}  // namespace physio::trex
