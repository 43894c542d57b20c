#include "physio/trex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>

#include "physio/common.hpp"

namespace physio::trex {

namespace {

constexpr Eigen::Index kDummyBlock = 64;

// One block of kDummyBlock columns, keyed by (seed, experiment, block).
Eigen::MatrixXd dummy_block(Eigen::Index n, std::uint64_t seed, std::uint64_t experiment, std::uint64_t block) {
  const std::uint32_t words[] = {static_cast<std::uint32_t>(seed),       static_cast<std::uint32_t>(seed >> 32),
                                 static_cast<std::uint32_t>(experiment), static_cast<std::uint32_t>(experiment >> 32),
                                 static_cast<std::uint32_t>(block),      static_cast<std::uint32_t>(block >> 32),
                                 0x7265u};
  std::seed_seq seq(std::begin(words), std::end(words));
  boost::random::mt19937_64 gen(seq);
  boost::random::normal_distribution<double> normal;
  Eigen::MatrixXd D(n, kDummyBlock);
  for (Eigen::Index j = 0; j < kDummyBlock; ++j)
    for (Eigen::Index i = 0; i < n; ++i) D(i, j) = normal(gen);
  if (n >= 2) {
    for (Eigen::Index j = 0; j < kDummyBlock; ++j) {
      auto c = D.col(j);
      c.array() -= c.mean();
      const double sd = std::sqrt(c.squaredNorm() / static_cast<double>(n - 1));
      if (sd > 0.0) c /= sd;
    }
  }
  return D;
}

}  // namespace

void fill_dummies(Eigen::Ref<Eigen::MatrixXd> D, Eigen::Index first, std::uint64_t seed, std::uint64_t experiment) {
  const Eigen::Index n = D.rows(), count = D.cols();
  Eigen::Index j = 0;
  while (j < count) {
    const Eigen::Index col = first + j;
    const Eigen::Index block = col / kDummyBlock, offset = col % kDummyBlock;
    const Eigen::Index take = std::min(kDummyBlock - offset, count - j);
    D.middleCols(j, take) = dummy_block(n, seed, experiment, static_cast<std::uint64_t>(block)).middleCols(offset, take);
    j += take;
  }
}

Eigen::MatrixXd generate_dummies(Eigen::Index n, Eigen::Index L, std::uint64_t seed, std::uint64_t experiment) {
  if (L < 1) throw Error(ErrorKind::contract, "dummy count must be >= 1");
  Eigen::MatrixXd D(n, L);
  fill_dummies(D, 0, seed, experiment);
  return D;
}

// ---------------------------------------------------------------- LARS

bool LarsPath::add(const Eigen::Ref<const Eigen::MatrixXd>& X, int j, double sign) {
  const Eigen::Index k = static_cast<Eigen::Index>(active_.size());
  const auto xj = X.col(j);
  const double xx = xj.squaredNorm();
  Eigen::VectorXd z(k);
  if (k > 0) {
    for (Eigen::Index a = 0; a < k; ++a) z(a) = X.col(active_[static_cast<std::size_t>(a)]).dot(xj);
    chol_.topLeftCorner(k, k).triangularView<Eigen::Lower>().solveInPlace(z);
  }
  const double d = xx - z.squaredNorm();
  blocked_[static_cast<std::size_t>(j)] = 1;
  if (!(d > 1e-10 * xx)) return false;
  if (chol_.rows() < k + 1) chol_.conservativeResize(std::max<Eigen::Index>(2 * (k + 1), 8), std::max<Eigen::Index>(2 * (k + 1), 8));
  chol_.row(k).head(k) = z.transpose();
  chol_(k, k) = std::sqrt(d);
  active_.push_back(j);
  sign_.push_back(sign);
  entries_.push_back(j);
  return true;
}

bool LarsPath::step(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::VectorXd& y) {
  const Eigen::Index n = X.rows(), m = X.cols();
  if (!started_) {
    started_ = true;
    mu_ = Eigen::VectorXd::Zero(n);
    c_ = X.transpose() * y;
    blocked_.assign(static_cast<std::size_t>(m), 0);
  }
  // Correlations with the current residual, kept up to date along the path.
  const Eigen::VectorXd& c = c_;
  const std::size_t limit = static_cast<std::size_t>(std::min<Eigen::Index>(n - 1, m));
  if (active_.size() >= limit) {
    exhausted_ = true;
    return false;
  }

  if (active_.empty()) {
    int best = -1;
    double cmax = 0.0;
    for (Eigen::Index j = 0; j < m; ++j)
      if (!blocked_[static_cast<std::size_t>(j)] && std::abs(c(j)) > cmax) {
        cmax = std::abs(c(j));
        best = static_cast<int>(j);
      }
    if (best < 0 || cmax <= 1e-12 * std::max(1.0, y.norm())) {
      exhausted_ = true;
      return false;
    }
    return add(X, best, c(best) >= 0.0 ? 1.0 : -1.0);
  }

  const Eigen::Index k = static_cast<Eigen::Index>(active_.size());
  double C = 0.0;
  for (int j : active_) C = std::max(C, std::abs(c(j)));
  if (C <= 1e-12 * std::max(1.0, y.norm())) {
    exhausted_ = true;
    return false;
  }
  Eigen::VectorXd s(k);
  for (Eigen::Index a = 0; a < k; ++a) s(a) = sign_[static_cast<std::size_t>(a)];
  const auto Lk = chol_.topLeftCorner(k, k).triangularView<Eigen::Lower>();
  Eigen::VectorXd w = Lk.solve(s);
  w = Lk.transpose().solve(w);
  const double AA = 1.0 / std::sqrt(s.dot(w));
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
  for (Eigen::Index a = 0; a < k; ++a) u.noalias() += (AA * w(a)) * X.col(active_[static_cast<std::size_t>(a)]);
  const Eigen::VectorXd av = X.transpose() * u;

  double gamma = std::numeric_limits<double>::infinity();
  int next = -1;
  for (Eigen::Index j = 0; j < m; ++j) {
    if (blocked_[static_cast<std::size_t>(j)]) continue;
    for (double g : {(C - c(j)) / (AA - av(j)), (C + c(j)) / (AA + av(j))}) {
      if (g > 1e-12 && g < gamma) {
        gamma = g;
        next = static_cast<int>(j);
      }
    }
  }
  if (next < 0) {
    mu_ += (C / AA) * u;
    c_ -= (C / AA) * av;
    exhausted_ = true;
    return false;
  }
  mu_ += gamma * u;
  c_ -= gamma * av;
  return add(X, next, c_(next) >= 0.0 ? 1.0 : -1.0);
}

void LarsPath::run(const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::VectorXd& y,
                   const std::function<bool(const std::vector<int>&)>& stop) {
  while (!exhausted_) {
    if (step(X, y) && stop(entries_)) return;
  }
}

namespace {

int count_dummies(const std::vector<int>& entries, int p) {
  return static_cast<int>(std::count_if(entries.begin(), entries.end(), [p](int j) { return j >= p; }));
}

void require_nonconstant(const Eigen::VectorXd& y) {
  if (y.size() < 2 || !((y.array() - y.mean()).abs().maxCoeff() > 0.0))
    throw Error(ErrorKind::degenerate_signal, "response is constant");
}

// Prefix of `entries` that ends with the T-th dummy (whole list if fewer).
std::size_t prefix_length(const std::vector<int>& entries, int p, int T) {
  int seen = 0;
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (entries[i] >= p && ++seen == T) return i + 1;
  return entries.size();
}

}  // namespace

ExperimentResult forward_path(const Eigen::MatrixXd& Xt, const Eigen::VectorXd& y, int p, int stop_T) {
  require_nonconstant(y);
  const int L = static_cast<int>(Xt.cols()) - p;
  if (stop_T < 1 || stop_T > L) throw Error(ErrorKind::contract, "stop_T must lie in [1, L]");
  LarsPath path;
  path.run(Xt, y, [p, stop_T](const std::vector<int>& e) { return count_dummies(e, p) >= stop_T; });
  ExperimentResult r;
  r.order = path.entries();
  r.termination = prefix_length(r.order, p, stop_T);
  return r;
}

RelativeOccurrences relative_occurrences(const std::vector<ExperimentResult>& results, int T, int p, int L) {
  RelativeOccurrences occ;
  occ.phi.assign(static_cast<std::size_t>(p), 0.0);
  occ.phi_dummy.assign(static_cast<std::size_t>(L), 0.0);
  occ.K = static_cast<int>(results.size());
  if (results.empty()) return occ;
  for (const auto& r : results) {
    const std::size_t len = prefix_length(r.order, p, T);
    for (std::size_t i = 0; i < len; ++i) {
      const int j = r.order[i];
      if (j < p) occ.phi[static_cast<std::size_t>(j)] += 1.0;
      else occ.phi_dummy[static_cast<std::size_t>(j - p)] += 1.0;
    }
  }
  for (double& v : occ.phi) v /= occ.K;
  for (double& v : occ.phi_dummy) v /= occ.K;
  return occ;
}

// ---------------------------------------------------------------- penalty and estimators

Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& X) {
  const Eigen::Index p = X.cols();
  Eigen::MatrixXd Z = X.rowwise() - X.colwise().mean();
  Eigen::VectorXd norms = Z.colwise().norm();
  for (Eigen::Index j = 0; j < p; ++j) {
    if (norms(j) > 0.0) Z.col(j) /= norms(j);
    else Z.col(j).setZero();
  }
  Eigen::MatrixXd C = Z.transpose() * Z;
  C = (C + C.transpose()) / 2.0;
  C.diagonal().setOnes();
  return C;
}

std::vector<double> da_nn_penalize(const std::vector<double>& phi, const Eigen::MatrixXd& C, double rho_thr) {
  const std::size_t p = phi.size();
  if (C.rows() != static_cast<Eigen::Index>(p) || C.cols() != static_cast<Eigen::Index>(p))
    throw Error(ErrorKind::contract, "correlation matrix size does not match occurrences");
  for (Eigen::Index i = 0; i < C.rows(); ++i)
    for (Eigen::Index j = i + 1; j < C.cols(); ++j)
      if (std::abs(C(i, j) - C(j, i)) > 1e-12) throw Error(ErrorKind::contract, "correlation matrix is not symmetric");
  std::vector<double> out(phi);
  for (std::size_t j = 0; j < p; ++j) {
    double worst = 0.0;
    for (std::size_t i = 0; i < p; ++i) {
      if (i == j) continue;
      const double c = std::abs(C(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
      if (c < rho_thr) continue;
      worst = std::max(worst, c * (1.0 - std::abs(phi[j] - phi[i])));
    }
    out[j] = phi[j] * (1.0 - std::min(worst, 1.0));
  }
  return out;
}

double estimate_fdp_dummy_plugin(const std::vector<double>& phi_real, const std::vector<double>& phi_dummy,
                                 double v, int p, int L) {
  double dummies = 0.0, reals = 0.0;
  for (double f : phi_dummy) dummies += f > v ? 1.0 : 0.0;
  for (double f : phi_real) reals += f > v ? 1.0 : 0.0;
  return (static_cast<double>(p) / L) * dummies / std::max(1.0, reals);
}

std::vector<double> deflated_occurrences(const std::vector<std::vector<double>>& phi_by_T, int p, int L) {
  if (phi_by_T.empty()) return {};
  const std::size_t np = phi_by_T.front().size();
  std::vector<double> out(np, 0.0), prev(np, 0.0);
  for (std::size_t t = 0; t < phi_by_T.size(); ++t) {
    const auto& cur = phi_by_T[t];
    double sum = 0.0, delta_sum = 0.0;
    for (std::size_t j = 0; j < np; ++j) {
      sum += cur[j];
      delta_sum += cur[j] - prev[j];
    }
    // Expected null entries per remaining dummy, spread over this step's gain.
    const double null_rate = (p - sum) / static_cast<double>(L - static_cast<int>(t));
    const double scale = delta_sum > 1e-12 ? std::max(0.0, 1.0 - null_rate / delta_sum) : 0.0;
    for (std::size_t j = 0; j < np; ++j)
      out[j] += scale * (cur[j] - prev[j]);
    prev = cur;
  }
  // Only variables past the majority vote at the final budget keep any mass.
  const auto& last = phi_by_T.back();
  for (std::size_t j = 0; j < np; ++j)
    if (!(last[j] > 0.5)) out[j] = 0.0;
  return out;
}

double estimate_fdp(const std::vector<double>& phi_select, const std::vector<double>& deflated, double v) {
  double vhat = 0.0, r = 0.0;
  for (std::size_t j = 0; j < phi_select.size(); ++j)
    if (phi_select[j] > v + 1e-12) {
      vhat += 1.0 - std::min(1.0, deflated[j]);
      r += 1.0;
    }
  return r > 0.0 ? vhat / r : 0.0;
}

const char* to_string(Variant v) { return v == Variant::plain ? "plain" : "da-nn"; }

Variant parse_variant(const std::string& s) {
  if (s == "plain") return Variant::plain;
  if (s == "da-nn" || s == "da_nn") return Variant::da_nn;
  throw Error(ErrorKind::config, "unknown selector variant '" + s + "' (expected plain or da-nn)");
}

// ---------------------------------------------------------------- experiments

DesignStore::DesignStore(const Eigen::MatrixXd& X, int K, std::uint64_t seed, unsigned threads, double budget_bytes)
    : X_(X), seed_(seed), threads_(threads), budget_(budget_bytes), designs_(static_cast<std::size_t>(K)) {}

bool DesignStore::reserve(int L) {
  if (L <= width_) return true;
  const Eigen::Index n = X_.rows(), p = X_.cols();
  const double bytes =
      static_cast<double>(designs_.size()) * static_cast<double>(n) * static_cast<double>(p + L) * sizeof(double);
  if (bytes > budget_) return false;
  parallel_for(designs_.size(), threads_, [&](std::size_t k) {
    auto& D = designs_[k];
    if (width_ == 0) {
      D.resize(n, p + L);
      D.leftCols(p) = X_;
    } else {
      D.conservativeResize(Eigen::NoChange, p + L);
    }
    fill_dummies(D.rightCols(L - width_), width_, seed_, k);
  });
  width_ = L;
  return true;
}

Eigen::Map<const Eigen::MatrixXd> DesignStore::view(std::size_t k, int L) const {
  // Column-major storage: the first p + L columns are contiguous.
  return {designs_[k].data(), X_.rows(), X_.cols() + L};
}

ExperimentSet::ExperimentSet(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, int L, int K, std::uint64_t seed,
                             unsigned threads, DesignStore* store)
    : X_(X), y_(y), L_(L), K_(K), seed_(seed), threads_(threads), store_(store), paths_(static_cast<std::size_t>(K)) {}

void ExperimentSet::run_to(int T) {
  if (T <= reached_) return;
  const int p = static_cast<int>(X_.cols());
  const Eigen::Index n = X_.rows();
  const bool stored = store_ != nullptr && store_->reserve(L_);
  const auto stop = [p, T](const std::vector<int>& e) { return count_dummies(e, p) >= T; };
  parallel_for(static_cast<std::size_t>(K_), threads_, [&](std::size_t k) {
    LarsPath& path = paths_[k];
    if (path.exhausted() || count_dummies(path.entries(), p) >= T) return;
    if (stored) {
      path.run(store_->view(k, L_), y_, stop);
      return;
    }
    Eigen::MatrixXd Xt(n, p + L_);
    Xt.leftCols(p) = X_;
    fill_dummies(Xt.rightCols(L_), 0, seed_, k);
    path.run(Xt, y_, stop);
  });
  reached_ = T;
}

RelativeOccurrences ExperimentSet::occurrences(int T) const {
  if (T > reached_) throw Error(ErrorKind::contract, "occurrences requested beyond the computed budget");
  std::vector<ExperimentResult> results(paths_.size());
  for (std::size_t k = 0; k < paths_.size(); ++k) {
    results[k].k = static_cast<int>(k);
    results[k].order = paths_[k].entries();
  }
  return relative_occurrences(results, T, static_cast<int>(X_.cols()), L_);
}

// ---------------------------------------------------------------- calibration

Selector::Selector(Eigen::MatrixXd X, Eigen::VectorXd y, int K, std::uint64_t seed, unsigned threads)
    : X_(std::move(X)), y_(std::move(y)), K_(K), seed_(seed), threads_(threads ? threads : default_threads()) {
  if (K_ < 2) throw Error(ErrorKind::config, "K must be >= 2");
  if (X_.rows() != y_.size()) throw Error(ErrorKind::contract, "X and y disagree on the number of rows");
  require_nonconstant(y_);
  C_ = correlation_matrix(X_);
  // Enough for K = 100 experiments at n = 240, p = 164 and the full 16p dummy cap.
  constexpr double kDesignBudgetBytes = 768.0 * 1024 * 1024;
  designs_ = std::make_unique<DesignStore>(X_, K_, seed_, threads_, kDesignBudgetBytes);
}

ExperimentSet& Selector::experiments(int L) {
  auto& slot = cache_[L];
  if (!slot) slot = std::make_unique<ExperimentSet>(X_, y_, L, K_, seed_, threads_, designs_.get());
  return *slot;
}

namespace {

struct Candidate {
  bool feasible = false;
  int R = 0;
  double fdp = 0.0;
  double v = 0.0;
  double rho = 0.0;
  std::vector<double> pen;
};

// Larger R first, then smaller FDP estimate, then larger v.
bool better(const Candidate& a, const Candidate& b) {
  if (!b.feasible) return a.feasible;
  if (!a.feasible) return false;
  if (a.R != b.R) return a.R > b.R;
  if (std::abs(a.fdp - b.fdp) > 1e-12) return a.fdp < b.fdp;
  return a.v > b.v + 1e-12;
}

Candidate best_v(const std::vector<double>& pen, const std::vector<double>& deflated, double alpha, int K) {
  Candidate best;
  for (int i = 0; 0.5 + static_cast<double>(i) / K < 1.0 - 0.5 / K; ++i) {
    Candidate c;
    c.v = 0.5 + static_cast<double>(i) / K;
    for (double f : pen) c.R += f > c.v + 1e-12 ? 1 : 0;
    c.fdp = estimate_fdp(pen, deflated, c.v);
    c.feasible = c.fdp <= alpha + 1e-12;
    if (better(c, best)) best = c;
  }
  return best;
}

}  // namespace

SelectionResult Selector::select(double alpha, Variant variant, const Options& opt) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorKind::config, "alpha must lie in (0, 1)");
  const int p = static_cast<int>(X_.cols());
  SelectionResult res;
  res.alpha = alpha;
  res.K = K_;
  res.seed = seed_;
  res.variant = variant;
  if (p == 0) return res;
  const double v_max = 1.0 - 1.0 / K_;

  int L = p;
  const int L_cap = std::max(1, opt.max_L_factor) * p;
  for (;;) {
    auto& es = experiments(L);
    es.run_to(1);
    const auto occ = es.occurrences(1);
    const auto defl = deflated_occurrences({occ.phi}, p, L);
    // Checked at the voting floor: at v_max the selected set is often empty,
    // which makes any L look sufficient.
    if (estimate_fdp(occ.phi, defl, 0.5) <= alpha || 2 * L > L_cap) break;
    L *= 2;
  }
  auto& es = experiments(L);
  const int T_max = opt.max_T > 0 ? std::min(opt.max_T, L) : L;

  std::vector<double> rhos;
  if (variant == Variant::da_nn) rhos = opt.rho_grid;
  if (rhos.empty()) rhos.push_back(0.0);

  Candidate best;
  int best_T = 1;
  std::vector<std::vector<double>> phis;
  std::vector<double> best_phi, best_defl;
  int running_max = -1, stall = 0;
  for (int T = 1; T <= T_max; ++T) {
    es.run_to(T);
    phis.push_back(es.occurrences(T).phi);
    const auto defl = deflated_occurrences(phis, p, L);
    if (T > 1 && estimate_fdp(phis.back(), defl, v_max) > alpha) break;

    Candidate pick;
    for (double rho : rhos) {
      auto pen = variant == Variant::da_nn ? da_nn_penalize(phis.back(), C_, rho) : phis.back();
      Candidate c = best_v(pen, defl, alpha, K_);
      c.rho = rho;
      c.pen = std::move(pen);
      // Most conservative neighbourhood: fewest selections, then smaller rho.
      if (c.feasible && (!pick.feasible || c.R < pick.R)) pick = std::move(c);
    }
    if (better(pick, best)) {
      best = pick;
      best_T = T;
      best_phi = phis.back();
      best_defl = defl;
    }
    const int r = pick.feasible ? pick.R : -1;
    if (r > running_max) {
      running_max = r;
      stall = 0;
    } else if (++stall >= opt.stall_limit) {
      break;
    }
  }

  res.L = L;
  res.T = best_T;
  if (best_phi.empty()) {
    best_phi = phis.front();
    best_defl = deflated_occurrences({phis.front()}, p, L);
  }
  res.phi = best_phi;
  res.phi_deflated = best_defl;
  res.feasible = best.feasible;
  if (best.feasible) {
    res.v = best.v;
    res.rho = best.rho;
    res.fdp_hat = best.fdp;
    res.phi_penalized = best.pen;
    for (int j = 0; j < p; ++j)
      if (best.pen[static_cast<std::size_t>(j)] > best.v + 1e-12) res.selected.push_back(j);
  } else {
    res.phi_penalized = best_phi;
    res.v = v_max;
  }
  return res;
}

SelectionResult Selector::run(const Options& opt) {
  SelectionResult main = select(opt.alpha, opt.variant, opt);
  const double p = static_cast<double>(X_.cols());
  for (double a : opt.alpha_grid) {
    const SelectionResult r = std::abs(a - opt.alpha) < 1e-15 ? main : select(a, opt.variant, opt);
    SweepRow row;
    row.alpha = a;
    row.selected = r.selected;
    row.selected_percent = p > 0 ? 100.0 * static_cast<double>(r.selected.size()) / p : 0.0;
    row.fdp_hat = r.fdp_hat;
    row.v = r.v;
    row.T = r.T;
    row.L = r.L;
    row.rho = r.rho;
    main.sweep.push_back(std::move(row));
  }
  return main;
}

SelectionResult calibrate_and_select(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Options& opt) {
  Selector s(X, y, opt.K, opt.seed, opt.threads);
  return s.run(opt);
}

}  // namespace physio::trex
