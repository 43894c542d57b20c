#include "physio/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>

#include "physio/common.hpp"

namespace physio::synth {

const char* to_string(Correlation c) {
  switch (c) {
    case Correlation::independent: return "independent";
    case Correlation::ar1: return "ar1";
    case Correlation::duplicated: return "duplicated";
  }
  return "unknown";
}

Correlation parse_correlation(const std::string& s) {
  if (s == "independent" || s == "null") return Correlation::independent;
  if (s == "ar1") return Correlation::ar1;
  if (s == "duplicated") return Correlation::duplicated;
  throw Error(ErrorKind::config, "unknown correlation family '" + s + "'");
}

namespace {

boost::random::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  const std::uint32_t words[] = {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                                 static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                                 0x5359u};
  std::seed_seq seq(std::begin(words), std::end(words));
  return boost::random::mt19937_64(seq);
}

void standardize(Eigen::Ref<Eigen::VectorXd> v) {
  v.array() -= v.mean();
  const double sd = std::sqrt(v.squaredNorm() / static_cast<double>(std::max<Eigen::Index>(1, v.size() - 1)));
  if (sd > 0.0) v /= sd;
}

}  // namespace

SynthData generate(const SynthSpec& s) {
  if (s.n < 3 || s.p < 1) throw Error(ErrorKind::config, "synthetic design needs n >= 3 and p >= 1");
  if (s.support.size() != s.beta.size()) throw Error(ErrorKind::config, "support and beta differ in length");
  if (static_cast<int>(s.support.size()) >= s.p) throw Error(ErrorKind::config, "support must be smaller than p");
  if (!(s.noise_sd > 0.0)) throw Error(ErrorKind::config, "noise_sd must be positive");
  if (!(s.rho >= 0.0 && s.rho < 1.0)) throw Error(ErrorKind::config, "rho must lie in [0, 1)");
  for (int j : s.support)
    if (j < 0 || j >= s.p) throw Error(ErrorKind::config, "support index out of range");

  auto gen = make_rng(s.seed, 0);
  boost::random::normal_distribution<double> normal;
  const Eigen::Index n = s.n, p = s.p;
  Eigen::MatrixXd X(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    switch (s.correlation) {
      case Correlation::independent:
        for (Eigen::Index j = 0; j < p; ++j) X(i, j) = normal(gen);
        break;
      case Correlation::ar1: {
        const double innov = std::sqrt(1.0 - s.rho * s.rho);
        X(i, 0) = normal(gen);
        for (Eigen::Index j = 1; j < p; ++j) X(i, j) = s.rho * X(i, j - 1) + innov * normal(gen);
        break;
      }
      case Correlation::duplicated:
        for (Eigen::Index j = 0; j < p; j += 2) {
          X(i, j) = normal(gen);
          if (j + 1 < p) X(i, j + 1) = X(i, j) + s.duplicate_sd * normal(gen);
        }
        break;
    }
  }
  for (Eigen::Index j = 0; j < p; ++j) standardize(X.col(j));

  SynthData d;
  d.y = Eigen::VectorXd::Zero(n);
  for (std::size_t k = 0; k < s.support.size(); ++k) d.y += s.beta[k] * X.col(s.support[k]);
  if (s.groups > 0) {
    d.group.resize(static_cast<std::size_t>(n));
    std::vector<double> u(static_cast<std::size_t>(s.groups));
    for (double& v : u) v = s.group_sd * normal(gen);
    for (Eigen::Index i = 0; i < n; ++i) {
      d.group[static_cast<std::size_t>(i)] = static_cast<int>(i % s.groups);
      d.y(i) += u[static_cast<std::size_t>(i % s.groups)];
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) d.y(i) += s.noise_sd * normal(gen);
  standardize(d.y);
  d.X = std::move(X);
  d.truth = s.support;
  std::sort(d.truth.begin(), d.truth.end());
  return d;
}

SynthSpec benchmark_spec(Correlation family, int n_true, double target_corr, int n, int p) {
  SynthSpec s;
  s.n = n;
  s.p = p;
  s.correlation = family;
  if (n_true > 0) {
    const int spacing = p / n_true;
    for (int k = 0; k < n_true; ++k) {
      int j = k * spacing + spacing / 2;
      if (family == Correlation::duplicated) j -= j % 2;  // originals of each pair
      s.support.push_back(j);
      s.beta.push_back(1.0);
    }
    // Unit-variance, nearly uncorrelated actives: corr = 1 / sqrt(k + sigma^2).
    const double var = 1.0 / (target_corr * target_corr) - n_true;
    if (!(var > 0.0)) throw Error(ErrorKind::config, "target correlation too large for the number of actives");
    s.noise_sd = std::sqrt(var);
  }
  return s;
}

FdpStats score(const std::vector<int>& selected, const std::vector<int>& truth) {
  FdpStats st;
  st.selected = selected.size();
  std::size_t tp = 0;
  for (int j : selected)
    if (std::find(truth.begin(), truth.end(), j) != truth.end()) ++tp;
  st.fdp = selected.empty() ? 0.0 : static_cast<double>(selected.size() - tp) / static_cast<double>(selected.size());
  st.tp_rate = truth.empty() ? 1.0 : static_cast<double>(tp) / static_cast<double>(truth.size());
  return st;
}

std::vector<FdrRow> run_fdr_experiment(const SynthSpec& spec, const std::vector<double>& alphas,
                                       const std::vector<trex::Variant>& variants, int reps, std::uint64_t seed,
                                       const trex::Options& opt) {
  if (reps < 1) throw Error(ErrorKind::config, "repetitions must be >= 1");
  std::vector<FdrRow> rows;
  for (auto v : variants)
    for (double a : alphas) {
      FdrRow r;
      r.family = spec.support.empty() ? "null" : to_string(spec.correlation);
      r.variant = v;
      r.alpha = a;
      r.reps = reps;
      r.fdp_by_rep.assign(static_cast<std::size_t>(reps), 0.0);
      r.tpr_by_rep.assign(static_cast<std::size_t>(reps), 0.0);
      rows.push_back(std::move(r));
    }
  std::vector<double> selected_sum(rows.size(), 0.0);

  // Repetitions run sequentially; each selector parallelizes over experiments.
  for (int rep = 0; rep < reps; ++rep) {
    SynthSpec s = spec;
    s.seed = seed * 1000003ULL + static_cast<std::uint64_t>(rep);
    const SynthData d = generate(s);
    trex::Selector sel(d.X, d.y, opt.K, s.seed ^ 0x9e3779b97f4a7c15ULL, opt.threads);
    std::size_t idx = 0;
    for (auto v : variants)
      for (double a : alphas) {
        const auto res = sel.select(a, v, opt);
        const auto st = score(res.selected, d.truth);
        rows[idx].fdp_by_rep[static_cast<std::size_t>(rep)] = st.fdp;
        rows[idx].tpr_by_rep[static_cast<std::size_t>(rep)] = st.tp_rate;
        selected_sum[idx] += static_cast<double>(st.selected);
        ++idx;
      }
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto& r = rows[i];
    const double k = static_cast<double>(reps);
    r.fdr = stats::mean(r.fdp_by_rep);
    r.tpr = stats::mean(r.tpr_by_rep);
    r.fdr_se = reps > 1 ? stats::sd(r.fdp_by_rep) / std::sqrt(k) : 0.0;
    r.tpr_se = reps > 1 ? stats::sd(r.tpr_by_rep) / std::sqrt(k) : 0.0;
    r.mean_selected = selected_sum[i] / k;
  }
  return rows;
}

void write_fdr_csv(const std::string& path, const std::vector<FdrRow>& rows, const std::string& config_hash) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::config, "cannot write '" + path + "'");
  out << "# config_hash=" << config_hash << '\n';
  out << "family,variant,alpha,reps,fdr,fdr_se,tpr,tpr_se,mean_selected\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%s,%.17g,%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.family.c_str(),
                  trex::to_string(r.variant), r.alpha, r.reps, r.fdr, r.fdr_se, r.tpr, r.tpr_se, r.mean_selected);
    out << buf;
  }
}

}  // namespace physio::synth
