#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "physio/trex.hpp"

namespace physio::synth {

enum class Correlation { independent, ar1, duplicated };
const char* to_string(Correlation c);
Correlation parse_correlation(const std::string& s);

struct SynthSpec {
  int n = 240;
  int p = 164;
  std::vector<int> support;  // true-active columns
  std::vector<double> beta;  // coefficients on the unit-variance columns
  Correlation correlation = Correlation::independent;
  double rho = 0.8;            // AR(1) coefficient
  double duplicate_sd = 0.1;   // noise added to each copy in the duplicated design
  double noise_sd = 1.0;
  int groups = 0;              // random-intercept groups, 0 for none
  double group_sd = 0.0;
  std::uint64_t seed = 1;
};

struct SynthData {
  Eigen::MatrixXd X;  // standardized columns
  Eigen::VectorXd y;  // standardized
  std::vector<int> truth;
  std::vector<int> group;  // empty without groups
};

/// Duplicated design: columns come in pairs (2i, 2i+1) where 2i+1 is a noisy
/// copy of 2i. X rows are otherwise i.i.d. standard normal.
SynthData generate(const SynthSpec& spec);

/// Benchmark design with `n_true` active columns whose marginal correlation
/// with y is about `target_corr`. Active columns sit far apart (AR(1)) or on
/// the originals of duplicated pairs, so each has correlated null neighbours.
SynthSpec benchmark_spec(Correlation family, int n_true, double target_corr, int n = 240, int p = 164);

struct FdpStats {
  double fdp = 0.0;
  double tp_rate = 0.0;
  std::size_t selected = 0;
};
FdpStats score(const std::vector<int>& selected, const std::vector<int>& truth);

struct FdrRow {
  std::string family;
  trex::Variant variant = trex::Variant::da_nn;
  double alpha = 0.0;
  int reps = 0;
  double fdr = 0.0, fdr_se = 0.0;
  double tpr = 0.0, tpr_se = 0.0;
  double mean_selected = 0.0;
  std::vector<double> fdp_by_rep;  // kept for paired comparisons
  std::vector<double> tpr_by_rep;
};

/// Repetition r uses data seed (seed, r) and selector seed derived from it.
/// Selector paths are shared across alphas and variants within a repetition.
std::vector<FdrRow> run_fdr_experiment(const SynthSpec& spec, const std::vector<double>& alphas,
                                       const std::vector<trex::Variant>& variants, int reps, std::uint64_t seed,
                                       const trex::Options& opt);

void write_fdr_csv(const std::string& path, const std::vector<FdrRow>& rows, const std::string& config_hash);

}  // namespace physio::synth
