#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "physio/common.hpp"
#include "physio/features_linear.hpp"
#include "physio/registry.hpp"
#include "physio/rr.hpp"

namespace physio::features {

// ---------------------------------------------------------------- Poincare

inline constexpr int kMaxPoincareLag = 10;

struct LaggedPoincare {
  std::array<double, kMaxPoincareLag> sd1, sd2, sd12, rho, p_surf, sdrr;
  double auc_sd1, auc_sd2, auc_sd12, auc_rho, auc_p_surf, auc_sdrr;
  NamedValues named() const;
};
LaggedPoincare lagged_poincare(const rr::RRSeries& rr, Diagnostics* diag = nullptr);

// ---------------------------------------------------------------- fractal / DFA

struct Fractal {
  double frac_dim, hurst;
  NamedValues named() const;
};
Fractal fractal_rr(const rr::RRSeries& rr, Diagnostics* diag = nullptr);
double sevcik_dimension(std::span<const double> x);
double hurst_rs(std::span<const double> x);

struct Dfa {
  double alpha1, alpha2;
  NamedValues named() const;
};
Dfa dfa_rr(const rr::RRSeries& rr);
Dfa dfa(std::span<const double> x);
/// Root-mean-square fluctuation of the integrated series for one box size.
double dfa_fluctuation(std::span<const double> x, std::size_t box);

// ---------------------------------------------------------------- symbolic

struct Symbolic {
  double v0, v2, c1v, c3v;
  NamedValues named() const;
};
Symbolic symbolic_rr(const rr::RRSeries& rr, Diagnostics* diag = nullptr);
/// Uniform quantization into `levels` bins spanning [min, max].
std::vector<int> uniform_symbols(std::span<const double> x, int levels);
/// Percentages of 3-symbol words with 0, 1 and 2 level changes.
std::array<double, 3> word_variation_percentages(std::span<const int> symbols);

// ---------------------------------------------------------------- attention entropy

struct AttentionEntropy {
  double max_max, min_min, max_min, min_max, average;
  NamedValues named() const;
};
AttentionEntropy attention_entropy_rr(const rr::RRSeries& rr, Diagnostics* diag = nullptr);
AttentionEntropy attention_entropy(std::span<const double> x, Diagnostics* diag = nullptr);

// ---------------------------------------------------------------- RQA

struct RqaOptions {
  int embedding_dim = 10;
  int delay = 1;
  double radius_fraction = 0.15;  // of the maximum phase-space distance
  int theiler = 1;
  int min_diagonal = 2;
  int min_vertical = 2;
};

/// Delay embedding: row i is (x[i], x[i+tau], ..., x[i+(m-1)tau]).
std::vector<std::vector<double>> embed(std::span<const double> x, int m, int tau);

/// Dense binary recurrence matrix, row-major n x n.
struct RecurrenceMatrix {
  std::size_t n = 0;
  std::vector<std::uint8_t> cells;
  bool operator()(std::size_t i, std::size_t j) const { return cells[i * n + j] != 0; }
};
RecurrenceMatrix recurrence_matrix(const std::vector<std::vector<double>>& points, double radius,
                                   int theiler);

struct Rqa {
  double rec_rate, det, avg_diag, ratio, ent, lam, trap_time, max_len, mean_rec_time;
  NamedValues named() const;
};
Rqa rqa_measures(const RecurrenceMatrix& r, int min_diagonal, int min_vertical);
Rqa rqa_rr(const rr::RRSeries& rr, const RqaOptions& opt = {}, Diagnostics* diag = nullptr);

// ---------------------------------------------------------------- entropies

struct Entropies {
  double sampen, fuzzyen, disten;
  NamedValues named() const;
};
Entropies entropy_rr(const rr::RRSeries& rr, Diagnostics* diag = nullptr);
double sample_entropy(std::span<const double> x, int m, double r, Diagnostics* diag = nullptr);
double fuzzy_entropy(std::span<const double> x, int m, double r, double gradient,
                     Diagnostics* diag = nullptr);
/// Normalized (to [0, 1]) Shannon entropy of the pairwise Chebyshev distance
/// histogram of the delay embedding.
double distribution_entropy(std::span<const double> x, int m, int tau, int bins);

// ---------------------------------------------------------------- bispectrum

struct BispectrumGrid {
  std::vector<int> k1, k2;  // bin indices, 1 <= k2 <= k1
  std::vector<std::complex<double>> value;
  double df = 0.0;
};
/// Direct segment-averaged bispectrum over the non-redundant triangle with
/// both frequencies in (0, max_hz].
BispectrumGrid bispectrum(const rr::UniformSeries& u, double max_hz = 0.4,
                          double segment_s = 30.0, double overlap = 0.75);

struct Bispectral {
  double phase_entropy, mean_magnitude, mean_power, std_power;
  double norm_entropy, norm_sq_entropy, sum_log_amp, ll, lh, hh;
  NamedValues named() const;
};
Bispectral bispectral_rr(const rr::UniformSeries& u, const SpectralBands& bands = {});

// ---------------------------------------------------------------- visibility graph

using Edge = std::pair<std::size_t, std::size_t>;
/// Natural visibility edges (a < b) of y sampled at integer abscissae,
/// sorted lexicographically.
std::vector<Edge> visibility_edges(std::span<const double> y);

struct VisibilityGraph {
  double short_path_len, glob_cluster, local_cluster_mean, degree_mean;
  NamedValues named() const;
};
VisibilityGraph graph_metrics(std::size_t n, const std::vector<Edge>& edges);
VisibilityGraph visibility_rr(const rr::RRSeries& rr);

// ---------------------------------------------------------------- ComEDA

struct ComEdaOptions {
  int embedding_dim = 3;
  double max_delay_s = 2.0;
  int bins = 256;
  int ami_bins = 16;
  int max_scale = 5;
};

/// First local minimum of the histogram auto-mutual-information, capped.
int first_ami_minimum(std::span<const double> x, int max_lag, int bins);
double comeda_value(std::span<const double> x, double fs, const ComEdaOptions& opt = {},
                    Diagnostics* diag = nullptr);
/// Median of ComEDA over non-overlapping coarse-grained scales.
double multiscale_comeda(std::span<const double> x, double fs, std::span<const int> scales,
                         const ComEdaOptions& opt = {}, Diagnostics* diag = nullptr);

struct ComEda {
  double comeda, mcomeda;
  NamedValues named() const;
};
ComEda comeda(std::span<const double> scr, double fs = 50.0, const ComEdaOptions& opt = {},
              Diagnostics* diag = nullptr);

}  // namespace physio::features
