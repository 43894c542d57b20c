#include "physio/features_linear.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace physio::features {

NamedValues RrTemporal::named() const {
  return {{"meanRR", mean_rr},     {"stdRR", std_rr},       {"SDSD", sdsd},
          {"RMSSD", rmssd},        {"NN50", nn50},          {"pNN50", pnn50},
          {"meanDER1", mean_der1}, {"stdDER1", std_der1},   {"meanDER2", mean_der2},
          {"stdDER2", std_der2},   {"SkewRR", skew},        {"KurtRR", kurt}};
}

RrTemporal temporal_rr(const rr::RRSeries& series) {
  const auto& x = series.intervals_ms;
  if (x.size() < 3) throw Error(ErrorKind::insufficient_data, "temporal RR features need n >= 3");
  const auto d1 = stats::diff(x);
  const auto d2 = stats::diff(d1);
  RrTemporal t{};
  t.mean_rr = stats::mean(x);
  t.std_rr = stats::sd(x);
  t.sdsd = stats::sd(d1);
  double ss = 0.0;
  int nn50 = 0;
  for (double d : d1) {
    ss += d * d;
    if (std::abs(d) > 50.0) ++nn50;
  }
  t.rmssd = std::sqrt(ss / static_cast<double>(d1.size()));
  t.nn50 = nn50;
  t.pnn50 = 100.0 * nn50 / static_cast<double>(d1.size());
  t.mean_der1 = stats::mean(d1);
  t.std_der1 = stats::sd(d1);
  t.mean_der2 = stats::mean(d2);
  t.std_der2 = stats::sd(d2);
  t.skew = stats::skewness(x);
  t.kurt = stats::kurtosis(x);
  return t;
}

NamedValues RrGeometric::named() const { return {{"TriRR", tri_index}, {"TINN", tinn_ms}}; }

double tinn_bins(std::span<const double> counts) {
  // One empty bin on each side lets the triangle reach zero outside the data.
  std::vector<double> c;
  c.reserve(counts.size() + 2);
  c.push_back(0.0);
  c.insert(c.end(), counts.begin(), counts.end());
  c.push_back(0.0);
  const std::size_t nb = c.size();
  const auto mode_it = std::max_element(c.begin(), c.end());
  const auto mode = static_cast<std::size_t>(mode_it - c.begin());
  const double peak = *mode_it;
  double best_err = std::numeric_limits<double>::infinity();
  std::size_t best_base = 0;
  for (std::size_t lo = 0; lo <= mode; ++lo) {
    for (std::size_t hi = mode; hi < nb; ++hi) {
      double err = 0.0;
      for (std::size_t k = 0; k < nb; ++k) {
        double q = 0.0;
        if (k == mode) {
          q = peak;
        } else if (k > lo && k < mode) {
          q = peak * static_cast<double>(k - lo) / static_cast<double>(mode - lo);
        } else if (k > mode && k < hi) {
          q = peak * static_cast<double>(hi - k) / static_cast<double>(hi - mode);
        }
        err += (c[k] - q) * (c[k] - q);
      }
      const std::size_t base = hi - lo;
      if (err < best_err - 1e-12 || (std::abs(err - best_err) <= 1e-12 && base < best_base)) {
        best_err = err;
        best_base = base;
      }
    }
  }
  return static_cast<double>(best_base);
}

RrGeometric geometric_rr(const rr::RRSeries& series, double bin_width_s) {
  const auto& x = series.intervals_ms;
  if (x.size() < 20) throw Error(ErrorKind::insufficient_data, "geometric RR features need n >= 20");
  const double w = bin_width_s * 1000.0;
  const double lo = *std::min_element(x.begin(), x.end());
  const double hi = *std::max_element(x.begin(), x.end());
  const auto nbins = static_cast<std::size_t>(std::floor((hi - lo) / w)) + 1;
  std::vector<double> counts(nbins, 0.0);
  for (double v : x) counts[std::min(nbins - 1, static_cast<std::size_t>(std::floor((v - lo) / w)))] += 1.0;
  RrGeometric g{};
  g.tri_index = static_cast<double>(x.size()) / *std::max_element(counts.begin(), counts.end());
  g.tinn_ms = tinn_bins(counts) * w;
  return g;
}

NamedValues RrSpectral::named() const {
  return {{"LF_power", lf_power}, {"HF_power", hf_power}, {"LF_perc", lf_perc},
          {"HF_perc", hf_perc},   {"LF_nu", lf_nu},       {"HF_nu", hf_nu},
          {"LF/HF", lf_hf},       {"LF_peak", lf_peak},   {"HF_peak", hf_peak}};
}

RrSpectral spectral_rr(const rr::UniformSeries& u, const SpectralBands& bands,
                       const signal::WelchOptions& welch, Diagnostics* diag) {
  if (u.values.size() < 8) throw Error(ErrorKind::insufficient_data, "RR spectrum needs a longer series");
  signal::SpectralEstimate est;
  if (u.duration() < welch.segment_seconds) {
    warn(diag, "RR series shorter than one Welch segment; using a periodogram");
    est = signal::periodogram(u.values, u.fs, std::max<std::size_t>(1024, signal::next_pow2(u.values.size())));
  } else {
    est = signal::welch(u.values, u.fs, welch);
  }
  RrSpectral s{};
  s.lf_power = signal::band_power(est, bands.lf.lo, bands.lf.hi);
  s.hf_power = signal::band_power(est, bands.hf.lo, bands.hf.hi);
  const double total = signal::band_power(est, bands.total_lo, bands.hf.hi);
  s.lf_perc = total > 0.0 ? 100.0 * s.lf_power / total : 0.0;
  s.hf_perc = total > 0.0 ? 100.0 * s.hf_power / total : 0.0;
  const double lfhf = s.lf_power + s.hf_power;
  s.lf_nu = lfhf > 0.0 ? s.lf_power / lfhf : 0.0;
  s.hf_nu = lfhf > 0.0 ? s.hf_power / lfhf : 0.0;
  if (s.hf_power > 0.0) {
    s.lf_hf = s.lf_power / s.hf_power;
  } else {
    warn(diag, "zero HF power; LF/HF set to 0");
    s.lf_hf = 0.0;
  }
  s.lf_peak = signal::peak_frequency(est, bands.lf.lo, bands.lf.hi);
  s.hf_peak = signal::peak_frequency(est, bands.hf.lo, bands.hf.hi);
  return s;
}

Peaks find_peaks(std::span<const double> x, double fs, const PeakOptions& opt) {
  const std::size_t n = x.size();
  std::vector<std::size_t> cand;
  // Local maxima; a flat top reports its middle sample.
  std::size_t i = 1;
  while (i + 1 < n) {
    if (x[i - 1] < x[i]) {
      std::size_t ahead = i + 1;
      while (ahead + 1 < n && x[ahead] == x[i]) ++ahead;
      if (x[ahead] < x[i]) {
        cand.push_back((i + ahead - 1) / 2);
        i = ahead;
        continue;
      }
    }
    ++i;
  }

  const auto distance = static_cast<std::size_t>(std::lround(opt.min_separation_s * fs));
  std::vector<bool> keep(cand.size(), true);
  if (distance > 1 && cand.size() > 1) {
    std::vector<std::size_t> order(cand.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return x[cand[a]] > x[cand[b]]; });
    for (std::size_t o : order) {
      if (!keep[o]) continue;
      for (std::size_t j = o; j-- > 0 && cand[o] - cand[j] < distance;) keep[j] = false;
      for (std::size_t j = o + 1; j < cand.size() && cand[j] - cand[o] < distance; ++j) keep[j] = false;
    }
  }

  Peaks out;
  for (std::size_t k = 0; k < cand.size(); ++k) {
    if (!keep[k]) continue;
    const std::size_t p = cand[k];
    double left_min = x[p];
    for (std::size_t j = p; j-- > 0;) {
      if (x[j] > x[p]) break;
      left_min = std::min(left_min, x[j]);
    }
    double right_min = x[p];
    for (std::size_t j = p + 1; j < n; ++j) {
      if (x[j] > x[p]) break;
      right_min = std::min(right_min, x[j]);
    }
    const double prominence = x[p] - std::max(left_min, right_min);
    if (prominence >= opt.min_prominence) {
      out.index.push_back(p);
      out.height.push_back(x[p]);
    }
  }
  return out;
}

namespace {

struct FourStats {
  double mean, median, std, mad;
};

FourStats four_stats(std::span<const double> x) {
  return {stats::mean(x), stats::median(x), stats::sd(x), stats::mad(x)};
}

// Mean over non-overlapping segments of each statistic; trailing partial
// segment discarded.
FourStats windowed_stats(std::span<const double> x, std::size_t seg) {
  const std::size_t count = x.size() / seg;
  FourStats acc{0, 0, 0, 0};
  for (std::size_t k = 0; k < count; ++k) {
    const auto s = four_stats(x.subspan(k * seg, seg));
    acc.mean += s.mean;
    acc.median += s.median;
    acc.std += s.std;
    acc.mad += s.mad;
  }
  const double c = static_cast<double>(count);
  return {acc.mean / c, acc.median / c, acc.std / c, acc.mad / c};
}

std::size_t segment_length(std::size_t n, double fs, double window_s, const char* what) {
  const auto seg = static_cast<std::size_t>(std::lround(window_s * fs));
  if (seg == 0 || n < 2 * seg)
    throw Error(ErrorKind::insufficient_data, std::string(what) + " needs at least two windowed segments");
  return seg;
}

}  // namespace

NamedValues SclFeatures::named() const {
  return {{"SCL_mean", mean},         {"SCL_median", median},    {"SCL_std", std},
          {"SCL_MAD", mad},           {"SCL_meanWin", mean_win}, {"SCL_medWin", median_win},
          {"SCL_stdWin", std_win},    {"SCL_MADWin", mad_win}};
}

SclFeatures scl_features(std::span<const double> scl, double fs, double window_s) {
  const auto seg = segment_length(scl.size(), fs, window_s, "SCL features");
  const auto whole = four_stats(scl);
  const auto win = windowed_stats(scl, seg);
  return {whole.mean, whole.median, whole.std, whole.mad, win.mean, win.median, win.std, win.mad};
}

NamedValues ScrFeatures::named() const {
  return {{"SCR_mean", mean},          {"SCR_median", median},      {"SCR_std", std},
          {"SCR_MAD", mad},            {"SCR_Npeaks", n_peaks},     {"SCR_MaxPeak", max_peak},
          {"SCR_AmpSum", amp_sum},     {"SCR_meanWin", mean_win},   {"SCR_medWin", median_win},
          {"SCR_stdWin", std_win},     {"SCR_MADWin", mad_win},     {"SCR_AmpSumWin", amp_sum_win}};
}

ScrFeatures scr_features(std::span<const double> scr, double fs, double window_s,
                         const PeakOptions& peak_opt) {
  const auto seg = segment_length(scr.size(), fs, window_s, "SCR features");
  const auto whole = four_stats(scr);
  const auto win = windowed_stats(scr, seg);
  const auto peaks = find_peaks(scr, fs, peak_opt);
  ScrFeatures f{};
  f.mean = whole.mean;
  f.median = whole.median;
  f.std = whole.std;
  f.mad = whole.mad;
  f.n_peaks = static_cast<double>(peaks.index.size());
  f.max_peak = peaks.height.empty() ? 0.0 : *std::max_element(peaks.height.begin(), peaks.height.end());
  f.amp_sum = std::accumulate(peaks.height.begin(), peaks.height.end(), 0.0);
  f.mean_win = win.mean;
  f.median_win = win.median;
  f.std_win = win.std;
  f.mad_win = win.mad;
  const std::size_t count = scr.size() / seg;
  std::vector<double> per_segment(count, 0.0);
  for (std::size_t k = 0; k < peaks.index.size(); ++k) {
    const std::size_t s = peaks.index[k] / seg;
    if (s < count) per_segment[s] += peaks.height[k];
  }
  f.amp_sum_win = stats::mean(per_segment);
  return f;
}

NamedValues SmnaFeatures::named() const {
  return {{"SMNA_mean", mean}, {"SMNA_MaxPeak", max_peak}, {"SMNA_Npeaks", n_peaks}, {"SMNA_AmpSum", amp_sum}};
}

SmnaFeatures smna_features(std::span<const double> smna, double fs, const PeakOptions& peak_opt) {
  if (smna.size() < 2) throw Error(ErrorKind::insufficient_data, "SMNA features need a non-trivial signal");
  const auto peaks = find_peaks(smna, fs, peak_opt);
  SmnaFeatures f{};
  f.mean = stats::mean(smna);
  f.n_peaks = static_cast<double>(peaks.index.size());
  f.max_peak = peaks.height.empty() ? 0.0 : *std::max_element(peaks.height.begin(), peaks.height.end());
  f.amp_sum = std::accumulate(peaks.height.begin(), peaks.height.end(), 0.0);
  return f;
}

NamedValues EdaSymp::named() const {
  return {{"EDASymp", power},          {"EDASymp_db", power_db},         {"EDASymp_nu", power_nu},
          {"EDASymp_Welch", welch_power}, {"EDASymp_db_Welch", welch_db}, {"EDASymp_nu_Welch", welch_nu}};
}

EdaSymp edasymp_features(std::span<const double> scl, std::span<const double> scr, double fs,
                         const SpectralBands& bands, const signal::WelchOptions& welch) {
  if (scl.size() != scr.size() || scl.empty())
    throw Error(ErrorKind::contract, "EDASymp needs equal-length tonic and phasic components");
  std::vector<double> sum(scl.size());
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = scl[i] + scr[i];

  auto triplet = [&](const signal::SpectralEstimate& est, double& power, double& db, double& nu) {
    power = signal::band_power(est, bands.eda_symp.lo, bands.eda_symp.hi);
    const double total = signal::band_power(est, bands.eda_total_lo, bands.eda_symp.hi);
    if (!(total > 0.0))
      throw Error(ErrorKind::degenerate_signal, "EDA spectrum has zero total power");
    db = 10.0 * std::log10(power);
    nu = power / total;
  };
  EdaSymp e{};
  // Tapered: a rectangular window leaks about 1.5% of an in-band tone below 0.045 Hz.
  triplet(signal::periodogram(sum, fs, 0, true), e.power, e.power_db, e.power_nu);
  triplet(signal::welch(sum, fs, welch), e.welch_power, e.welch_db, e.welch_nu);
  return e;
}

NamedValues CombinedRatios::named() const {
  return {{"EDASymp/HF", edasymp_hf}, {"EDASymp_Welch/HF", edasymp_welch_hf}};
}

CombinedRatios combined_ratios(double edasymp, double edasymp_welch, double hf_power) {
  if (!(hf_power > 0.0)) throw Error(ErrorKind::degenerate_signal, "HF power must be positive for EDASymp/HF");
  return {edasymp / hf_power, edasymp_welch / hf_power};
}

}  // namespace physio::features
