#pragma once

#include <span>
#include <vector>

#include "physio/common.hpp"
#include "physio/registry.hpp"
#include "physio/rr.hpp"
#include "physio/signal.hpp"

namespace physio::features {

struct Band {
  double lo;
  double hi;
};

struct SpectralBands {
  Band lf{0.04, 0.15};
  Band hf{0.15, 0.4};
  double total_lo = 0.003;  // HRV total power runs from here to hf.hi
  Band eda_symp{0.045, 0.25};
  double eda_total_lo = 0.008;  // EDASymp_nu normalization runs from here to eda_symp.hi
};

struct PeakOptions {
  double min_prominence = 0.01;
  double min_separation_s = 1.0;
};

struct RrTemporal {
  double mean_rr, std_rr, sdsd, rmssd, nn50, pnn50;
  double mean_der1, std_der1, mean_der2, std_der2, skew, kurt;
  NamedValues named() const;
};
RrTemporal temporal_rr(const rr::RRSeries& rr);

struct RrGeometric {
  double tri_index;
  double tinn_ms;
  NamedValues named() const;
};
/// Histogram with bin_width_s bins (1/128 s by default).
RrGeometric geometric_rr(const rr::RRSeries& rr, double bin_width_s = 1.0 / 128.0);

/// Base width, in bins, of the least-squares triangular fit to `counts`
/// anchored at the modal bin.
double tinn_bins(std::span<const double> counts);

struct RrSpectral {
  double lf_power, hf_power, lf_perc, hf_perc, lf_nu, hf_nu, lf_hf, lf_peak, hf_peak;
  NamedValues named() const;
};
RrSpectral spectral_rr(const rr::UniformSeries& u, const SpectralBands& bands = {},
                       const signal::WelchOptions& welch = {}, Diagnostics* diag = nullptr);

struct Peaks {
  std::vector<std::size_t> index;
  std::vector<double> height;
};
/// Local maxima thinned to min_separation (tallest first), then filtered by
/// topographic prominence.
Peaks find_peaks(std::span<const double> x, double fs, const PeakOptions& opt = {});

struct SclFeatures {
  double mean, median, std, mad;
  double mean_win, median_win, std_win, mad_win;
  NamedValues named() const;
};
SclFeatures scl_features(std::span<const double> scl, double fs = 50.0, double window_s = 20.0);

struct ScrFeatures {
  double mean, median, std, mad, n_peaks, max_peak, amp_sum;
  double mean_win, median_win, std_win, mad_win, amp_sum_win;
  NamedValues named() const;
};
ScrFeatures scr_features(std::span<const double> scr, double fs = 50.0, double window_s = 5.0,
                         const PeakOptions& peaks = {});

struct SmnaFeatures {
  double mean, max_peak, n_peaks, amp_sum;
  NamedValues named() const;
};
SmnaFeatures smna_features(std::span<const double> smna, double fs = 50.0,
                           const PeakOptions& peaks = {});

struct EdaSymp {
  double power, power_db, power_nu;
  double welch_power, welch_db, welch_nu;
  NamedValues named() const;
};
EdaSymp edasymp_features(std::span<const double> scl, std::span<const double> scr, double fs = 50.0,
                         const SpectralBands& bands = {}, const signal::WelchOptions& welch = {});

struct CombinedRatios {
  double edasymp_hf, edasymp_welch_hf;
  NamedValues named() const;
};
CombinedRatios combined_ratios(double edasymp, double edasymp_welch, double hf_power);

}  // namespace physio::features
