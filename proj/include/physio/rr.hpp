#pragma once

#include <span>
#include <vector>

namespace physio::rr {

/// Beat-to-beat intervals. beat_times[i] is the instant that closes
/// intervals[i], so beat_times[i+1] - beat_times[i] == intervals[i+1] / 1000.
struct RRSeries {
  std::vector<double> intervals_ms;
  std::vector<double> beat_times_s;
  std::size_t size() const { return intervals_ms.size(); }
};

struct UniformSeries {
  std::vector<double> values;
  double fs = 4.0;
  double t0 = 0.0;
  double duration() const { return values.empty() ? 0.0 : static_cast<double>(values.size()) / fs; }
};

struct DetectorOptions {
  double band_low_hz = 5.0;
  double band_high_hz = 15.0;
  double integration_window_s = 0.150;
  double refractory_s = 0.200;
  double twave_window_s = 0.360;
  double searchback_factor = 1.66;
};

/// Pan-Tompkins style QRS detector. Returns R-peak instants in seconds from
/// the first sample. Throws signal_quality if fewer than 3 beats are found.
std::vector<double> detect_r_peaks(std::span<const double> ecg, double fs,
                                   const DetectorOptions& opt = {});

/// Throws data error on non-increasing times, insufficient_data on < 3 beats.
RRSeries build_rr(std::span<const double> beat_times_s);

/// Drops every interval that differs by more than `tolerance` (fraction) from
/// the last accepted one. Off by default in the pipeline.
RRSeries filter_ectopic(const RRSeries& rr, double tolerance = 0.2);

/// Monotone piecewise-cubic Hermite interpolant (Fritsch-Carlson slopes,
/// three-point shape-preserving end slopes).
class Pchip {
 public:
  Pchip(std::vector<double> x, std::vector<double> y);
  double operator()(double t) const;

 private:
  std::vector<double> x_, y_, d_;
};

/// Samples the PCHIP interpolant of intervals vs beat_times on a uniform grid
/// from the first to the last beat.
UniformSeries resample_rr(const RRSeries& rr, double fs = 4.0);

}  // namespace physio::rr
