#include "physio/rr.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "physio/common.hpp"
#include "physio/signal.hpp"

namespace physio::rr {

namespace {

std::vector<double> five_point_derivative(std::span<const double> x, double fs) {
  const std::size_t n = x.size();
  std::vector<double> d(n, 0.0);
  for (std::size_t i = 2; i + 2 < n; ++i)
    d[i] = (2.0 * x[i + 2] + x[i + 1] - x[i - 1] - 2.0 * x[i - 2]) * fs / 8.0;
  return d;
}

std::vector<double> centered_moving_average(std::span<const double> x, std::size_t width) {
  const std::size_t n = x.size();
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i];
  std::vector<double> out(n);
  const std::size_t half = width / 2;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(n, i + half + 1);
    out[i] = (prefix[hi] - prefix[lo]) / static_cast<double>(width);
  }
  return out;
}

struct Candidate {
  std::size_t index;
  double height;
};

double max_abs_in(std::span<const double> x, std::size_t center, std::size_t half) {
  const std::size_t lo = center >= half ? center - half : 0;
  const std::size_t hi = std::min(x.size(), center + half + 1);
  double m = 0.0;
  for (std::size_t i = lo; i < hi; ++i) m = std::max(m, std::abs(x[i]));
  return m;
}

}  // namespace

std::vector<double> detect_r_peaks(std::span<const double> ecg, double fs,
                                   const DetectorOptions& opt) {
  if (fs < 100.0) throw Error(ErrorKind::contract, "R-peak detection needs fs >= 100 Hz");
  if (static_cast<double>(ecg.size()) < 2.0 * fs)
    throw Error(ErrorKind::insufficient_data, "R-peak detection needs at least 2 s of ECG");

  const auto band = signal::butter_bandpass(2, opt.band_low_hz, opt.band_high_hz, fs);
  const auto filtered = signal::sosfiltfilt(band, ecg);
  const auto slope = five_point_derivative(filtered, fs);
  std::vector<double> squared(slope.size());
  std::transform(slope.begin(), slope.end(), squared.begin(), [](double v) { return v * v; });
  const auto width = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(opt.integration_window_s * fs)));
  const auto mwi = centered_moving_average(squared, width);

  const auto refractory = static_cast<std::size_t>(std::lround(opt.refractory_s * fs));
  const auto twave = static_cast<std::size_t>(std::lround(opt.twave_window_s * fs));
  const auto slope_half = static_cast<std::size_t>(std::lround(0.075 * fs));

  // Local maxima of the integrated signal, thinned to one per refractory span.
  std::vector<Candidate> candidates;
  for (std::size_t i = 1; i + 1 < mwi.size(); ++i) {
    if (mwi[i] > mwi[i - 1] && mwi[i] >= mwi[i + 1] && mwi[i] > 0.0) {
      if (!candidates.empty() && i - candidates.back().index < refractory) {
        if (mwi[i] > candidates.back().height) candidates.back() = {i, mwi[i]};
        continue;
      }
      candidates.push_back({i, mwi[i]});
    }
  }

  const auto learn = std::min(mwi.size(), static_cast<std::size_t>(2.0 * fs));
  const double learn_max = *std::max_element(mwi.begin(), mwi.begin() + static_cast<std::ptrdiff_t>(learn));
  const double learn_mean = stats::mean(std::span<const double>(mwi).first(learn));
  double spki = 0.25 * learn_max;
  double npki = 0.5 * learn_mean;

  std::vector<std::size_t> qrs;
  std::vector<double> qrs_slopes;
  std::vector<Candidate> noise_since_last;
  auto threshold1 = [&] { return npki + 0.25 * (spki - npki); };

  auto accept = [&](const Candidate& c, double weight) {
    qrs.push_back(c.index);
    qrs_slopes.push_back(max_abs_in(slope, c.index, slope_half));
    spki = weight * c.height + (1.0 - weight) * spki;
    noise_since_last.clear();
  };

  auto mean_recent_rr = [&]() -> double {
    const std::size_t k = std::min<std::size_t>(8, qrs.size() - 1);
    return static_cast<double>(qrs.back() - qrs[qrs.size() - 1 - k]) / static_cast<double>(k);
  };

  for (const Candidate& c : candidates) {
    if (!qrs.empty() && c.index - qrs.back() < refractory) continue;

    // Search back for a missed beat before handling this candidate.
    if (qrs.size() >= 2) {
      const double limit = opt.searchback_factor * mean_recent_rr();
      if (static_cast<double>(c.index - qrs.back()) > limit && !noise_since_last.empty()) {
        const double t2 = 0.5 * threshold1();
        auto best = std::max_element(noise_since_last.begin(), noise_since_last.end(),
                                     [](const Candidate& a, const Candidate& b) { return a.height < b.height; });
        if (best->height > t2) accept(*best, 0.25);
      }
      if (!qrs.empty() && c.index - qrs.back() < refractory) continue;
    }

    if (c.height > threshold1()) {
      if (!qrs.empty() && c.index - qrs.back() < twave) {
        const double s = max_abs_in(slope, c.index, slope_half);
        if (s < 0.5 * qrs_slopes.back()) {
          npki = 0.125 * c.height + 0.875 * npki;
          continue;
        }
      }
      accept(c, 0.125);
    } else {
      npki = 0.125 * c.height + 0.875 * npki;
      noise_since_last.push_back(c);
    }
  }

  // Refine each detection to the extremum of the band-limited ECG.
  const auto hp = signal::butter_highpass(2, 0.5, fs);
  const auto baseline_free = signal::sosfiltfilt(hp, ecg);
  const auto search = static_cast<std::size_t>(std::lround(0.075 * fs));
  std::vector<double> times;
  std::size_t last = 0;
  for (std::size_t idx : qrs) {
    const std::size_t lo = idx >= search ? idx - search : 0;
    const std::size_t hi = std::min(baseline_free.size(), idx + search + 1);
    const auto it = std::max_element(baseline_free.begin() + static_cast<std::ptrdiff_t>(lo),
                                     baseline_free.begin() + static_cast<std::ptrdiff_t>(hi));
    const auto peak = static_cast<std::size_t>(it - baseline_free.begin());
    if (!times.empty() && peak - last < refractory) continue;
    times.push_back(static_cast<double>(peak) / fs);
    last = peak;
  }
  if (times.size() < 3)
    throw Error(ErrorKind::signal_quality,
                "only " + std::to_string(times.size()) + " R-peaks detected");
  return times;
}

RRSeries build_rr(std::span<const double> beat_times_s) {
  if (beat_times_s.size() < 3)
    throw Error(ErrorKind::insufficient_data, "RR series needs at least 3 beats");
  RRSeries rr;
  for (std::size_t i = 1; i < beat_times_s.size(); ++i) {
    const double gap = beat_times_s[i] - beat_times_s[i - 1];
    if (!(gap > 0.0))
      throw Error(ErrorKind::data, "beat times not strictly increasing at index " + std::to_string(i));
    rr.intervals_ms.push_back(gap * 1000.0);
    rr.beat_times_s.push_back(beat_times_s[i]);
  }
  return rr;
}

RRSeries filter_ectopic(const RRSeries& rr, double tolerance) {
  RRSeries out;
  if (rr.size() == 0) return out;
  out.intervals_ms.push_back(rr.intervals_ms[0]);
  out.beat_times_s.push_back(rr.beat_times_s[0]);
  for (std::size_t i = 1; i < rr.size(); ++i) {
    const double prev = out.intervals_ms.back();
    if (std::abs(rr.intervals_ms[i] - prev) <= tolerance * prev) {
      out.intervals_ms.push_back(rr.intervals_ms[i]);
      out.beat_times_s.push_back(rr.beat_times_s[i]);
    }
  }
  return out;
}

Pchip::Pchip(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
  const std::size_t n = x_.size();
  if (n < 2 || y_.size() != n) throw Error(ErrorKind::contract, "PCHIP needs >= 2 matching knots");
  std::vector<double> h(n - 1), delta(n - 1);
  for (std::size_t k = 0; k + 1 < n; ++k) {
    h[k] = x_[k + 1] - x_[k];
    if (!(h[k] > 0.0)) throw Error(ErrorKind::data, "PCHIP knots must be strictly increasing");
    delta[k] = (y_[k + 1] - y_[k]) / h[k];
  }
  d_.assign(n, 0.0);
  if (n == 2) {
    d_[0] = d_[1] = delta[0];
    return;
  }
  for (std::size_t k = 1; k + 1 < n; ++k) {
    if (delta[k - 1] * delta[k] <= 0.0) continue;
    const double w1 = 2.0 * h[k] + h[k - 1];
    const double w2 = h[k] + 2.0 * h[k - 1];
    d_[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
  }
  auto edge = [](double h0, double h1, double m0, double m1) {
    double d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if (std::signbit(d) != std::signbit(m0) || m0 == 0.0) {
      d = 0.0;
    } else if (std::signbit(m0) != std::signbit(m1) && std::abs(d) > 3.0 * std::abs(m0)) {
      d = 3.0 * m0;
    }
    return d;
  };
  d_[0] = edge(h[0], h[1], delta[0], delta[1]);
  d_[n - 1] = edge(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
}

double Pchip::operator()(double t) const {
  const std::size_t n = x_.size();
  std::size_t k;
  if (t <= x_.front()) {
    k = 0;
  } else if (t >= x_.back()) {
    k = n - 2;
  } else {
    k = static_cast<std::size_t>(std::upper_bound(x_.begin(), x_.end(), t) - x_.begin()) - 1;
  }
  const double h = x_[k + 1] - x_[k];
  const double s = (t - x_[k]) / h;
  const double s2 = s * s, s3 = s2 * s;
  const double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s;
  const double h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
  return h00 * y_[k] + h10 * h * d_[k] + h01 * y_[k + 1] + h11 * h * d_[k + 1];
}

UniformSeries resample_rr(const RRSeries& rr, double fs) {
  if (rr.size() < 2) throw Error(ErrorKind::insufficient_data, "resampling needs >= 2 intervals");
  const double t0 = rr.beat_times_s.front(), t1 = rr.beat_times_s.back();
  if (t1 - t0 < 2.0 / fs) throw Error(ErrorKind::data, "RR span shorter than two grid steps");
  const Pchip interp(rr.beat_times_s, rr.intervals_ms);
  UniformSeries u;
  u.fs = fs;
  u.t0 = t0;
  const auto count = static_cast<std::size_t>(std::floor((t1 - t0) * fs + 1e-9)) + 1;
  u.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) u.values[i] = interp(t0 + static_cast<double>(i) / fs);
  return u;
}

}  // namespace physio::rr
