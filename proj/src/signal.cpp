#include "physio/signal.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>

#include <unsupported/Eigen/FFT>

#include "physio/common.hpp"

namespace physio::signal {

namespace {

using cplx = std::complex<double>;

// Analog low-pass Butterworth prototype poles with unit cutoff.
std::vector<cplx> prototype_poles(int order) {
  std::vector<cplx> poles;
  for (int k = 0; k < order; ++k) {
    const double theta = std::numbers::pi * (2.0 * k + order + 1) / (2.0 * order);
    poles.emplace_back(std::cos(theta), std::sin(theta));
  }
  return poles;
}

cplx bilinear(cplx s, double fs) { return (2.0 * fs + s) / (2.0 * fs - s); }

double prewarp(double f_hz, double fs) { return 2.0 * fs * std::tan(std::numbers::pi * f_hz / fs); }

// Group digital poles into conjugate pairs (and real leftovers) and pair each
// with zeros from `zeros`, which must have the same count as poles.
Sos assemble(std::vector<cplx> poles, std::vector<double> zeros) {
  std::vector<cplx> upper;
  std::vector<double> reals;
  for (const cplx& p : poles) {
    if (std::abs(p.imag()) < 1e-12) {
      reals.push_back(p.real());
    } else if (p.imag() > 0) {
      upper.push_back(p);
    }
  }
  Sos sos;
  std::size_t zi = 0;
  auto take_zero = [&] { return zeros.at(zi++); };
  for (const cplx& p : upper) {
    Biquad q;
    const double z1 = take_zero(), z2 = take_zero();
    q.b0 = 1.0;
    q.b1 = -(z1 + z2);
    q.b2 = z1 * z2;
    q.a1 = -2.0 * p.real();
    q.a2 = std::norm(p);
    sos.push_back(q);
  }
  for (std::size_t i = 0; i < reals.size(); i += 2) {
    Biquad q;
    if (i + 1 < reals.size()) {
      const double z1 = take_zero(), z2 = take_zero();
      q.b1 = -(z1 + z2);
      q.b2 = z1 * z2;
      q.a1 = -(reals[i] + reals[i + 1]);
      q.a2 = reals[i] * reals[i + 1];
    } else {
      const double z1 = take_zero();
      q.b1 = -z1;
      q.a1 = -reals[i];
    }
    sos.push_back(q);
  }
  return sos;
}

cplx section_response(const Biquad& q, double omega) {
  const cplx z1 = std::polar(1.0, -omega), z2 = std::polar(1.0, -2.0 * omega);
  return (q.b0 + q.b1 * z1 + q.b2 * z2) / (1.0 + q.a1 * z1 + q.a2 * z2);
}

void normalize_gain(Sos& sos, double omega) {
  cplx h = 1.0;
  for (const auto& q : sos) h *= section_response(q, omega);
  const double g = 1.0 / std::abs(h);
  sos.front().b0 *= g;
  sos.front().b1 *= g;
  sos.front().b2 *= g;
}

void check_order(int order) {
  if (order < 1) throw Error(ErrorKind::contract, "filter order must be positive");
}

// Steady-state DF2T state of every section for a unit step input.
std::vector<std::array<double, 2>> steady_state(const Sos& sos) {
  std::vector<std::array<double, 2>> zi(sos.size());
  double x = 1.0;
  for (std::size_t k = 0; k < sos.size(); ++k) {
    const auto& q = sos[k];
    const double g = (q.b0 + q.b1 + q.b2) / (1.0 + q.a1 + q.a2);
    const double y = g * x;
    const double z2 = q.b2 * x - q.a2 * y;
    const double z1 = y - q.b0 * x;
    zi[k] = {z1, z2};
    x = y;
  }
  return zi;
}

void run_sections(const Sos& sos, std::vector<double>& x,
                  std::vector<std::array<double, 2>> state) {
  for (std::size_t k = 0; k < sos.size(); ++k) {
    const auto& q = sos[k];
    double z1 = state[k][0], z2 = state[k][1];
    for (double& v : x) {
      const double in = v;
      const double out = q.b0 * in + z1;
      z1 = q.b1 * in - q.a1 * out + z2;
      z2 = q.b2 * in - q.a2 * out;
      v = out;
    }
  }
}

}  // namespace

Sos butter_lowpass(int order, double cutoff_hz, double fs) {
  check_order(order);
  const double wc = prewarp(cutoff_hz, fs);
  std::vector<cplx> poles;
  for (const cplx& p : prototype_poles(order)) poles.push_back(bilinear(wc * p, fs));
  Sos sos = assemble(poles, std::vector<double>(order, -1.0));
  normalize_gain(sos, 0.0);
  return sos;
}

Sos butter_highpass(int order, double cutoff_hz, double fs) {
  check_order(order);
  const double wc = prewarp(cutoff_hz, fs);
  std::vector<cplx> poles;
  for (const cplx& p : prototype_poles(order)) poles.push_back(bilinear(wc / p, fs));
  Sos sos = assemble(poles, std::vector<double>(order, 1.0));
  normalize_gain(sos, std::numbers::pi);
  return sos;
}

Sos butter_bandpass(int order, double low_hz, double high_hz, double fs) {
  check_order(order);
  if (!(low_hz > 0.0 && high_hz > low_hz && high_hz < fs / 2.0))
    throw Error(ErrorKind::contract, "band-pass edges must satisfy 0 < low < high < fs/2");
  const double wl = prewarp(low_hz, fs), wh = prewarp(high_hz, fs);
  const double bw = wh - wl, w0sq = wl * wh;
  std::vector<cplx> poles;
  for (const cplx& p : prototype_poles(order)) {
    // s^2 - p*bw*s + w0^2 = 0
    const cplx b = -p * bw;
    const cplx disc = std::sqrt(b * b - 4.0 * w0sq);
    poles.push_back(bilinear((-b + disc) / 2.0, fs));
    poles.push_back(bilinear((-b - disc) / 2.0, fs));
  }
  std::vector<double> zeros;
  for (int k = 0; k < order; ++k) {
    zeros.push_back(1.0);
    zeros.push_back(-1.0);
  }
  Sos sos = assemble(poles, zeros);
  const double center = 2.0 * std::atan(std::sqrt(w0sq) / (2.0 * fs));
  normalize_gain(sos, center);
  return sos;
}

double magnitude_response(const Sos& sos, double freq_hz, double fs) {
  const double omega = 2.0 * std::numbers::pi * freq_hz / fs;
  cplx h = 1.0;
  for (const auto& q : sos) h *= section_response(q, omega);
  return std::abs(h);
}

std::vector<double> sosfilt(const Sos& sos, std::span<const double> x) {
  std::vector<double> y(x.begin(), x.end());
  run_sections(sos, y, std::vector<std::array<double, 2>>(sos.size(), {0.0, 0.0}));
  return y;
}

std::vector<double> sosfiltfilt(const Sos& sos, std::span<const double> x) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  const std::size_t padlen = std::min<std::size_t>(n - 1, 3 * (2 * sos.size() + 1) * 4);
  std::vector<double> ext;
  ext.reserve(n + 2 * padlen);
  for (std::size_t i = padlen; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= padlen; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  const auto zi = steady_state(sos);
  auto scaled = [&](double v) {
    auto s = zi;
    for (auto& st : s) {
      st[0] *= v;
      st[1] *= v;
    }
    return s;
  };
  run_sections(sos, ext, scaled(ext.front()));
  std::reverse(ext.begin(), ext.end());
  run_sections(sos, ext, scaled(ext.front()));
  std::reverse(ext.begin(), ext.end());
  return {ext.begin() + static_cast<std::ptrdiff_t>(padlen),
          ext.begin() + static_cast<std::ptrdiff_t>(padlen + n)};
}

std::vector<double> decimate(std::span<const double> x, int factor) {
  if (factor < 1) throw Error(ErrorKind::contract, "decimation factor must be >= 1");
  if (factor == 1) return {x.begin(), x.end()};
  // Frequencies are expressed relative to fs = 1.
  const double cutoff = 0.8 * (0.5 / factor);
  const Sos lp = butter_lowpass(8, cutoff, 1.0);
  const auto filtered = sosfiltfilt(lp, x);
  const std::size_t m = x.size() / static_cast<std::size_t>(factor);
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) out[i] = filtered[i * static_cast<std::size_t>(factor)];
  return out;
}

std::vector<std::complex<double>> rfft(std::span<const double> x, std::size_t nfft) {
  std::vector<double> buf(nfft, 0.0);
  std::copy_n(x.begin(), std::min(nfft, x.size()), buf.begin());
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<std::complex<double>> out;
  fft.fwd(out, buf);
  out.resize(nfft / 2 + 1);
  return out;
}

std::vector<double> hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

namespace {

// Accumulates |X|^2 of one windowed, mean-removed segment into acc.
void accumulate_segment(std::span<const double> seg, std::span<const double> window,
                        std::size_t nfft, std::vector<double>& acc) {
  const double m = stats::mean(seg);
  std::vector<double> buf(seg.size());
  for (std::size_t i = 0; i < seg.size(); ++i) buf[i] = (seg[i] - m) * window[i];
  const auto spec = rfft(buf, nfft);
  for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += std::norm(spec[k]);
}

SpectralEstimate finish(std::vector<double> acc, double fs, std::size_t nfft, double scale,
                        PsdMethod method) {
  SpectralEstimate est;
  est.method = method;
  est.freqs.resize(acc.size());
  est.psd.resize(acc.size());
  for (std::size_t k = 0; k < acc.size(); ++k) {
    est.freqs[k] = fs * static_cast<double>(k) / static_cast<double>(nfft);
    double v = acc[k] * scale;
    const bool nyquist = (nfft % 2 == 0) && k == nfft / 2;
    if (k != 0 && !nyquist) v *= 2.0;
    est.psd[k] = v;
  }
  return est;
}

}  // namespace

SpectralEstimate periodogram(std::span<const double> x, double fs, std::size_t nfft, bool hann_taper) {
  if (x.empty()) throw Error(ErrorKind::insufficient_data, "periodogram of empty signal");
  if (nfft == 0) nfft = x.size();
  std::vector<double> acc(nfft / 2 + 1, 0.0);
  const std::vector<double> window = hann_taper && x.size() > 1 ? hann(x.size()) : std::vector<double>(x.size(), 1.0);
  double wss = 0.0;
  for (double w : window) wss += w * w;
  accumulate_segment(x, window, nfft, acc);
  return finish(std::move(acc), fs, nfft, 1.0 / (fs * wss), PsdMethod::periodogram);
}

SpectralEstimate welch(std::span<const double> x, double fs, const WelchOptions& opt) {
  const auto seg_len = static_cast<std::size_t>(std::lround(opt.segment_seconds * fs));
  if (seg_len < 2 || x.size() < seg_len)
    throw Error(ErrorKind::insufficient_data, "signal shorter than one Welch segment");
  const std::size_t step = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(static_cast<double>(seg_len) * (1.0 - opt.overlap))));
  const std::size_t nfft = opt.nfft != 0 ? opt.nfft : std::max<std::size_t>(1024, next_pow2(seg_len));
  const auto window = hann(seg_len);
  double wss = 0.0;
  for (double w : window) wss += w * w;
  std::vector<double> acc(nfft / 2 + 1, 0.0);
  std::size_t count = 0;
  for (std::size_t start = 0; start + seg_len <= x.size(); start += step, ++count)
    accumulate_segment(x.subspan(start, seg_len), window, nfft, acc);
  return finish(std::move(acc), fs, nfft, 1.0 / (fs * wss * static_cast<double>(count)),
                PsdMethod::welch);
}

double band_power(const SpectralEstimate& est, double lo_hz, double hi_hz) {
  std::vector<double> f, p;
  for (std::size_t k = 0; k < est.freqs.size(); ++k) {
    if (est.freqs[k] >= lo_hz && est.freqs[k] <= hi_hz) {
      f.push_back(est.freqs[k]);
      p.push_back(est.psd[k]);
    }
  }
  return stats::trapezoid(f, p);
}

double peak_frequency(const SpectralEstimate& est, double lo_hz, double hi_hz) {
  double best_f = lo_hz, best_p = -1.0;
  for (std::size_t k = 0; k < est.freqs.size(); ++k) {
    if (est.freqs[k] >= lo_hz && est.freqs[k] <= hi_hz && est.psd[k] > best_p) {
      best_p = est.psd[k];
      best_f = est.freqs[k];
    }
  }
  return best_f;
}

}  // namespace physio::signal
