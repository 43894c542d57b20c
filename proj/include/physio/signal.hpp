#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace physio::signal {

/// One second-order section in direct form II transposed, a0 normalized to 1.
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;
};

using Sos = std::vector<Biquad>;

Sos butter_lowpass(int order, double cutoff_hz, double fs);
Sos butter_highpass(int order, double cutoff_hz, double fs);
Sos butter_bandpass(int order, double low_hz, double high_hz, double fs);

/// |H(f)| of a cascade.
double magnitude_response(const Sos& sos, double freq_hz, double fs);

std::vector<double> sosfilt(const Sos& sos, std::span<const double> x);

/// Zero-phase forward-backward filtering with odd-extension padding and
/// steady-state initial conditions, so a constant input passes unchanged
/// through a unit-DC-gain filter.
std::vector<double> sosfiltfilt(const Sos& sos, std::span<const double> x);

/// Zero-phase Butterworth low-pass (order 8, cutoff 0.8 of the new Nyquist)
/// followed by keeping every `factor`-th sample. Output length floor(n/factor).
std::vector<double> decimate(std::span<const double> x, int factor);

/// Forward DFT of a real sequence zero-padded (or truncated) to nfft points.
/// Returns the nfft/2 + 1 non-negative frequency bins.
std::vector<std::complex<double>> rfft(std::span<const double> x, std::size_t nfft);

/// Periodic Hann window of length n.
std::vector<double> hann(std::size_t n);

std::size_t next_pow2(std::size_t n);

enum class PsdMethod { periodogram, welch };

/// One-sided power spectral density; total power = integral of psd over freqs.
struct SpectralEstimate {
  std::vector<double> freqs;
  std::vector<double> psd;
  PsdMethod method = PsdMethod::periodogram;
  double resolution() const { return freqs.size() > 1 ? freqs[1] - freqs[0] : 0.0; }
};

/// Mean-detrended periodogram, rectangular unless `hann_taper`. nfft = 0 means n.
SpectralEstimate periodogram(std::span<const double> x, double fs, std::size_t nfft = 0, bool hann_taper = false);

struct WelchOptions {
  double segment_seconds = 30.0;
  double overlap = 0.75;
  /// 0 selects max(1024, next_pow2(segment length)).
  std::size_t nfft = 0;
};

/// Welch average of mean-detrended Hann-windowed segments. Throws
/// insufficient_data if the input is shorter than one segment.
SpectralEstimate welch(std::span<const double> x, double fs, const WelchOptions& opt = {});

/// Trapezoidal integral of the PSD over grid points with lo <= f <= hi.
double band_power(const SpectralEstimate& est, double lo_hz, double hi_hz);

/// Frequency of the PSD maximum within [lo, hi]; lo if the band is empty.
double peak_frequency(const SpectralEstimate& est, double lo_hz, double hi_hz);

}  // namespace physio::signal
