#include "doctest.h"

#include <cmath>
#include <numbers>

#include "physio/common.hpp"
#include "physio/eda.hpp"
#include "physio/signal.hpp"
#include "test_util.hpp"

using namespace physio;
using namespace physio::signal;
constexpr double kPi = std::numbers::pi;

namespace {

std::vector<double> sine(double f, double fs, double seconds, double amp = 1.0, double phase = 0.0,
                         double offset = 0.0) {
  const auto n = static_cast<std::size_t>(std::lround(seconds * fs));
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = offset + amp * std::sin(2 * kPi * f * static_cast<double>(i) / fs + phase);
  return x;
}

double rms(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s / static_cast<double>(x.size()));
}

}  // namespace

TEST_CASE("Butterworth designs have the textbook magnitude") {
  const auto lp = butter_lowpass(4, 10.0, 200.0);
  CHECK(magnitude_response(lp, 0.0, 200.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(magnitude_response(lp, 10.0, 200.0) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-9));
  const auto hp = butter_highpass(2, 5.0, 100.0);
  CHECK(magnitude_response(hp, 5.0, 100.0) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-9));
  CHECK(magnitude_response(hp, 50.0, 100.0) == doctest::Approx(1.0).epsilon(1e-9));
  const auto bp = butter_bandpass(2, 5.0, 15.0, 200.0);
  CHECK(magnitude_response(bp, 5.0, 200.0) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-6));
  CHECK(magnitude_response(bp, 15.0, 200.0) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-6));
  CHECK(magnitude_response(bp, 0.0, 200.0) < 1e-9);
}

TEST_CASE("zero-phase filtering passes a constant and keeps phase") {
  const auto lp = butter_lowpass(8, 20.0, 200.0);
  const std::vector<double> c(500, 3.25);
  for (double v : sosfiltfilt(lp, c)) CHECK(v == doctest::Approx(3.25).epsilon(1e-9));

  const auto x = sine(2.0, 200.0, 10.0);
  const auto y = sosfiltfilt(lp, x);
  double err = 0.0;
  for (std::size_t i = 200; i < x.size() - 200; ++i) err = std::max(err, std::abs(y[i] - x[i]));
  CHECK(err < 1e-6);
}

TEST_CASE("decimation keeps a 1 Hz tone") {
  const auto x = sine(1.0, 1000.0, 10.0, 0.3, 0.4, 5.0);
  const auto y = eda::normalize_and_decimate(x, 1000.0);
  REQUIRE(y.size() == 500);
  // z-scored input has amplitude sqrt(2); compare away from the edges
  const double amp = std::sqrt(2.0) * rms(std::span(y).subspan(50, 400));
  CHECK(amp == doctest::Approx(std::sqrt(2.0)).epsilon(0.01));
}

TEST_CASE("decimation rejects aliasing white noise by 40 dB") {
  // Effective response of 1000 -> 50 Hz, measured tone by tone; white noise
  // power folded from above 25 Hz is the integral of its square there.
  auto gain = [](double f) {
    auto x = sine(f, 1000.0, 10.0, 1.0, 0.3);
    x[0] += 1e-9;  // z-scoring needs a nonzero spread, which a tone has anyway
    const auto y = eda::normalize_and_decimate(x, 1000.0);
    return rms(std::span(y).subspan(50, y.size() - 100));  // input rms is 1 after z-scoring
  };
  double pass = 0.0, stop = 0.0;
  for (double f = 0.25; f < 25.0; f += 0.5) pass += gain(f) * gain(f);
  for (double f = 25.25; f < 500.0; f += 0.5) stop += gain(f) * gain(f);
  const double db = 10.0 * std::log10(stop / pass);
  MESSAGE("aliased noise power relative to passband: " << db << " dB");
  CHECK(db <= -40.0);
}

TEST_CASE("decimating a constant is a degenerate signal") {
  const std::vector<double> c(1000, 1.0);
  try {
    eda::normalize_and_decimate(c, 1000.0);
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::degenerate_signal);
  }
}

TEST_CASE("rfft matches a direct DFT") {
  const auto x = testutil::gaussian(37, 3);
  const auto X = rfft(x, 64);
  REQUIRE(X.size() == 33);
  for (std::size_t k = 0; k < X.size(); k += 5) {
    std::complex<double> s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * std::polar(1.0, -2 * kPi * double(k * i) / 64.0);
    CHECK(std::abs(X[k] - s) < 1e-10);
  }
}

TEST_CASE("Welch PSD integrates to the variance") {
  const auto x = sine(0.25, 4.0, 116.0, 2.0, 0.7, 800.0);
  const auto est = welch(x, 4.0);
  CHECK(est.method == PsdMethod::welch);
  CHECK(band_power(est, 0.0, 2.0) == doctest::Approx(2.0).epsilon(0.02));
  for (double p : est.psd) CHECK(p >= 0.0);
  for (std::size_t k = 1; k < est.freqs.size(); ++k) CHECK(est.freqs[k] > est.freqs[k - 1]);
}

TEST_CASE("Welch power of a pure tone stays in its band") {
  struct Case {
    double f, lo, hi;
  };
  for (const Case c : {Case{0.1, 0.04, 0.15}, Case{0.25, 0.15, 0.4}, Case{0.3, 0.15, 0.4}}) {
    for (double phase : {0.0, 1.0, 2.5}) {
      const auto est = welch(sine(c.f, 4.0, 116.0, 1.0, phase, 900.0), 4.0);
      const double share = band_power(est, c.lo, c.hi) / band_power(est, 0.0, 2.0);
      CHECK(share >= 0.99);
      CHECK(peak_frequency(est, c.lo, c.hi) == doctest::Approx(c.f).epsilon(est.resolution() / c.f));
    }
  }
}

TEST_CASE("Welch on a short input is insufficient data") {
  const auto x = sine(0.25, 4.0, 20.0);
  try {
    welch(x, 4.0);
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::insufficient_data);
  }
}

TEST_CASE("periodogram of a bin-centred tone") {
  // 8 cycles in 64 samples lands exactly on bin 8
  const auto x = sine(0.5, 4.0, 16.0, 1.0);
  const auto est = periodogram(x, 4.0);
  CHECK(peak_frequency(est, 0.0, 2.0) == doctest::Approx(0.5));
  CHECK(band_power(est, 0.0, 2.0) == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("hann and next_pow2") {
  const auto w = hann(8);
  CHECK(w[0] == doctest::Approx(0.0));
  CHECK(w[4] == doctest::Approx(1.0));
  CHECK(next_pow2(1) == 1);
  CHECK(next_pow2(120) == 128);
  CHECK(next_pow2(128) == 128);
}

TEST_CASE("summary statistics") {
  const std::vector<double> x{1, 2, 3, 4, 10};
  CHECK(stats::mean(x) == doctest::Approx(4.0));
  CHECK(stats::median(x) == doctest::Approx(3.0));
  CHECK(stats::mad(x) == doctest::Approx(1.0));
  CHECK(stats::variance(x) == doctest::Approx(12.5));
  const std::vector<double> t{0, 1, 2}, y{0, 2, 4};
  CHECK(stats::trapezoid(t, y) == doctest::Approx(4.0));
  CHECK(stats::ols_slope(t, y) == doctest::Approx(2.0));
  CHECK(stats::pearson(t, y) == doctest::Approx(1.0));
}

TEST_CASE("parallel_for fills every slot and rethrows") {
  std::vector<int> out(100, 0);
  parallel_for(out.size(), 4, [&](std::size_t i) { out[i] = static_cast<int>(i) * 2; });
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == static_cast<int>(i) * 2);
  CHECK_THROWS(parallel_for(10, 3, [](std::size_t i) {
    if (i == 7) throw Error(ErrorKind::numeric, "boom");
  }));
}
