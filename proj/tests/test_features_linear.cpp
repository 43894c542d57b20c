#include "doctest.h"

#include <cmath>
#include <numbers>
#include <set>

#include "physio/common.hpp"
#include "physio/features_linear.hpp"
#include "physio/registry.hpp"
#include "test_util.hpp"

using namespace physio;
using namespace physio::features;
constexpr double kPi = std::numbers::pi;

namespace {

rr::RRSeries series(const std::vector<double>& ms) {
  rr::RRSeries s;
  double t = 0.0;
  for (double v : ms) {
    t += v / 1000.0;
    s.intervals_ms.push_back(v);
    s.beat_times_s.push_back(t);
  }
  return s;
}

rr::UniformSeries tone(double f, double seconds = 116.0, double fs = 4.0) {
  rr::UniformSeries u;
  u.fs = fs;
  const auto n = static_cast<std::size_t>(seconds * fs);
  for (std::size_t i = 0; i < n; ++i) u.values.push_back(850.0 + 30.0 * std::sin(2 * kPi * f * double(i) / fs + 0.3));
  return u;
}

std::vector<double> eda_tone(double f, double seconds = 116.0, double fs = 50.0) {
  std::vector<double> x(static_cast<std::size_t>(seconds * fs));
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(2 * kPi * f * double(i) / fs + 0.2);
  return x;
}

}  // namespace

TEST_CASE("registry has 162 unique names") {
  const auto names = feature_names();
  CHECK(names.size() == 162);
  std::set<std::string> unique(names.begin(), names.end());
  CHECK(unique.size() == names.size());
  CHECK(feature_index("SMNA_mean") < names.size());
  CHECK(names[feature_index("SCL_medWin")] == "SCL_medWin");
  CHECK_THROWS_AS(feature_index("no_such_feature"), Error);
}

TEST_CASE("time-domain RR features by hand") {
  const auto t = temporal_rr(series({800, 810, 790, 805, 815}));
  CHECK(t.mean_rr == doctest::Approx(804.0));
  CHECK(t.rmssd == doctest::Approx(std::sqrt(206.25)));
  CHECK(t.nn50 == 0.0);
  CHECK(t.pnn50 == 0.0);

  const auto c = temporal_rr(series(std::vector<double>(20, 900.0)));
  CHECK(c.std_rr == 0.0);
  CHECK(c.rmssd == 0.0);
  CHECK(c.pnn50 == 0.0);

  std::vector<double> alt;
  for (int i = 0; i < 21; ++i) alt.push_back(i % 2 ? 900.0 : 800.0);
  const auto a = temporal_rr(series(alt));
  CHECK(a.nn50 == 20.0);
  CHECK(a.pnn50 == doctest::Approx(100.0));
}

TEST_CASE("geometric RR features") {
  SUBCASE("one bin") {
    const auto g = geometric_rr(series(std::vector<double>(40, 820.0)));
    CHECK(g.tri_index == doctest::Approx(1.0));
    CHECK(g.tinn_ms <= 1000.0 / 128.0 + 1e-12);
  }
  SUBCASE("k equally filled bins") {
    std::vector<double> x;
    const double w = 1000.0 / 128.0;
    for (int k = 0; k < 5; ++k)
      for (int r = 0; r < 8; ++r) x.push_back(800.0 + (k + 0.5) * w);
    CHECK(geometric_rr(series(x)).tri_index == doctest::Approx(5.0));
  }
  SUBCASE("triangular histogram") {
    const std::vector<double> counts{1, 2, 3, 4, 3, 2, 1};
    CHECK(tinn_bins(counts) == doctest::Approx(8.0));
    const std::vector<double> wide{1, 2, 3, 4, 5, 6, 5, 4, 3, 2, 1};
    CHECK(std::abs(tinn_bins(wide) - 12.0) <= 1.0);
  }
}

TEST_CASE("RR spectrum of pure tones") {
  const auto hf = spectral_rr(tone(0.25));
  CHECK(hf.hf_nu >= 0.99);
  CHECK(hf.lf_hf <= 0.01);
  const double df = 4.0 / 1024.0;
  CHECK(std::abs(hf.hf_peak - 0.25) <= df);
  CHECK(hf.lf_nu + hf.hf_nu == doctest::Approx(1.0));

  const auto lf = spectral_rr(tone(0.1));
  CHECK(lf.lf_nu >= 0.99);
  CHECK(std::abs(lf.lf_peak - 0.1) <= df);
  CHECK(lf.lf_nu + lf.hf_nu == doctest::Approx(1.0));

  rr::UniformSeries noise;
  noise.values = testutil::gaussian(464, 3, 20.0);
  const auto nz = spectral_rr(noise);
  CHECK(nz.lf_nu + nz.hf_nu == doctest::Approx(1.0));
  CHECK(nz.lf_perc + nz.hf_perc <= 100.0 + 1e-9);
}

TEST_CASE("SCL statistics of a constant") {
  const std::vector<double> c(5800, 2.5);
  const auto s = scl_features(c);
  CHECK(s.mean == doctest::Approx(2.5));
  CHECK(s.median == doctest::Approx(2.5));
  CHECK(s.std == 0.0);
  CHECK(s.mad == 0.0);
  CHECK(s.median_win == doctest::Approx(2.5));
  CHECK(s.mean_win == doctest::Approx(2.5));
}

TEST_CASE("SCR peaks of two isolated pulses") {
  std::vector<double> x(1000, 0.0);
  auto tri = [&](std::size_t centre, double h) {
    for (int d = -25; d <= 25; ++d) x[centre + d] = h * (1.0 - std::abs(d) / 25.0);
  };
  tri(200, 0.5);
  tri(700, 0.8);
  const auto f = scr_features(x);
  CHECK(f.n_peaks == 2.0);
  CHECK(f.max_peak == doctest::Approx(0.8));
  CHECK(f.amp_sum == doctest::Approx(1.3));
}

TEST_CASE("all-zero SMNA") {
  const std::vector<double> z(2000, 0.0);
  const auto f = smna_features(z);
  CHECK(f.mean == 0.0);
  CHECK(f.n_peaks == 0.0);
  CHECK(f.amp_sum == 0.0);
}

TEST_CASE("EDASymp normalization") {
  const std::vector<double> zero(5800, 0.0);
  const auto in_band = edasymp_features(eda_tone(0.1), zero);
  CHECK(in_band.power_nu >= 0.99);
  CHECK(in_band.welch_nu >= 0.99);
  CHECK(in_band.power_db == doctest::Approx(10.0 * std::log10(in_band.power)));
  CHECK(in_band.welch_db == doctest::Approx(10.0 * std::log10(in_band.welch_power)));

  const auto below = edasymp_features(eda_tone(0.01), zero);
  CHECK(below.power_nu <= 0.05);
}

TEST_CASE("EDASymp over HF ratios") {
  CHECK(combined_ratios(2.0, 1.0, 0.5).edasymp_hf == doctest::Approx(4.0));
  CHECK(combined_ratios(0.0, 0.0, 0.5).edasymp_hf == 0.0);
  CHECK(combined_ratios(4.0, 1.0, 0.5).edasymp_hf == doctest::Approx(2.0 * combined_ratios(2.0, 1.0, 0.5).edasymp_hf));
  CHECK_THROWS_AS(combined_ratios(1.0, 1.0, 0.0), Error);
}
