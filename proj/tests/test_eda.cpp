#include "doctest.h"

#include <cmath>

#include "oracles.hpp"
#include "physio/common.hpp"
#include "physio/eda.hpp"
#include "test_util.hpp"

using namespace physio;
using namespace physio::eda;

namespace {

// Biexponential response to a unit impulse at t_pulse, sampled at fs.
std::vector<double> pulse_response(std::size_t n, double fs, double t_pulse, double amp) {
  std::vector<double> x(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(i) / fs - t_pulse;
    if (d >= 0.0) x[i] = amp * (std::exp(-d / 2.0) - std::exp(-d / 0.7));
  }
  return x;
}

void check_invariants(std::span<const double> y, const EdaComponents& c) {
  REQUIRE(c.scl.size() == y.size());
  REQUIRE(c.scr.size() == y.size());
  REQUIRE(c.smna.size() == y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    CHECK(c.scl[i] + c.scr[i] + c.residual[i] == doctest::Approx(y[i]).epsilon(1e-12));
    CHECK(c.smna[i] >= -1e-8);
  }
  CHECK(c.kkt_residual <= 1e-6);
}

}  // namespace

TEST_CASE("all-zero input decomposes to zeros") {
  const std::vector<double> z(1500, 0.0);
  const auto c = cvxeda_decompose(z);
  check_invariants(z, c);
  for (std::size_t i = 0; i < z.size(); ++i) {
    CHECK(std::abs(c.scl[i]) < 1e-6);
    CHECK(std::abs(c.scr[i]) < 1e-6);
    CHECK(std::abs(c.smna[i]) < 1e-6);
  }
}

TEST_CASE("single pulse driver is recovered near its onset") {
  const double fs = 50.0;
  const std::size_t n = 2000;
  auto y = pulse_response(n, fs, 10.0, 1.5);
  for (double& v : y) v += 0.4;
  const auto c = cvxeda_decompose(y);
  check_invariants(y, c);
  double total = 0.0, near = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    total += c.smna[i];
    if (std::abs(static_cast<double>(i) / fs - 10.0) <= 0.5) near += c.smna[i];
  }
  REQUIRE(total > 0.0);
  CHECK(near / total >= 0.8);
}

TEST_CASE("slow ramp is tonic") {
  const std::size_t n = 3000;
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(n);
  const auto c = cvxeda_decompose(y);
  check_invariants(y, c);
  const double var_y = stats::variance(y);
  const double var_scl = stats::variance(c.scl);
  CHECK(var_scl / var_y >= 0.95);
  double scr_max = 0.0;
  for (double v : c.scr) scr_max = std::max(scr_max, std::abs(v));
  CHECK(scr_max < 0.05);
}

TEST_CASE("reported objective matches its parts") {
  auto y = pulse_response(1500, 50.0, 8.0, 1.0);
  const auto noise = testutil::gaussian(y.size(), 9, 0.02);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += noise[i];
  std::vector<double> l;
  const CvxEdaParams params;
  const auto c = cvxeda_decompose(y, params, 50.0, &l);
  CHECK(cvxeda_objective(c, l, params) == doctest::Approx(c.objective).epsilon(1e-12));
}

TEST_CASE("interior-point solution matches the dense oracle") {
  CvxEdaParams params;
  params.delta_knot = 1.0;
  for (unsigned seed : {1u, 2u, 3u, 4u}) {
    const std::size_t n = 140 + 15 * seed;  // at most 200 samples
    auto y = pulse_response(n, 50.0, 0.5 + 0.3 * seed, 1.0);
    const auto p2 = pulse_response(n, 50.0, 2.1, 0.6);
    const auto noise = testutil::gaussian(n, seed, 0.05);
    for (std::size_t i = 0; i < n; ++i) y[i] += p2[i] + noise[i] + 0.1 * static_cast<double>(i) / 50.0;
    const auto c = cvxeda_decompose(y, params, 50.0);
    check_invariants(y, c);
    const auto o = oracle::cvxeda_dense(y, params, 50.0);
    MESSAGE("n " << n << " objective " << c.objective << " oracle " << o.objective << " active-set steps "
                 << o.active_set_steps);
    CHECK(std::abs(c.objective - o.objective) <= 1e-5 * std::abs(o.objective));
  }
}

TEST_CASE("too short a recording is insufficient data") {
  const std::vector<double> y(100, 1.0);
  try {
    cvxeda_decompose(y);
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::insufficient_data);
  }
}

TEST_CASE("spline basis covers the record") {
  const auto b = tonic_spline_basis(2000, 50.0, 10.0);
  CHECK(b.cols() >= 4);
  std::vector<double> cover(2000, 0.0);
  for (std::size_t j = 0; j < b.cols(); ++j)
    for (std::size_t r = 0; r < b.values[j].size(); ++r) cover[b.start[j] + r] += b.values[j][r];
  for (double v : cover) CHECK(v > 0.0);
}
