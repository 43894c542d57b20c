#pragma once

#include <cstddef>
#include <functional>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace physio {

/// Categories of failure. Each maps to a process exit code in the CLI.
enum class ErrorKind {
  config,             // missing column, bad key, invalid parameter
  data,               // malformed or non-monotone input
  window,             // segment shorter than the analysis window
  signal_quality,     // detector found too few beats
  insufficient_data,  // series too short for a feature family
  degenerate_signal,  // zero variance / zero power where a ratio is needed
  numeric,            // solver failed to converge
  contract,           // caller violated a documented precondition
  rank,               // singular fixed-effect design
  dependency,         // a prior pipeline stage left no output
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Exit code convention: 0 success, 2 data, 3 numeric, 4 config.
int exit_code_for(ErrorKind kind);

/// Thread-safe sink for non-fatal warnings emitted by extractors.
class Diagnostics {
 public:
  void warn(std::string message);
  std::vector<std::string> warnings() const;
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::vector<std::string> warnings_;
};

inline void warn(Diagnostics* diag, std::string message) {
  if (diag != nullptr) diag->warn(std::move(message));
}

namespace stats {

double mean(std::span<const double> x);
/// Sample variance with the n-1 denominator; 0 for n < 2.
double variance(std::span<const double> x);
double sd(std::span<const double> x);
double median(std::span<const double> x);
/// Median absolute deviation from the median, unscaled.
double mad(std::span<const double> x);
/// Standardized third central moment (population moments).
double skewness(std::span<const double> x);
/// Standardized fourth central moment; a normal sample gives about 3.
double kurtosis(std::span<const double> x);
double pearson(std::span<const double> x, std::span<const double> y);
std::vector<double> diff(std::span<const double> x);
/// Least-squares slope of y on x.
double ols_slope(std::span<const double> x, std::span<const double> y);
/// Trapezoidal integral of y sampled at x.
double trapezoid(std::span<const double> x, std::span<const double> y);

}  // namespace stats

/// Runs body(i) for i in [0, n) across at most `threads` workers.
/// Callers write results into pre-sized slots so output order never depends
/// on scheduling. The first exception thrown by any body is rethrown.
void parallel_for(std::size_t n, unsigned threads,
                  const std::function<void(std::size_t)>& body);

unsigned default_threads();

}  // namespace physio
