#pragma once

#include <span>
#include <vector>

namespace physio::eda {

/// Z-score, then decimate 1000 Hz -> 200 Hz -> 50 Hz (factors 5 and 4), each
/// stage preceded by a zero-phase low-pass at 0.8 of the new Nyquist.
/// Throws degenerate_signal on a constant input.
std::vector<double> normalize_and_decimate(std::span<const double> eda_raw, double fs_in = 1000.0);

struct CvxEdaParams {
  double tau0 = 2.0;           // slow time constant of the Bateman kernel (s)
  double tau1 = 0.7;           // fast time constant (s)
  double delta_knot = 10.0;    // tonic spline knot spacing (s)
  double alpha_sparse = 8e-4;  // weight of the driver l1 penalty
  double gamma_tonic = 1e-2;   // ridge weight on spline coefficients
  int max_iterations = 20000;
  double tolerance = 1e-6;     // relative KKT residual accepted at exit
};

struct EdaComponents {
  std::vector<double> scl;       // tonic: spline baseline plus affine drift
  std::vector<double> scr;       // phasic: driver filtered by the Bateman kernel
  std::vector<double> smna;      // sparse non-negative sudomotor driver
  std::vector<double> residual;  // input - scl - scr
  double fs = 50.0;
  double objective = 0.0;
  double kkt_residual = 0.0;
  int iterations = 0;
};

/// Discretized Bateman model: driver p relates to phasic response r through
/// the AR filter A q = p and MA filter r = M q (rows 0 and 1 are empty).
struct BatemanFilter {
  double ar[3];
  double ma[3] = {1.0, 2.0, 1.0};
};
BatemanFilter bateman_filter(double tau0, double tau1, double fs);

/// Tonic regressors: cubic B-spline bumps every delta_knot seconds. Column j
/// is stored as (first row, values).
struct SplineBasis {
  std::vector<std::size_t> start;
  std::vector<std::vector<double>> values;
  std::size_t cols() const { return start.size(); }
};
SplineBasis tonic_spline_basis(std::size_t n, double fs, double delta_knot);

/// Objective of a decomposition recomputed from its parts:
/// 0.5 |residual|^2 + alpha * sum(smna) + 0.5 * gamma * |spline coefficients|^2.
double cvxeda_objective(const EdaComponents& c, std::span<const double> spline_coefficients,
                        const CvxEdaParams& params);

/// Solves the cvxEDA quadratic program with a primal-dual interior-point
/// method. Throws numeric on non-convergence (message carries the residual).
EdaComponents cvxeda_decompose(std::span<const double> eda50, const CvxEdaParams& params = {},
                               double fs = 50.0,
                               std::vector<double>* spline_coefficients = nullptr);

}  // namespace physio::eda
