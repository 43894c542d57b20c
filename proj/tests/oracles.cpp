#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace oracle {

double sample_entropy(std::span<const double> x, int m, double r) {
  const std::size_t n = x.size();
  const auto mm = static_cast<std::size_t>(m);
  if (n <= mm + 1) return -1.0;
  const std::size_t t = n - mm;
  auto templates = [&](std::size_t len) {
    std::vector<std::vector<double>> out;
    for (std::size_t i = 0; i < t; ++i) out.emplace_back(x.begin() + static_cast<long>(i), x.begin() + static_cast<long>(i + len));
    return out;
  };
  auto count = [&](const std::vector<std::vector<double>>& tpl) {
    long c = 0;
    for (std::size_t i = 0; i < tpl.size(); ++i)
      for (std::size_t j = i + 1; j < tpl.size(); ++j) {
        double d = 0.0;
        for (std::size_t k = 0; k < tpl[i].size(); ++k) d = std::max(d, std::abs(tpl[i][k] - tpl[j][k]));
        if (d <= r) ++c;
      }
    return c;
  };
  const long b = count(templates(mm));
  const long a = count(templates(mm + 1));
  if (a == 0 || b == 0) return -1.0;
  return -std::log(static_cast<double>(a) / static_cast<double>(b));
}

std::vector<std::pair<std::size_t, std::size_t>> visibility_edges(std::span<const double> y) {
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  const std::size_t n = y.size();
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b) {
      bool visible = true;
      for (std::size_t c = a + 1; c < b && visible; ++c) {
        const double lhs = (y[c] - y[a]) * static_cast<double>(b - a);
        const double rhs = (y[b] - y[a]) * static_cast<double>(c - a);
        visible = lhs < rhs;
      }
      if (visible) edges.emplace_back(a, b);
    }
  return edges;
}

namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct DenseProgram {
  Mat Phi;                 // n x nz map from (q0, q1, p, d, l) to the fitted signal
  Mat tonic;               // columns of Phi that build the tonic part
  Vec lin;                 // linear term of the objective
  Vec ridge;               // diagonal quadratic penalty
  std::vector<char> bounded;
  std::size_t n = 0, np = 0, nb = 0;
  double ar0 = 0, ar1 = 0, ar2 = 0, ma0 = 1, ma1 = 2, ma2 = 1;
};

DenseProgram build(std::span<const double> y, const physio::eda::CvxEdaParams& params, double fs) {
  DenseProgram d;
  d.n = y.size();
  const std::size_t n = d.n;
  // Problem data (Bateman discretization and spline bumps) comes from the
  // library; only the optimization is independent.
  const auto filt = physio::eda::bateman_filter(params.tau0, params.tau1, fs);
  const auto basis = physio::eda::tonic_spline_basis(n, fs, params.delta_knot);
  d.ar0 = filt.ar[0];
  d.ar1 = filt.ar[1];
  d.ar2 = filt.ar[2];
  d.ma0 = filt.ma[0];
  d.ma1 = filt.ma[1];
  d.ma2 = filt.ma[2];
  d.np = n - 2;
  d.nb = basis.cols();
  const std::size_t nz = 2 + d.np + 2 + d.nb;
  d.Phi = Mat::Zero(static_cast<long>(n), static_cast<long>(nz));

  // Unit response of the phasic channel to each of q0, q1, p_2..p_{n-1}.
  for (std::size_t col = 0; col < 2 + d.np; ++col) {
    std::vector<double> q(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (i < 2) {
        q[i] = col == i ? 1.0 : 0.0;
      } else {
        const double p = col == i ? 1.0 : 0.0;
        q[i] = (p - d.ar1 * q[i - 1] - d.ar2 * q[i - 2]) / d.ar0;
      }
    }
    for (std::size_t i = 2; i < n; ++i)
      d.Phi(static_cast<long>(i), static_cast<long>(col)) = d.ma0 * q[i] + d.ma1 * q[i - 1] + d.ma2 * q[i - 2];
  }
  const long c0 = static_cast<long>(2 + d.np);
  for (std::size_t i = 0; i < n; ++i) {
    d.Phi(static_cast<long>(i), c0) = 1.0;
    d.Phi(static_cast<long>(i), c0 + 1) = static_cast<double>(i + 1) / static_cast<double>(n);
  }
  for (std::size_t j = 0; j < d.nb; ++j)
    for (std::size_t r = 0; r < basis.values[j].size(); ++r)
      d.Phi(static_cast<long>(basis.start[j] + r), c0 + 2 + static_cast<long>(j)) = basis.values[j][r];
  d.tonic = d.Phi.rightCols(static_cast<long>(2 + d.nb));

  d.lin = Vec::Zero(static_cast<long>(nz));
  d.ridge = Vec::Zero(static_cast<long>(nz));
  d.bounded.assign(nz, 0);
  for (std::size_t j = 0; j < d.np; ++j) {
    d.lin[static_cast<long>(2 + j)] = params.alpha_sparse;
    d.bounded[2 + j] = 1;
  }
  for (std::size_t j = 0; j < d.nb; ++j) d.ridge[c0 + 2 + static_cast<long>(j)] = params.gamma_tonic;
  return d;
}

}  // namespace

CvxEdaSolution cvxeda_dense(std::span<const double> ys, const physio::eda::CvxEdaParams& params, double fs) {
  const DenseProgram d = build(ys, params, fs);
  const long nz = d.Phi.cols();
  const Vec y = Eigen::Map<const Vec>(ys.data(), static_cast<long>(ys.size()));

  // Quadratic form 0.5 z'Qz + c'z (+ 0.5 |y|^2).
  Mat Q = d.Phi.transpose() * d.Phi;
  Q.diagonal() += d.ridge;
  const Vec c = d.lin - d.Phi.transpose() * y;

  // Diagonal scaling keeps the gradient method usable despite the very
  // different column norms of the driver and spline blocks.
  Vec s(nz);
  for (long j = 0; j < nz; ++j) s[j] = 1.0 / std::sqrt(std::max(Q(j, j), 1e-300));
  const Mat Qs = s.asDiagonal() * Q * s.asDiagonal();
  const Vec cs = s.cwiseProduct(c);
  const double L = Eigen::SelfAdjointEigenSolver<Mat>(Qs, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();

  auto project = [&](Vec& z) {
    for (long j = 0; j < nz; ++j)
      if (d.bounded[static_cast<std::size_t>(j)] && z[j] < 0.0) z[j] = 0.0;
  };
  Vec u = Vec::Zero(nz), u_prev = u, w = u;
  double tk = 1.0;
  for (int it = 0; it < 20000; ++it) {
    Vec next = w - (Qs * w + cs) / L;
    project(next);
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
    w = next + ((tk - 1.0) / tn) * (next - u);
    u_prev = u;
    u = next;
    tk = tn;
    if ((u - u_prev).lpNorm<Eigen::Infinity>() < 1e-13) break;
  }
  Vec z = s.cwiseProduct(u);

  // Primal active-set finish for the bound constraints.
  std::vector<char> active(static_cast<std::size_t>(nz), 0);
  for (long j = 0; j < nz; ++j)
    if (d.bounded[static_cast<std::size_t>(j)] && z[j] <= 0.0) {
      active[static_cast<std::size_t>(j)] = 1;
      z[j] = 0.0;
    }
  const double gtol = 1e-11 * (1.0 + c.lpNorm<Eigen::Infinity>());
  int steps = 0;
  for (; steps < 100000; ++steps) {
    std::vector<long> F;
    for (long j = 0; j < nz; ++j)
      if (!active[static_cast<std::size_t>(j)]) F.push_back(j);
    const long nf = static_cast<long>(F.size());
    Mat QF(nf, nf);
    Vec cF(nf);
    for (long a = 0; a < nf; ++a) {
      cF[a] = c[F[static_cast<std::size_t>(a)]];
      for (long b = 0; b < nf; ++b) QF(a, b) = Q(F[static_cast<std::size_t>(a)], F[static_cast<std::size_t>(b)]);
    }
    const Vec wF = QF.ldlt().solve(-cF);
    double step = 1.0;
    long blocking = -1;
    for (long a = 0; a < nf; ++a) {
      const long j = F[static_cast<std::size_t>(a)];
      if (d.bounded[static_cast<std::size_t>(j)] && wF[a] < 0.0) {
        const double t = z[j] / (z[j] - wF[a]);
        if (t < step) {
          step = t;
          blocking = j;
        }
      }
    }
    for (long a = 0; a < nf; ++a) {
      const long j = F[static_cast<std::size_t>(a)];
      z[j] += step * (wF[a] - z[j]);
    }
    if (blocking >= 0) {
      for (long a = 0; a < nf; ++a) {
        const long j = F[static_cast<std::size_t>(a)];
        if (d.bounded[static_cast<std::size_t>(j)] && (j == blocking || z[j] <= 0.0)) {
          z[j] = 0.0;
          active[static_cast<std::size_t>(j)] = 1;
        }
      }
      continue;
    }
    const Vec g = Q * z + c;
    long release = -1;
    double most = -gtol;
    for (long j = 0; j < nz; ++j)
      if (active[static_cast<std::size_t>(j)] && g[j] < most) {
        most = g[j];
        release = j;
      }
    if (release < 0) break;
    active[static_cast<std::size_t>(release)] = 0;
  }

  CvxEdaSolution out;
  out.active_set_steps = steps;
  out.objective = 0.5 * z.dot(Q * z) + c.dot(z) + 0.5 * y.squaredNorm();
  const long n = static_cast<long>(d.n);
  const Vec tonic = d.tonic * z.tail(static_cast<long>(2 + d.nb));
  const Vec phasic = d.Phi.leftCols(static_cast<long>(2 + d.np)) * z.head(static_cast<long>(2 + d.np));
  out.scl.assign(tonic.data(), tonic.data() + n);
  out.scr.assign(phasic.data(), phasic.data() + n);
  out.smna.assign(d.n, 0.0);
  for (std::size_t i = 2; i < d.n; ++i) out.smna[i] = z[static_cast<long>(i)];
  return out;
}

double reml_deviance_dense(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, const std::vector<int>& groups,
                           double lambda, Eigen::VectorXd* beta, double* sigma2) {
  const long n = y.size();
  const long p = X.cols();
  Mat H = Mat::Identity(n, n);
  for (long i = 0; i < n; ++i)
    for (long j = 0; j < n; ++j)
      if (groups[static_cast<std::size_t>(i)] == groups[static_cast<std::size_t>(j)]) H(i, j) += lambda;
  const Eigen::LLT<Mat> llt(H);
  const Mat HiX = llt.solve(X);
  const Vec Hiy = llt.solve(y);
  const Mat XtHiX = X.transpose() * HiX;
  const Vec b = XtHiX.ldlt().solve(X.transpose() * Hiy);
  const Vec r = y - X * b;
  const double s2 = r.dot(llt.solve(r)) / static_cast<double>(n - p);
  double logdet_h = 0.0;
  for (long i = 0; i < n; ++i) logdet_h += 2.0 * std::log(llt.matrixL()(i, i));
  const double logdet_x = std::log(XtHiX.determinant());
  if (beta != nullptr) *beta = b;
  if (sigma2 != nullptr) *sigma2 = s2;
  return logdet_h + logdet_x + static_cast<double>(n - p) * (1.0 + std::log(2.0 * std::numbers::pi * s2));
}

RemlGrid reml_grid(const Eigen::VectorXd& y, const Eigen::MatrixXd& X, const std::vector<int>& groups,
                   double lambda_max) {
  double best = 0.0, best_dev = std::numeric_limits<double>::infinity();
  auto scan = [&](double lo, double hi, double step) {
    for (double l = std::max(0.0, lo); l <= hi + 1e-15; l += step) {
      const double dev = reml_deviance_dense(y, X, groups, l);
      if (dev < best_dev) {
        best_dev = dev;
        best = l;
      }
    }
  };
  scan(0.0, lambda_max, 0.01);
  for (double step = 0.001; step >= 1e-7; step /= 10.0) {
    const double centre = best;
    scan(centre - 10.0 * step, centre + 10.0 * step, step);
  }
  RemlGrid g;
  g.lambda = best;
  double s2 = 0.0;
  g.deviance = reml_deviance_dense(y, X, groups, best, &g.beta, &s2);
  g.sigma_e = std::sqrt(s2);
  g.sigma_u = std::sqrt(best * s2);
  return g;
}

}  // namespace oracle
