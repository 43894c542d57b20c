#include "physio/eda.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "physio/common.hpp"
#include "physio/signal.hpp"

namespace physio::eda {

std::vector<double> normalize_and_decimate(std::span<const double> eda_raw, double fs_in) {
  if (static_cast<double>(eda_raw.size()) < fs_in)
    throw Error(ErrorKind::insufficient_data, "EDA decimation needs at least 1 s of signal");
  const double m = stats::mean(eda_raw);
  const double s = stats::sd(eda_raw);
  if (!(s > 0.0)) throw Error(ErrorKind::degenerate_signal, "constant EDA signal cannot be z-scored");
  std::vector<double> z(eda_raw.size());
  std::transform(eda_raw.begin(), eda_raw.end(), z.begin(), [&](double v) { return (v - m) / s; });
  if (std::abs(fs_in - 1000.0) < 1e-9) {
    auto stage1 = signal::decimate(z, 5);
    return signal::decimate(stage1, 4);
  }
  const int factor = static_cast<int>(std::lround(fs_in / 50.0));
  if (factor < 1 || std::abs(fs_in / factor - 50.0) > 1e-9)
    throw Error(ErrorKind::config, "EDA sampling rate must be an integer multiple of 50 Hz");
  return signal::decimate(z, factor);
}

BatemanFilter bateman_filter(double tau0, double tau1, double fs) {
  const double delta = 1.0 / fs;
  const double a1 = 1.0 / std::min(tau1, tau0);
  const double a0 = 1.0 / std::max(tau1, tau0);
  const double scale = (a1 - a0) * delta * delta;
  BatemanFilter f;
  f.ar[0] = (a1 * delta + 2.0) * (a0 * delta + 2.0) / scale;
  f.ar[1] = (2.0 * a1 * a0 * delta * delta - 8.0) / scale;
  f.ar[2] = (a1 * delta - 2.0) * (a0 * delta - 2.0) / scale;
  return f;
}

SplineBasis tonic_spline_basis(std::size_t n, double fs, double delta_knot) {
  const auto dks = std::max<long>(1, std::lround(delta_knot * fs));
  // Triangle of half-width dks convolved with itself: a cubic B-spline bump.
  std::vector<double> tri;
  for (long i = 1; i < dks; ++i) tri.push_back(static_cast<double>(i));
  for (long i = dks; i > 0; --i) tri.push_back(static_cast<double>(i));
  std::vector<double> bump(2 * tri.size() - 1, 0.0);
  for (std::size_t i = 0; i < tri.size(); ++i)
    for (std::size_t j = 0; j < tri.size(); ++j) bump[i + j] += tri[i] * tri[j];
  const double peak = *std::max_element(bump.begin(), bump.end());
  for (double& v : bump) v /= peak;

  const long len = static_cast<long>(bump.size());
  SplineBasis basis;
  for (long center = 0; center < static_cast<long>(n); center += dks) {
    const long first = center - len / 2;
    const long lo = std::max<long>(0, first);
    const long hi = std::min<long>(static_cast<long>(n), first + len);
    if (hi <= lo) continue;
    basis.start.push_back(static_cast<std::size_t>(lo));
    basis.values.emplace_back(bump.begin() + (lo - first), bump.begin() + (hi - first));
  }
  return basis;
}

double cvxeda_objective(const EdaComponents& c, std::span<const double> spline_coefficients,
                        const CvxEdaParams& params) {
  double rss = 0.0, driver = 0.0, ridge = 0.0;
  for (double e : c.residual) rss += e * e;
  for (double p : c.smna) driver += p;
  for (double l : spline_coefficients) ridge += l * l;
  return 0.5 * rss + params.alpha_sparse * driver + 0.5 * params.gamma_tonic * ridge;
}

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;

double max_step(const Vec& v, const Vec& dv) {
  double a = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (dv[i] < 0.0) a = std::min(a, -v[i] / dv[i]);
  return a;
}

}  // namespace

EdaComponents cvxeda_decompose(std::span<const double> eda50, const CvxEdaParams& params,
                               double fs, std::vector<double>* spline_coefficients) {
  const std::size_t n = eda50.size();
  const double min_len = 2.0 * params.delta_knot * fs;
  if (static_cast<double>(n) < min_len || n < 4)
    throw Error(ErrorKind::insufficient_data, "cvxEDA needs at least two knot spacings of signal");

  const BatemanFilter filt = bateman_filter(params.tau0, params.tau1, fs);
  const SplineBasis basis = tonic_spline_basis(n, fs, params.delta_knot);
  const std::size_t nb = basis.cols();
  const std::size_t nc = 2;
  const std::size_t nx = n + nc + nb;
  const std::size_t m = n - 2;
  const auto N = static_cast<Eigen::Index>(n);

  // Design D = [M | C | B] maps (q, d, l) to the fitted signal.
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(3 * n + 2 * n + nb * basis.values.front().size());
  for (std::size_t i = 2; i < n; ++i)
    for (int k = 0; k < 3; ++k)
      trip.emplace_back(static_cast<int>(i), static_cast<int>(i - k), filt.ma[k]);
  for (std::size_t i = 0; i < n; ++i) {
    trip.emplace_back(static_cast<int>(i), static_cast<int>(n), 1.0);
    trip.emplace_back(static_cast<int>(i), static_cast<int>(n + 1),
                      static_cast<double>(i + 1) / static_cast<double>(n));
  }
  for (std::size_t j = 0; j < nb; ++j)
    for (std::size_t r = 0; r < basis.values[j].size(); ++r)
      trip.emplace_back(static_cast<int>(basis.start[j] + r), static_cast<int>(n + nc + j),
                        basis.values[j][r]);
  SpMat D(N, static_cast<Eigen::Index>(nx));
  D.setFromTriplets(trip.begin(), trip.end());

  trip.clear();
  for (std::size_t i = 2; i < n; ++i)
    for (int k = 0; k < 3; ++k)
      trip.emplace_back(static_cast<int>(i - 2), static_cast<int>(i - k), filt.ar[k]);
  SpMat G(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(nx));
  G.setFromTriplets(trip.begin(), trip.end());

  Vec y(N);
  for (std::size_t i = 0; i < n; ++i) y[static_cast<Eigen::Index>(i)] = eda50[i];

  SpMat ridge(static_cast<Eigen::Index>(nx), static_cast<Eigen::Index>(nx));
  {
    std::vector<Eigen::Triplet<double>> rt;
    for (std::size_t j = 0; j < nb; ++j)
      rt.emplace_back(static_cast<int>(n + nc + j), static_cast<int>(n + nc + j), params.gamma_tonic);
    ridge.setFromTriplets(rt.begin(), rt.end());
  }
  const SpMat H = SpMat(D.transpose() * D) + ridge;
  const SpMat Gt = G.transpose();
  Vec f = -(D.transpose() * y);
  f += params.alpha_sparse * (Gt * Vec::Ones(static_cast<Eigen::Index>(m)));

  Vec x = Vec::Zero(static_cast<Eigen::Index>(nx));
  Vec s = Vec::Ones(static_cast<Eigen::Index>(m));
  Vec z = Vec::Ones(static_cast<Eigen::Index>(m));
  const double fnorm = f.lpNorm<Eigen::Infinity>();
  const double internal_tol = std::min(params.tolerance, 1e-6) * 1e-3;

  Eigen::SimplicialLDLT<SpMat> solver;
  double kkt = std::numeric_limits<double>::infinity();
  double best_kkt = kkt;
  Vec best_x = x;
  int iter = 0;
  int stalled = 0;
  for (; iter < params.max_iterations; ++iter) {
    const Vec Hx = H * x;
    const Vec Gx = G * x;
    const Vec rd = Hx + f - Gt * z;
    const Vec rp = Gx - s;
    const double mu = s.dot(z) / static_cast<double>(m);
    const double primal = 0.5 * x.dot(Hx) + f.dot(x) + 0.5 * y.squaredNorm();
    const double res_d = rd.lpNorm<Eigen::Infinity>() / (1.0 + std::max(fnorm, Hx.lpNorm<Eigen::Infinity>()));
    const double res_p = rp.lpNorm<Eigen::Infinity>() / (1.0 + Gx.lpNorm<Eigen::Infinity>());
    const double gap = mu * static_cast<double>(m) / (1.0 + std::abs(primal));
    kkt = std::max({res_d, res_p, gap});
    if (kkt < best_kkt) {
      best_kkt = kkt;
      best_x = x;
      stalled = 0;
    } else if (++stalled > 20) {
      break;
    }
    if (kkt <= internal_tol) break;

    const Vec w = z.cwiseQuotient(s);
    const SpMat K = H + SpMat(Gt * w.asDiagonal() * G);
    solver.compute(K);
    if (solver.info() != Eigen::Success) break;

    auto solve_direction = [&](const Vec& rc, Vec& dx, Vec& ds, Vec& dz) {
      const Vec t = (rc + z.cwiseProduct(rp)).cwiseQuotient(s);
      dx = solver.solve(-rd - Gt * t);
      const Vec Gdx = G * dx;
      dz = -(rc + z.cwiseProduct(rp) + z.cwiseProduct(Gdx)).cwiseQuotient(s);
      ds = Gdx + rp;
    };

    Vec dx, ds, dz;
    solve_direction(s.cwiseProduct(z), dx, ds, dz);
    const double a_aff = std::min(max_step(s, ds), max_step(z, dz));
    const double mu_aff = (s + a_aff * ds).dot(z + a_aff * dz) / static_cast<double>(m);
    const double sigma = std::pow(mu_aff / mu, 3.0);
    const Vec rc = s.cwiseProduct(z) + ds.cwiseProduct(dz) - Vec::Constant(static_cast<Eigen::Index>(m), sigma * mu);
    solve_direction(rc, dx, ds, dz);
    const double a = std::min(1.0, 0.99 * std::min(max_step(s, ds), max_step(z, dz)));
    x += a * dx;
    s += a * ds;
    z += a * dz;
  }

  if (!(best_kkt <= params.tolerance)) {
    std::ostringstream msg;
    msg << "cvxEDA solver did not converge after " << iter << " iterations (KKT residual "
        << best_kkt << ")";
    throw Error(ErrorKind::numeric, msg.str());
  }
  x = best_x;

  EdaComponents out;
  out.fs = fs;
  out.iterations = iter;
  out.kkt_residual = best_kkt;
  const Vec q = x.head(N);
  const Vec fitted_tonic = D.rightCols(static_cast<Eigen::Index>(nc + nb)) * x.tail(static_cast<Eigen::Index>(nc + nb));
  const Vec phasic = D.leftCols(N) * q;
  out.scl.assign(fitted_tonic.data(), fitted_tonic.data() + N);
  out.scr.assign(phasic.data(), phasic.data() + N);
  out.smna.assign(n, 0.0);
  for (std::size_t i = 2; i < n; ++i)
    out.smna[i] = filt.ar[0] * q[static_cast<Eigen::Index>(i)] + filt.ar[1] * q[static_cast<Eigen::Index>(i - 1)] +
                  filt.ar[2] * q[static_cast<Eigen::Index>(i - 2)];
  out.residual.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.residual[i] = eda50[i] - out.scl[i] - out.scr[i];

  std::vector<double> l(x.data() + n + nc, x.data() + nx);
  out.objective = cvxeda_objective(out, l, params);
  if (spline_coefficients != nullptr) *spline_coefficients = std::move(l);
  return out;
}

}  // namespace physio::eda
