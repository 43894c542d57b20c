#include "physio/features_nonlinear.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <queue>
#include <string>

#include "physio/signal.hpp"

namespace physio::features {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorKind::insufficient_data, what);
}

double shannon(std::span<const double> counts) {
  double total = 0.0;
  for (double c : counts) total += c;
  if (!(total > 0.0)) return 0.0;
  double h = 0.0;
  for (double c : counts)
    if (c > 0.0) h -= (c / total) * std::log(c / total);
  return h;
}

double chebyshev(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) d = std::max(d, std::abs(a[k] - b[k]));
  return d;
}

}  // namespace

// ---------------------------------------------------------------- Poincare

NamedValues LaggedPoincare::named() const {
  NamedValues out;
  out.reserve(66);
  for (int m = 0; m < kMaxPoincareLag; ++m) {
    const std::string s = "_M" + std::to_string(m + 1);
    out.emplace_back("SD1" + s, sd1[m]);
    out.emplace_back("SD2" + s, sd2[m]);
    out.emplace_back("SD12" + s, sd12[m]);
    out.emplace_back("rho" + s, rho[m]);
    out.emplace_back("P_surf" + s, p_surf[m]);
    out.emplace_back("SDRR" + s, sdrr[m]);
  }
  out.emplace_back("AUC_SD1", auc_sd1);
  out.emplace_back("AUC_SD2", auc_sd2);
  out.emplace_back("AUC_SD12", auc_sd12);
  out.emplace_back("AUC_rho_RR", auc_rho);
  out.emplace_back("AUC_P_surf", auc_p_surf);
  out.emplace_back("AUC_SDRR", auc_sdrr);
  return out;
}

LaggedPoincare lagged_poincare(const rr::RRSeries& series, Diagnostics* diag) {
  const auto& r = series.intervals_ms;
  const std::size_t n = r.size();
  require(n >= 10 + kMaxPoincareLag, "lagged Poincare needs n >= 20");
  LaggedPoincare p{};
  bool warned = false;
  for (int m = 1; m <= kMaxPoincareLag; ++m) {
    const std::size_t k = n - static_cast<std::size_t>(m);
    std::vector<double> x(r.begin(), r.begin() + static_cast<std::ptrdiff_t>(k));
    std::vector<double> y(r.begin() + m, r.end());
    std::vector<double> d(k), s(k);
    for (std::size_t i = 0; i < k; ++i) {
      d[i] = y[i] - x[i];
      s[i] = y[i] + x[i];
    }
    const std::size_t j = static_cast<std::size_t>(m - 1);
    p.sd1[j] = std::sqrt(stats::variance(d) / 2.0);
    p.sd2[j] = std::sqrt(stats::variance(s) / 2.0);
    const double vx = stats::variance(x), vy = stats::variance(y);
    const bool degenerate = !(p.sd2[j] > 0.0) || !(vx > 0.0) || !(vy > 0.0);
    if (degenerate && !warned) {
      warn(diag, "lagged Poincare: zero variance, SD12 and rho set to 0");
      warned = true;
    }
    p.sd12[j] = p.sd2[j] > 0.0 ? p.sd1[j] / p.sd2[j] : 0.0;
    p.rho[j] = (vx > 0.0 && vy > 0.0) ? stats::pearson(x, y) : 0.0;
    p.p_surf[j] = std::numbers::pi * p.sd1[j] * p.sd2[j];
    p.sdrr[j] = std::sqrt((vx + vy) / 2.0);
  }
  std::vector<double> lags(kMaxPoincareLag);
  for (int m = 0; m < kMaxPoincareLag; ++m) lags[m] = m + 1;
  auto auc = [&lags](const auto& curve) {
    return stats::trapezoid(lags, std::span<const double>(curve.data(), curve.size()));
  };
  p.auc_sd1 = auc(p.sd1);
  p.auc_sd2 = auc(p.sd2);
  p.auc_sd12 = auc(p.sd12);
  p.auc_rho = auc(p.rho);
  p.auc_p_surf = auc(p.p_surf);
  p.auc_sdrr = auc(p.sdrr);
  return p;
}

// ---------------------------------------------------------------- fractal / DFA

NamedValues Fractal::named() const { return {{"FracDim", frac_dim}, {"HurstExp", hurst}}; }

double sevcik_dimension(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 2) throw Error(ErrorKind::insufficient_data, "Sevcik dimension needs n >= 2");
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) return 1.0;
  const double dx = 1.0 / static_cast<double>(n - 1);
  double len = 0.0;
  for (std::size_t i = 1; i < n; ++i) {
    const double dy = (x[i] - x[i - 1]) / range;
    len += std::sqrt(dy * dy + dx * dx);
  }
  return 1.0 + std::log(len) / std::log(2.0 * static_cast<double>(n - 1));
}

double hurst_rs(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<double> lw, lrs;
  for (std::size_t w = 8; w <= n / 2; w *= 2) {
    double acc = 0.0;
    int used = 0;
    for (std::size_t c = 0; c + w <= n; c += w) {
      const auto seg = x.subspan(c, w);
      const double m = stats::mean(seg);
      double z = 0.0, zmin = 0.0, zmax = 0.0, ss = 0.0;
      for (double v : seg) {
        z += v - m;
        zmin = std::min(zmin, z);
        zmax = std::max(zmax, z);
        ss += (v - m) * (v - m);
      }
      const double s = std::sqrt(ss / static_cast<double>(w));
      if (s > 0.0) {
        acc += (zmax - zmin) / s;
        ++used;
      }
    }
    if (used > 0 && acc > 0.0) {
      lw.push_back(std::log(static_cast<double>(w)));
      lrs.push_back(std::log(acc / used));
    }
  }
  if (lw.size() < 2) throw Error(ErrorKind::insufficient_data, "rescaled range needs two window sizes");
  return stats::ols_slope(lw, lrs);
}

Fractal fractal_rr(const rr::RRSeries& series, Diagnostics* diag) {
  const auto& r = series.intervals_ms;
  require(r.size() >= 64, "fractal measures need n >= 64");
  if (!(stats::sd(r) > 0.0)) {
    warn(diag, "fractal: constant series, Hurst set to 0.5");
    return {1.0, 0.5};
  }
  return {sevcik_dimension(r), hurst_rs(r)};
}

NamedValues Dfa::named() const { return {{"DFA_alpha1", alpha1}, {"DFA_alpha2", alpha2}}; }

double dfa_fluctuation(std::span<const double> x, std::size_t box) {
  const std::size_t n = x.size();
  if (box < 3 || box > n) throw Error(ErrorKind::contract, "DFA box size out of range");
  const double m = stats::mean(x);
  std::vector<double> y(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) y[i] = acc += x[i] - m;

  // Closed-form linear fit on t = 0..box-1.
  const double b = static_cast<double>(box);
  const double tbar = (b - 1.0) / 2.0;
  const double stt = b * (b * b - 1.0) / 12.0;
  const std::size_t boxes = n / box;
  double total = 0.0;
  for (std::size_t k = 0; k < boxes; ++k) {
    const double* seg = y.data() + k * box;
    double ybar = 0.0;
    for (std::size_t t = 0; t < box; ++t) ybar += seg[t];
    ybar /= b;
    double sty = 0.0;
    for (std::size_t t = 0; t < box; ++t) sty += (static_cast<double>(t) - tbar) * (seg[t] - ybar);
    const double slope = sty / stt;
    double ss = 0.0;
    for (std::size_t t = 0; t < box; ++t) {
      const double e = seg[t] - ybar - slope * (static_cast<double>(t) - tbar);
      ss += e * e;
    }
    total += ss / b;
  }
  return std::sqrt(total / static_cast<double>(boxes));
}

Dfa dfa(std::span<const double> x) {
  const std::size_t n = x.size();
  require(n >= 100, "DFA needs n >= 100");
  auto slope = [&x](std::size_t lo, std::size_t hi) {
    std::vector<double> ls, lf;
    for (std::size_t s = lo; s <= hi; ++s) {
      const double f = dfa_fluctuation(x, s);
      if (!(f > 0.0)) continue;
      ls.push_back(std::log(static_cast<double>(s)));
      lf.push_back(std::log(f));
    }
    if (ls.size() < 2) return 0.0;
    return stats::ols_slope(ls, lf);
  };
  return {slope(4, 16), slope(16, std::min<std::size_t>(64, n / 4))};
}

Dfa dfa_rr(const rr::RRSeries& series) { return dfa(series.intervals_ms); }

// ---------------------------------------------------------------- symbolic

NamedValues Symbolic::named() const { return {{"v0", v0}, {"v2", v2}, {"c1v", c1v}, {"c3v", c3v}}; }

std::vector<int> uniform_symbols(std::span<const double> x, int levels) {
  std::vector<int> s(x.size(), 0);
  if (x.empty()) return s;
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) return s;
  for (std::size_t i = 0; i < x.size(); ++i)
    s[i] = std::min(levels - 1, static_cast<int>(std::floor((x[i] - *lo) / range * levels)));
  return s;
}

std::array<double, 3> word_variation_percentages(std::span<const int> s) {
  std::array<double, 3> pct{0.0, 0.0, 0.0};
  if (s.size() < 3) return pct;
  const std::size_t words = s.size() - 2;
  for (std::size_t i = 0; i < words; ++i) {
    const int changes = (s[i] != s[i + 1] ? 1 : 0) + (s[i + 1] != s[i + 2] ? 1 : 0);
    pct[changes] += 1.0;
  }
  for (double& p : pct) p *= 100.0 / static_cast<double>(words);
  return pct;
}

Symbolic symbolic_rr(const rr::RRSeries& series, Diagnostics* diag) {
  const auto& r = series.intervals_ms;
  require(r.size() >= 30, "symbolic dynamics needs n >= 30");
  const double mu = stats::mean(r), sigma = stats::sd(r);
  if (!(sigma > 0.0)) {
    warn(diag, "symbolic: constant series");
    return {100.0, 0.0, 0.0, 0.0};
  }
  const auto six = uniform_symbols(r, 6);
  const auto pct = word_variation_percentages(six);

  // Four levels around the mean: 0 and 2 hug the mean, 1 and 3 are the
  // excursions above and below.
  const double a = 0.05 * sigma;
  std::vector<int> four(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double v = r[i];
    four[i] = v > mu + a ? 1 : v > mu ? 0 : v > mu - a ? 2 : 3;
  }
  const std::size_t words = r.size() - 2;
  double near = 0.0, far = 0.0;
  for (std::size_t i = 0; i < words; ++i) {
    bool all_near = true, all_far = true;
    for (std::size_t k = i; k < i + 3; ++k) {
      const bool is_near = four[k] == 0 || four[k] == 2;
      all_near = all_near && is_near;
      all_far = all_far && !is_near;
    }
    near += all_near ? 1.0 : 0.0;
    far += all_far ? 1.0 : 0.0;
  }
  return {pct[0], pct[2], near / static_cast<double>(words), far / static_cast<double>(words)};
}

// ---------------------------------------------------------------- attention entropy

NamedValues AttentionEntropy::named() const {
  return {{"AttEn_maxmax", max_max},
          {"AttEn_minmin", min_min},
          {"AttEn_maxmin", max_min},
          {"AttEn_minmax", min_max},
          {"AttEn_average", average}};
}

namespace {

double interval_entropy(const std::vector<std::size_t>& gaps) {
  std::vector<std::size_t> sorted = gaps;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> counts;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    counts.push_back(static_cast<double>(j - i));
    i = j;
  }
  return shannon(counts);
}

// Distance from each `from` key point to the next `to` key point after it.
std::vector<std::size_t> next_gaps(const std::vector<std::size_t>& from,
                                   const std::vector<std::size_t>& to) {
  std::vector<std::size_t> gaps;
  for (std::size_t a : from) {
    const auto it = std::upper_bound(to.begin(), to.end(), a);
    if (it != to.end()) gaps.push_back(*it - a);
  }
  return gaps;
}

}  // namespace

AttentionEntropy attention_entropy(std::span<const double> x, Diagnostics* diag) {
  std::vector<std::size_t> maxima, minima;
  for (std::size_t i = 1; i + 1 < x.size(); ++i) {
    if (x[i] > x[i - 1] && x[i] > x[i + 1]) maxima.push_back(i);
    if (x[i] < x[i - 1] && x[i] < x[i + 1]) minima.push_back(i);
  }
  auto component = [diag](const std::vector<std::size_t>& gaps, const char* name) {
    if (gaps.empty()) {
      warn(diag, std::string("attention entropy: too few key points for ") + name);
      return 0.0;
    }
    return interval_entropy(gaps);
  };
  AttentionEntropy a{};
  a.max_max = component(maxima.size() >= 2 ? next_gaps(maxima, maxima) : std::vector<std::size_t>{},
                        "max-max");
  a.min_min = component(minima.size() >= 2 ? next_gaps(minima, minima) : std::vector<std::size_t>{},
                        "min-min");
  const bool mixed = maxima.size() >= 2 && minima.size() >= 2;
  a.max_min = component(mixed ? next_gaps(maxima, minima) : std::vector<std::size_t>{}, "max-min");
  a.min_max = component(mixed ? next_gaps(minima, maxima) : std::vector<std::size_t>{}, "min-max");
  a.average = (a.max_max + a.min_min + a.max_min + a.min_max) / 4.0;
  return a;
}

AttentionEntropy attention_entropy_rr(const rr::RRSeries& series, Diagnostics* diag) {
  require(series.size() >= 20, "attention entropy needs n >= 20");
  return attention_entropy(series.intervals_ms, diag);
}

// ---------------------------------------------------------------- RQA

NamedValues Rqa::named() const {
  return {{"rec_rate", rec_rate}, {"det", det},         {"avg_diag", avg_diag},
          {"ratio", ratio},       {"ent", ent},         {"lam", lam},
          {"trap_time", trap_time}, {"max_len", max_len}, {"mean_rec_time", mean_rec_time}};
}

std::vector<std::vector<double>> embed(std::span<const double> x, int m, int tau) {
  if (m < 1 || tau < 1) throw Error(ErrorKind::contract, "embedding needs m >= 1 and tau >= 1");
  const std::size_t span = static_cast<std::size_t>((m - 1) * tau);
  if (x.size() <= span) return {};
  std::vector<std::vector<double>> pts(x.size() - span, std::vector<double>(m));
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (int k = 0; k < m; ++k) pts[i][k] = x[i + static_cast<std::size_t>(k * tau)];
  return pts;
}

RecurrenceMatrix recurrence_matrix(const std::vector<std::vector<double>>& pts, double radius,
                                   int theiler) {
  RecurrenceMatrix r;
  r.n = pts.size();
  r.cells.assign(r.n * r.n, 0);
  for (std::size_t i = 0; i < r.n; ++i) {
    for (std::size_t j = i; j < r.n; ++j) {
      if (j - i < static_cast<std::size_t>(std::max(theiler, 0))) continue;
      double d2 = 0.0;
      for (std::size_t k = 0; k < pts[i].size(); ++k) d2 += (pts[i][k] - pts[j][k]) * (pts[i][k] - pts[j][k]);
      if (std::sqrt(d2) <= radius) r.cells[i * r.n + j] = r.cells[j * r.n + i] = 1;
    }
  }
  return r;
}

Rqa rqa_measures(const RecurrenceMatrix& r, int min_diagonal, int min_vertical) {
  const std::size_t n = r.n;
  Rqa q{};
  if (n < 2) return q;
  double points = 0.0;
  for (auto c : r.cells) points += c;
  if (!(points > 0.0)) return q;
  q.rec_rate = points / static_cast<double>(n * n - n);

  // Diagonal runs over every off-main diagonal of the full matrix.
  std::vector<double> diag_hist(n + 1, 0.0);
  for (std::size_t off = 1; off < n; ++off) {
    for (int side = 0; side < 2; ++side) {
      std::size_t run = 0;
      for (std::size_t t = 0; t + off < n; ++t) {
        const bool on = side == 0 ? r(t, t + off) : r(t + off, t);
        if (on) {
          ++run;
        } else if (run > 0) {
          diag_hist[run] += 1.0;
          run = 0;
        }
      }
      if (run > 0) diag_hist[run] += 1.0;
    }
  }
  std::vector<double> vert_hist(n + 1, 0.0);
  double white_sum = 0.0, white_count = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    std::size_t run = 0, gap = 0;
    bool seen = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (r(i, j)) {
        ++run;
        if (seen && gap > 0) {
          white_sum += static_cast<double>(gap);
          white_count += 1.0;
        }
        gap = 0;
        seen = true;
      } else {
        if (run > 0) vert_hist[run] += 1.0;
        run = 0;
        ++gap;
      }
    }
    if (run > 0) vert_hist[run] += 1.0;
  }

  double dl = 0.0, dn = 0.0, vl = 0.0, vn = 0.0;
  for (std::size_t l = static_cast<std::size_t>(std::max(min_diagonal, 1)); l <= n; ++l) {
    dl += static_cast<double>(l) * diag_hist[l];
    dn += diag_hist[l];
  }
  for (std::size_t l = static_cast<std::size_t>(std::max(min_vertical, 1)); l <= n; ++l) {
    vl += static_cast<double>(l) * vert_hist[l];
    vn += vert_hist[l];
  }
  for (std::size_t l = n; l >= 1; --l) {
    if (diag_hist[l] > 0.0) {
      q.max_len = static_cast<double>(l);
      break;
    }
  }
  q.det = dl / points;
  q.avg_diag = dn > 0.0 ? dl / dn : 0.0;
  q.ratio = q.det / q.rec_rate;
  std::vector<double> long_lines(diag_hist.begin() + std::max(min_diagonal, 1), diag_hist.end());
  q.ent = shannon(long_lines);
  q.lam = vl / points;
  q.trap_time = vn > 0.0 ? vl / vn : 0.0;
  q.mean_rec_time = white_count > 0.0 ? white_sum / white_count : 0.0;
  return q;
}

Rqa rqa_rr(const rr::RRSeries& series, const RqaOptions& opt, Diagnostics* diag) {
  const auto pts = embed(series.intervals_ms, opt.embedding_dim, opt.delay);
  require(pts.size() >= 50, "RQA needs at least 50 phase-space points");
  double dmax = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < pts[i].size(); ++k) d2 += (pts[i][k] - pts[j][k]) * (pts[i][k] - pts[j][k]);
      dmax = std::max(dmax, d2);
    }
  dmax = std::sqrt(dmax);
  // A constant series has dmax = 0; every pair then sits at distance 0 and
  // is recurrent, which keeps rec_rate = 1 rather than undefined.
  const double radius = dmax > 0.0 ? opt.radius_fraction * dmax : 1.0;
  const auto r = recurrence_matrix(pts, radius, opt.theiler);
  const Rqa q = rqa_measures(r, opt.min_diagonal, opt.min_vertical);
  if (!(q.rec_rate > 0.0)) warn(diag, "RQA: no recurrences");
  return q;
}

// ---------------------------------------------------------------- entropies

NamedValues Entropies::named() const {
  return {{"SampEn", sampen}, {"FuzzyEn", fuzzyen}, {"DistEn", disten}};
}

double sample_entropy(std::span<const double> x, int m, double r, Diagnostics* diag) {
  const std::size_t n = x.size();
  const std::size_t mm = static_cast<std::size_t>(m);
  if (n < mm + 2) throw Error(ErrorKind::insufficient_data, "sample entropy needs n >= m + 2");
  const std::size_t templates = n - mm;
  double a = 0.0, b = 0.0;
  for (std::size_t i = 0; i < templates; ++i) {
    for (std::size_t j = i + 1; j < templates; ++j) {
      bool match = true;
      for (std::size_t k = 0; k < mm && match; ++k) match = std::abs(x[i + k] - x[j + k]) <= r;
      if (!match) continue;
      b += 1.0;
      if (std::abs(x[i + mm] - x[j + mm]) <= r) a += 1.0;
    }
  }
  if (a == 0.0 || b == 0.0) {
    warn(diag, "sample entropy: no matching templates, reporting the upper bound");
    const double t = static_cast<double>(templates);
    return std::log(t * (t - 1.0) / 2.0);
  }
  return -std::log(a / b);
}

double fuzzy_entropy(std::span<const double> x, int m, double r, double gradient, Diagnostics* diag) {
  const std::size_t n = x.size();
  const std::size_t mm = static_cast<std::size_t>(m);
  if (n < mm + 3) throw Error(ErrorKind::insufficient_data, "fuzzy entropy needs n >= m + 3");
  if (!(r > 0.0)) {
    warn(diag, "fuzzy entropy: zero tolerance");
    return 0.0;
  }
  const std::size_t templates = n - mm;
  auto phi = [&](std::size_t dim) {
    std::vector<std::vector<double>> t(templates, std::vector<double>(dim));
    for (std::size_t i = 0; i < templates; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < dim; ++k) s += x[i + k];
      s /= static_cast<double>(dim);
      for (std::size_t k = 0; k < dim; ++k) t[i][k] = x[i + k] - s;
    }
    double total = 0.0;
    for (std::size_t i = 0; i < templates; ++i)
      for (std::size_t j = i + 1; j < templates; ++j)
        total += 2.0 * std::exp(-std::pow(chebyshev(t[i], t[j]), gradient) / r);
    const double tt = static_cast<double>(templates);
    return total / (tt * (tt - 1.0));
  };
  return std::log(phi(mm)) - std::log(phi(mm + 1));
}

double distribution_entropy(std::span<const double> x, int m, int tau, int bins) {
  const auto pts = embed(x, m, tau);
  if (pts.size() < 2) throw Error(ErrorKind::insufficient_data, "distribution entropy needs two templates");
  std::vector<double> d;
  d.reserve(pts.size() * (pts.size() - 1) / 2);
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j) d.push_back(chebyshev(pts[i], pts[j]));
  const auto [lo, hi] = std::minmax_element(d.begin(), d.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) return 0.0;
  std::vector<double> hist(static_cast<std::size_t>(bins), 0.0);
  for (double v : d)
    hist[std::min<std::size_t>(bins - 1, static_cast<std::size_t>((v - *lo) / range * bins))] += 1.0;
  return shannon(hist) / std::log(static_cast<double>(bins));
}

Entropies entropy_rr(const rr::RRSeries& series, Diagnostics* diag) {
  const auto& x = series.intervals_ms;
  require(x.size() >= 100, "entropy measures need n >= 100");
  const double r = 0.2 * stats::sd(x);
  return {sample_entropy(x, 2, r, diag), fuzzy_entropy(x, 2, r, 2.0, diag),
          distribution_entropy(x, 2, 1, 512)};
}

// ---------------------------------------------------------------- bispectrum

BispectrumGrid bispectrum(const rr::UniformSeries& u, double max_hz, double segment_s, double overlap) {
  const std::size_t seg = static_cast<std::size_t>(std::lround(segment_s * u.fs));
  const std::size_t step = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(seg * (1.0 - overlap))));
  if (seg < 4 || u.values.size() < seg)
    throw Error(ErrorKind::insufficient_data, "bispectrum needs at least one full segment");
  const std::size_t nfft = signal::next_pow2(seg);
  const double df = u.fs / static_cast<double>(nfft);
  const int kmax = static_cast<int>(std::floor(max_hz / df + 1e-9));

  BispectrumGrid g;
  g.df = df;
  for (int k1 = 1; k1 <= kmax; ++k1)
    for (int k2 = 1; k2 <= k1; ++k2)
      if (static_cast<std::size_t>(k1 + k2) <= nfft / 2) {
        g.k1.push_back(k1);
        g.k2.push_back(k2);
      }
  g.value.assign(g.k1.size(), {0.0, 0.0});

  const auto w = signal::hann(seg);
  std::size_t count = 0;
  std::vector<double> buf(seg);
  for (std::size_t start = 0; start + seg <= u.values.size(); start += step) {
    const std::span<const double> part(u.values.data() + start, seg);
    const double m = stats::mean(part);
    for (std::size_t i = 0; i < seg; ++i) buf[i] = (part[i] - m) * w[i];
    const auto X = signal::rfft(buf, nfft);
    for (std::size_t p = 0; p < g.k1.size(); ++p)
      g.value[p] += X[g.k1[p]] * X[g.k2[p]] * std::conj(X[g.k1[p] + g.k2[p]]);
    ++count;
  }
  for (auto& v : g.value) v /= static_cast<double>(count);
  return g;
}

NamedValues Bispectral::named() const {
  return {{"Phase_Entr", phase_entropy}, {"Mean_Magn", mean_magnitude}, {"Mean_P", mean_power},
          {"std_P", std_power},          {"N_Bis_Ent", norm_entropy},   {"N_Bis_Sq_Ent", norm_sq_entropy},
          {"Sum_log_Amp", sum_log_amp},  {"LL_RR", ll},                 {"LH_RR", lh},
          {"HH_RR", hh}};
}

Bispectral bispectral_rr(const rr::UniformSeries& u, const SpectralBands& bands) {
  require(u.duration() >= 60.0 - 1e-9, "bispectrum needs >= 60 s of resampled RR");
  const auto g = bispectrum(u);
  const std::size_t np = g.value.size();
  std::vector<double> mag(np), pow2(np);
  for (std::size_t p = 0; p < np; ++p) {
    mag[p] = std::abs(g.value[p]);
    pow2[p] = mag[p] * mag[p];
  }
  const double peak = np ? *std::max_element(mag.begin(), mag.end()) : 0.0;
  if (!(peak > 0.0)) throw Error(ErrorKind::degenerate_signal, "bispectrum is identically zero");

  Bispectral b{};
  std::vector<double> phase_hist(64, 0.0);
  for (const auto& v : g.value) {
    // Map (-pi, pi] onto 64 bins; atan2 returns -pi only for negative-zero
    // imaginary parts, which fold into the last bin.
    double ph = std::arg(v);
    if (ph <= -std::numbers::pi) ph = std::numbers::pi;
    const double pos = (ph + std::numbers::pi) / (2.0 * std::numbers::pi) * 64.0;
    const auto bin = std::clamp<long>(static_cast<long>(std::ceil(pos)) - 1, 0, 63);
    phase_hist[static_cast<std::size_t>(bin)] += 1.0;
  }
  b.phase_entropy = shannon(phase_hist);
  b.mean_magnitude = stats::mean(mag);
  b.mean_power = stats::mean(pow2);
  b.std_power = stats::sd(pow2);
  const double ln_n = std::log(static_cast<double>(np));
  b.norm_entropy = np > 1 ? shannon(mag) / ln_n : 0.0;
  b.norm_sq_entropy = np > 1 ? shannon(pow2) / ln_n : 0.0;
  for (double m : mag) b.sum_log_amp += std::log(std::max(m, std::numeric_limits<double>::min()));

  auto in = [](double f, const Band& band) { return f >= band.lo && f <= band.hi; };
  double sums[3] = {0, 0, 0}, counts[3] = {0, 0, 0};
  for (std::size_t p = 0; p < np; ++p) {
    const double f1 = g.k1[p] * g.df, f2 = g.k2[p] * g.df;  // f2 <= f1
    int region = -1;
    if (in(f1, bands.lf) && in(f2, bands.lf)) region = 0;
    else if (in(f1, bands.hf) && in(f2, bands.lf)) region = 1;
    else if (in(f1, bands.hf) && in(f2, bands.hf)) region = 2;
    if (region < 0) continue;
    sums[region] += mag[p];
    counts[region] += 1.0;
  }
  b.ll = counts[0] > 0 ? sums[0] / counts[0] : 0.0;
  b.lh = counts[1] > 0 ? sums[1] / counts[1] : 0.0;
  b.hh = counts[2] > 0 ? sums[2] / counts[2] : 0.0;
  return b;
}

// ---------------------------------------------------------------- visibility graph

NamedValues VisibilityGraph::named() const {
  return {{"ShortPathLen", short_path_len},
          {"GlobClusterCoef", glob_cluster},
          {"LocalClusterCoef_mean", local_cluster_mean},
          {"Degree_mean", degree_mean}};
}

std::vector<Edge> visibility_edges(std::span<const double> y) {
  // b is visible from a exactly when the slope a->b beats every slope a->c
  // for a < c < b, so one running maximum per anchor suffices.
  std::vector<Edge> edges;
  for (std::size_t a = 0; a < y.size(); ++a) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t b = a + 1; b < y.size(); ++b) {
      const double slope = (y[b] - y[a]) / static_cast<double>(b - a);
      if (slope > best) edges.emplace_back(a, b);
      best = std::max(best, slope);
    }
  }
  return edges;
}

VisibilityGraph graph_metrics(std::size_t n, const std::vector<Edge>& edges) {
  VisibilityGraph g{};
  if (n < 2) return g;
  std::vector<std::vector<std::size_t>> adj(n);
  std::vector<std::uint8_t> m(n * n, 0);
  for (const auto& [a, b] : edges) {
    if (a == b || m[a * n + b]) continue;
    m[a * n + b] = m[b * n + a] = 1;
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  double deg_sum = 0.0, local_sum = 0.0, tri = 0.0, triples = 0.0;
  for (std::size_t v = 0; v < n; ++v) {
    const double k = static_cast<double>(adj[v].size());
    deg_sum += k;
    double links = 0.0;
    for (std::size_t i = 0; i < adj[v].size(); ++i)
      for (std::size_t j = i + 1; j < adj[v].size(); ++j) links += m[adj[v][i] * n + adj[v][j]];
    const double pairs = k * (k - 1.0) / 2.0;
    if (pairs > 0.0) local_sum += links / pairs;
    tri += links;
    triples += pairs;
  }
  g.degree_mean = deg_sum / static_cast<double>(n);
  g.local_cluster_mean = local_sum / static_cast<double>(n);
  g.glob_cluster = triples > 0.0 ? tri / triples : 0.0;

  double dist_sum = 0.0, reach = 0.0;
  std::vector<long> dist(n);
  for (std::size_t s = 0; s < n; ++s) {
    std::fill(dist.begin(), dist.end(), -1);
    std::queue<std::size_t> q;
    dist[s] = 0;
    q.push(s);
    while (!q.empty()) {
      const std::size_t v = q.front();
      q.pop();
      for (std::size_t w : adj[v])
        if (dist[w] < 0) {
          dist[w] = dist[v] + 1;
          dist_sum += static_cast<double>(dist[w]);
          reach += 1.0;
          q.push(w);
        }
    }
  }
  g.short_path_len = reach > 0.0 ? dist_sum / reach : 0.0;
  return g;
}

VisibilityGraph visibility_rr(const rr::RRSeries& series) {
  const auto& x = series.intervals_ms;
  require(x.size() >= 2, "visibility graph needs n >= 2");
  return graph_metrics(x.size(), visibility_edges(x));
}

// ---------------------------------------------------------------- ComEDA

NamedValues ComEda::named() const { return {{"ComEDA", comeda}, {"MComEDA", mcomeda}}; }

int first_ami_minimum(std::span<const double> x, int max_lag, int bins) {
  const std::size_t n = x.size();
  max_lag = std::max(1, std::min<int>(max_lag, static_cast<int>(n) - 3));
  if (max_lag < 1) return 1;
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) return 1;
  std::vector<int> sym(n);
  for (std::size_t i = 0; i < n; ++i)
    sym[i] = std::min(bins - 1, static_cast<int>((x[i] - *lo) / range * bins));

  const std::size_t nb = static_cast<std::size_t>(bins);
  auto ami = [&](int lag) {
    const std::size_t pairs = n - static_cast<std::size_t>(lag);
    std::vector<double> joint(nb * nb, 0.0), pa(nb, 0.0), pb(nb, 0.0);
    for (std::size_t i = 0; i < pairs; ++i) {
      const auto a = static_cast<std::size_t>(sym[i]);
      const auto b = static_cast<std::size_t>(sym[i + lag]);
      joint[a * nb + b] += 1.0;
      pa[a] += 1.0;
      pb[b] += 1.0;
    }
    const double total = static_cast<double>(pairs);
    double mi = 0.0;
    for (std::size_t a = 0; a < nb; ++a)
      for (std::size_t b = 0; b < nb; ++b) {
        const double pj = joint[a * nb + b];
        if (pj > 0.0) mi += pj / total * std::log(pj * total / (pa[a] * pb[b]));
      }
    return mi;
  };
  double prev = ami(0), cur = ami(1);
  for (int lag = 1; lag <= max_lag; ++lag) {
    const double next = ami(lag + 1);
    if (cur < prev && cur <= next) return lag;
    prev = cur;
    cur = next;
  }
  return max_lag;
}

double comeda_value(std::span<const double> x, double fs, const ComEdaOptions& opt, Diagnostics* diag) {
  if (!(stats::sd(x) > 0.0)) {
    warn(diag, "ComEDA: constant SCR");
    return 0.0;
  }
  const int max_lag = std::max(1, static_cast<int>(std::lround(opt.max_delay_s * fs)));
  const int tau = first_ami_minimum(x, max_lag, opt.ami_bins);
  const auto pts = embed(x, opt.embedding_dim, tau);
  if (pts.size() < 2) throw Error(ErrorKind::insufficient_data, "ComEDA embedding has fewer than 2 points");

  // Two passes keep memory linear: range first, then the histogram.
  const std::size_t np = pts.size();
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (std::size_t i = 0; i < np; ++i)
    for (std::size_t j = i + 1; j < np; ++j) {
      const double d = chebyshev(pts[i], pts[j]);
      lo = std::min(lo, d);
      hi = std::max(hi, d);
    }
  if (!(hi > lo)) {
    warn(diag, "ComEDA: all phase-space distances equal");
    return 0.0;
  }
  const std::size_t nb = static_cast<std::size_t>(opt.bins);
  std::vector<double> hist(nb, 0.0);
  const double scale = static_cast<double>(nb) / (hi - lo);
  for (std::size_t i = 0; i < np; ++i)
    for (std::size_t j = i + 1; j < np; ++j)
      hist[std::min(nb - 1, static_cast<std::size_t>((chebyshev(pts[i], pts[j]) - lo) * scale))] += 1.0;
  return shannon(hist) / std::log(static_cast<double>(nb));
}

double multiscale_comeda(std::span<const double> x, double fs, std::span<const int> scales,
                         const ComEdaOptions& opt, Diagnostics* diag) {
  if (scales.empty()) throw Error(ErrorKind::contract, "multiscale ComEDA needs at least one scale");
  std::vector<double> values;
  for (int s : scales) {
    if (s < 1) throw Error(ErrorKind::contract, "coarse-graining scale must be >= 1");
    const std::size_t ss = static_cast<std::size_t>(s);
    std::vector<double> y(x.size() / ss);
    for (std::size_t j = 0; j < y.size(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < ss; ++k) acc += x[j * ss + k];
      y[j] = acc / static_cast<double>(ss);
    }
    values.push_back(comeda_value(y, fs / s, opt, diag));
  }
  return stats::median(values);
}

ComEda comeda(std::span<const double> scr, double fs, const ComEdaOptions& opt, Diagnostics* diag) {
  require(static_cast<double>(scr.size()) >= 60.0 * fs - 1e-9, "ComEDA needs >= 60 s of SCR");
  std::vector<double> values;
  for (int s = 1; s <= opt.max_scale; ++s) {
    const int one[] = {s};
    values.push_back(multiscale_comeda(scr, fs, one, opt, diag));
  }
  return {values.front(), stats::median(values)};
}

}  // namespace physio::features
