#include "physio/extractor.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>

namespace physio::extract {

void TimingCounters::add(FeatureFamily family, double seconds) {
  const auto i = static_cast<std::size_t>(family);
  std::lock_guard lock(mutex_);
  seconds_[i] += seconds;
  ++calls_[i];
}

std::vector<TimingCounters::Entry> TimingCounters::snapshot() const {
  std::lock_guard lock(mutex_);
  std::vector<Entry> out;
  for (std::size_t i = 0; i < kFamilyCount; ++i)
    out.push_back({static_cast<FeatureFamily>(i), seconds_[i], calls_[i]});
  return out;
}

std::vector<double> extract_features(const WindowInput& in, const ExtractorOptions& opt, Diagnostics* diag,
                                     TimingCounters* timing) {
  using F = FeatureFamily;
  namespace fx = features;
  const auto& reg = feature_registry();
  std::vector<double> values(reg.size(), std::numeric_limits<double>::quiet_NaN());

  auto run = [&](F family, const std::function<NamedValues()>& fn) {
    const auto start = std::chrono::steady_clock::now();
    try {
      for (const auto& [name, v] : fn()) values[feature_index(name)] = v;
    } catch (const std::exception& e) {
      warn(diag, std::string(to_string(family)) + ": " + e.what());
    }
    if (timing != nullptr)
      timing->add(family, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  };
  auto value = [&](const char* name) { return values[feature_index(name)]; };

  if (in.rr) {
    const rr::RRSeries& r = *in.rr;
    std::optional<rr::UniformSeries> u;
    std::string u_error;
    try {
      u = rr::resample_rr(r, opt.rr_resample_hz);
    } catch (const std::exception& e) {
      u_error = e.what();
    }
    auto need_u = [&]() -> const rr::UniformSeries& {
      if (!u) throw Error(ErrorKind::dependency, "RR resampling failed: " + u_error);
      return *u;
    };
    run(F::rr_temporal, [&] { return fx::temporal_rr(r).named(); });
    run(F::rr_geometric, [&] { return fx::geometric_rr(r).named(); });
    run(F::rr_frequency, [&] { return fx::spectral_rr(need_u(), opt.bands, opt.welch, diag).named(); });
    run(F::lagged_poincare, [&] { return fx::lagged_poincare(r, diag).named(); });
    run(F::fractal, [&] { return fx::fractal_rr(r, diag).named(); });
    run(F::dfa, [&] { return fx::dfa_rr(r).named(); });
    run(F::symbolic, [&] { return fx::symbolic_rr(r, diag).named(); });
    run(F::attention_entropy, [&] { return fx::attention_entropy_rr(r, diag).named(); });
    run(F::rqa, [&] { return fx::rqa_rr(r, opt.rqa, diag).named(); });
    run(F::entropy, [&] { return fx::entropy_rr(r, diag).named(); });
    run(F::bispectrum, [&] { return fx::bispectral_rr(need_u(), opt.bands).named(); });
    run(F::visibility_graph, [&] { return fx::visibility_rr(r).named(); });
  } else {
    warn(diag, "RR features unavailable: " + in.rr_error);
  }

  if (in.eda) {
    const eda::EdaComponents& c = *in.eda;
    run(F::scl_temporal, [&] { return fx::scl_features(c.scl, c.fs, opt.scl_window_s).named(); });
    run(F::scr_temporal, [&] { return fx::scr_features(c.scr, c.fs, opt.scr_window_s, opt.peaks).named(); });
    run(F::smna_temporal, [&] { return fx::smna_features(c.smna, c.fs, opt.peaks).named(); });
    run(F::eda_frequency, [&] { return fx::edasymp_features(c.scl, c.scr, c.fs, opt.bands, opt.welch).named(); });
    run(F::comeda, [&] { return fx::comeda(c.scr, c.fs, opt.comeda, diag).named(); });
  } else {
    warn(diag, "EDA features unavailable: " + in.eda_error);
  }

  run(F::combined, [&] {
    const double es = value("EDASymp"), esw = value("EDASymp_Welch"), hf = value("HF_power");
    if (std::isnan(es) || std::isnan(esw) || std::isnan(hf))
      throw Error(ErrorKind::dependency, "needs EDASymp and HF_power");
    return fx::combined_ratios(es, esw, hf).named();
  });
  return values;
}

RecordingSignals prepare_recording(const dataset::SessionRecording& rec, const ExtractorOptions& opt) {
  RecordingSignals sig;
  const auto ecg = rec.channels.find("ecg");
  if (ecg == rec.channels.end()) {
    sig.rr_error = "no ECG channel";
  } else {
    try {
      sig.beat_times_s = rr::detect_r_peaks(ecg->second, rec.fs_phys, opt.detector);
      for (double& t : sig.beat_times_s) t += rec.t0;
    } catch (const std::exception& e) {
      sig.rr_error = e.what();
    }
  }
  const auto eda_raw = rec.channels.find("eda");
  if (eda_raw == rec.channels.end()) {
    sig.eda_error = "no EDA channel";
  } else if (!opt.eda_per_window) {
    try {
      const auto x = eda::normalize_and_decimate(eda_raw->second, rec.fs_phys);
      sig.eda = eda::cvxeda_decompose(x, opt.cvxeda, opt.eda_fs);
    } catch (const std::exception& e) {
      sig.eda_error = e.what();
    }
  }
  return sig;
}

rr::RRSeries window_rr(std::span<const double> beats, double t_begin, double t_end) {
  std::vector<double> inside;
  for (double t : beats)
    if (t >= t_begin && t < t_end) inside.push_back(t);
  return rr::build_rr(inside);
}

eda::EdaComponents slice_components(const eda::EdaComponents& c, std::size_t begin, std::size_t end) {
  if (begin > end || end > c.scl.size()) throw Error(ErrorKind::contract, "component slice out of range");
  auto cut = [&](const std::vector<double>& x) {
    return std::vector<double>(x.begin() + static_cast<std::ptrdiff_t>(begin),
                               x.begin() + static_cast<std::ptrdiff_t>(end));
  };
  eda::EdaComponents s = c;
  s.scl = cut(c.scl);
  s.scr = cut(c.scr);
  s.smna = cut(c.smna);
  s.residual = cut(c.residual);
  return s;
}

WindowInput window_input(const RecordingSignals& sig, const dataset::SessionRecording& rec,
                         const dataset::SessionWindow& w, const ExtractorOptions& opt) {
  WindowInput in;
  if (sig.rr_error.empty()) {
    try {
      auto r = window_rr(sig.beat_times_s, w.t_begin, w.t_end);
      in.rr = opt.ectopic_filter ? rr::filter_ectopic(r) : std::move(r);
    } catch (const std::exception& e) {
      in.rr_error = e.what();
    }
  } else {
    in.rr_error = sig.rr_error;
  }

  if (opt.eda_per_window) {
    try {
      const auto x = eda::normalize_and_decimate(w.eda, rec.fs_phys);
      in.eda = eda::cvxeda_decompose(x, opt.cvxeda, opt.eda_fs);
    } catch (const std::exception& e) {
      in.eda_error = e.what();
    }
  } else if (sig.eda) {
    // Decimated sample k sits at raw sample k * ratio.
    const double ratio = rec.fs_phys / opt.eda_fs;
    const auto end = std::min(sig.eda->scl.size(), static_cast<std::size_t>(std::floor(w.phys_end / ratio)));
    const auto len = static_cast<std::size_t>(std::lround((w.t_end - w.t_begin) * opt.eda_fs));
    if (end < len) {
      in.eda_error = "EDA decomposition does not cover the window";
    } else {
      in.eda = slice_components(*sig.eda, end - len, end);
    }
  } else {
    in.eda_error = sig.eda_error;
  }
  return in;
}

}  // namespace physio::extract
