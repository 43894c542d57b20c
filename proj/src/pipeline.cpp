#include "physio/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include "physio/svg.hpp"
#include "physio/synth.hpp"

namespace physio::pipeline {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Reads keys from `in` (may be null) and echoes the resolved value into `out`.
class Section {
 public:
  Section(const json* in, json& out, std::string where) : in_(in), out_(out), where_(std::move(where)) {
    if (in_ != nullptr && !in_->is_object())
      throw Error(ErrorKind::config, (where_.empty() ? "configuration" : where_) + " must be a JSON object");
    out_ = json::object();
  }

  template <class T>
  Section& field(const char* key, T& value) {
    if (const json* v = find(key)) {
      try {
        value = v->get<T>();
      } catch (const json::exception& e) {
        throw Error(ErrorKind::config, path(key) + ": " + e.what());
      }
    }
    out_[key] = value;
    return *this;
  }

  Section& field(const char* key, features::Band& band) {
    std::vector<double> edges{band.lo, band.hi};
    field(key, edges);
    if (edges.size() != 2 || !(edges[0] >= 0.0 && edges[1] > edges[0]))
      throw Error(ErrorKind::config, path(key) + " must be [lo, hi] with 0 <= lo < hi");
    band = {edges[0], edges[1]};
    return *this;
  }

  Section& field(const char* key, char& c) {
    std::string s(1, c);
    field(key, s);
    if (s.size() != 1) throw Error(ErrorKind::config, path(key) + " must be a single character");
    c = s[0];
    return *this;
  }

  Section sub(const char* key) {
    const json* v = find(key);
    return Section(v, out_[key], path(key));
  }

  const json* raw(const char* key) { return find(key); }

  void finish() const {
    if (in_ == nullptr) return;
    for (auto it = in_->begin(); it != in_->end(); ++it)
      if (!seen_.count(it.key())) throw Error(ErrorKind::config, "unknown configuration key '" + path(it.key().c_str()) + "'");
  }

  std::string path(const char* key) const { return where_.empty() ? key : where_ + "." + key; }

 private:
  const json* find(const char* key) {
    seen_.insert(key);
    if (in_ == nullptr || !in_->contains(key) || (*in_)[key].is_null()) return nullptr;
    return &(*in_)[key];
  }

  const json* in_;
  json& out_;
  std::string where_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorKind::config, what);
}

std::string resolve(const std::string& base, const std::string& p) {
  if (p.empty() || fs::path(p).is_absolute()) return p;
  return (fs::path(base) / p).lexically_normal().string();
}

template <class T>
std::string fmt(const char* f, T v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::config, "cannot write '" + path.string() + "'");
  out << text;
}

json read_json(const fs::path& path, const char* stage) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(ErrorKind::dependency,
                path.filename().string() + " not found in " + path.parent_path().string() + "; run the " + stage +
                    " stage first");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::data, path.string() + ": " + e.what());
  }
}

dataset::FeatureTable read_stage_features(const PipelineConfig& cfg) {
  const fs::path p = fs::path(cfg.output_dir) / "features.csv";
  if (!fs::exists(p))
    throw Error(ErrorKind::dependency, "features.csv not found in " + cfg.output_dir + "; run the extract stage first");
  return dataset::read_features_csv(p.string());
}

}  // namespace

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

PipelineConfig parse_config(const json& j, const std::string& base_dir, const Overrides& ov, bool check_paths) {
  PipelineConfig c;
  json echo;
  Section root(&j, echo, "");

  // Participants are an array and handled by hand.
  echo["participants"] = json::array();
  if (const json* parts = root.raw("participants")) {
    require(parts->is_array(), "participants must be an array");
    for (const auto& pj : *parts) {
      json pe;
      Section s(&pj, pe, "participants[]");
      dataset::RecordingFiles f;
      s.field("id", f.participant_id).field("physio", f.physio_path).field("annotations", f.annotation_path);
      s.finish();
      require(!f.participant_id.empty(), "participant without an id");
      require(!f.physio_path.empty(), "participant " + f.participant_id + " has no physio file");
      f.physio_path = resolve(base_dir, f.physio_path);
      f.annotation_path = resolve(base_dir, f.annotation_path);
      c.participants.push_back(f);
      echo["participants"].push_back(pe);
    }
  }

  auto& m = c.mapping;
  root.sub("mapping")
      .field("physio_time", m.physio_time)
      .field("ecg", m.ecg)
      .field("eda", m.eda)
      .field("physio_video", m.physio_video)
      .field("annot_time", m.annot_time)
      .field("arousal", m.arousal)
      .field("annot_video", m.annot_video)
      .field("time_scale", m.time_scale)
      .field("delimiter", m.delimiter)
      .finish();

  root.field("fs_phys", c.fs_phys).field("fs_annot", c.fs_annot).field("window_s", c.window_s);
  root.field("videos", c.videos).field("video_classes", c.video_classes).field("class_colors", c.class_colors);

  auto& x = c.extractor;
  {
    Section f = root.sub("features");
    f.field("scl_window_s", x.scl_window_s)
        .field("scr_window_s", x.scr_window_s)
        .field("rr_resample_hz", x.rr_resample_hz)
        .field("ectopic_filter", x.ectopic_filter)
        .field("eda_per_window", x.eda_per_window)
        .field("eda_fs", x.eda_fs);
    f.sub("bands")
        .field("lf", x.bands.lf)
        .field("hf", x.bands.hf)
        .field("total_lo", x.bands.total_lo)
        .field("eda_symp", x.bands.eda_symp)
        .field("eda_total_lo", x.bands.eda_total_lo)
        .finish();
    f.sub("welch")
        .field("segment_seconds", x.welch.segment_seconds)
        .field("overlap", x.welch.overlap)
        .field("nfft", x.welch.nfft)
        .finish();
    f.sub("peaks")
        .field("min_prominence", x.peaks.min_prominence)
        .field("min_separation_s", x.peaks.min_separation_s)
        .finish();
    f.sub("rqa")
        .field("embedding_dim", x.rqa.embedding_dim)
        .field("delay", x.rqa.delay)
        .field("radius_fraction", x.rqa.radius_fraction)
        .field("theiler", x.rqa.theiler)
        .field("min_diagonal", x.rqa.min_diagonal)
        .field("min_vertical", x.rqa.min_vertical)
        .finish();
    f.sub("comeda")
        .field("embedding_dim", x.comeda.embedding_dim)
        .field("max_delay_s", x.comeda.max_delay_s)
        .field("bins", x.comeda.bins)
        .field("ami_bins", x.comeda.ami_bins)
        .field("max_scale", x.comeda.max_scale)
        .finish();
    f.sub("detector")
        .field("band_low_hz", x.detector.band_low_hz)
        .field("band_high_hz", x.detector.band_high_hz)
        .field("integration_window_s", x.detector.integration_window_s)
        .field("refractory_s", x.detector.refractory_s)
        .field("twave_window_s", x.detector.twave_window_s)
        .field("searchback_factor", x.detector.searchback_factor)
        .finish();
    f.finish();
  }
  root.sub("cvxeda")
      .field("tau0", x.cvxeda.tau0)
      .field("tau1", x.cvxeda.tau1)
      .field("delta_knot", x.cvxeda.delta_knot)
      .field("alpha_sparse", x.cvxeda.alpha_sparse)
      .field("gamma_tonic", x.cvxeda.gamma_tonic)
      .field("max_iterations", x.cvxeda.max_iterations)
      .field("tolerance", x.cvxeda.tolerance)
      .finish();

  auto& so = c.selector;
  so.alpha_grid = {0.05, 0.10, 0.15, 0.20, 0.25};
  {
    // Overrides are applied to the raw section so the echo shows them.
    json sel = j.contains("selector") && j["selector"].is_object() ? j["selector"] : json::object();
    if (j.contains("selector") && !j["selector"].is_object())
      throw Error(ErrorKind::config, "selector must be a JSON object");
    if (ov.alpha) sel["alpha"] = *ov.alpha;
    if (ov.alpha_grid) sel["alpha_grid"] = *ov.alpha_grid;
    if (ov.K) sel["K"] = *ov.K;
    if (ov.seed) sel["seed"] = *ov.seed;
    if (ov.variant) sel["variant"] = *ov.variant;
    root.raw("selector");
    Section s(&sel, echo["selector"], "selector");
    std::string variant = trex::to_string(so.variant);
    s.field("alpha", so.alpha)
        .field("alpha_grid", so.alpha_grid)
        .field("K", so.K)
        .field("seed", so.seed)
        .field("variant", variant)
        .field("rho_grid", so.rho_grid)
        .field("max_T", so.max_T)
        .field("max_L_factor", so.max_L_factor)
        .field("stall_limit", so.stall_limit)
        .finish();
    try {
      so.variant = trex::parse_variant(variant);
    } catch (const Error& e) {
      throw Error(ErrorKind::config, std::string("selector.variant: ") + e.what());
    }
  }

  root.sub("model")
      .field("robust", c.model.robust)
      .field("huber_k", c.model.huber.k)
      .field("tolerance", c.model.huber.tol)
      .field("max_iterations", c.model.huber.max_iter)
      .field("significance", c.model.significance)
      .finish();

  auto& sy = c.synth;
  root.sub("synth")
      .field("families", sy.families)
      .field("alphas", sy.alphas)
      .field("variants", sy.variants)
      .field("reps", sy.reps)
      .field("n", sy.n)
      .field("p", sy.p)
      .field("n_true", sy.n_true)
      .field("target_corr", sy.target_corr)
      .field("ar_rho", sy.ar_rho)
      .field("duplicate_sd", sy.duplicate_sd)
      .field("seed", sy.seed)
      .finish();

  root.field("output_dir", c.output_dir).field("threads", c.threads);
  root.finish();
  if (ov.output_dir) {
    c.output_dir = *ov.output_dir;
    echo["output_dir"] = c.output_dir;
  } else {
    c.output_dir = resolve(base_dir, c.output_dir);
  }
  if (ov.threads) {
    c.threads = *ov.threads;
    echo["threads"] = c.threads;
  }

  require(c.fs_phys > 0 && c.fs_annot > 0, "sampling rates must be positive");
  require(c.window_s > 0, "window_s must be positive");
  require(m.time_scale > 0, "mapping.time_scale must be positive");
  require(x.eda_fs > 0 && std::abs(std::round(c.fs_phys / x.eda_fs) - c.fs_phys / x.eda_fs) < 1e-9,
          "features.eda_fs must divide fs_phys");
  require(so.alpha > 0 && so.alpha < 1, "selector.alpha must lie in (0, 1)");
  for (double a : so.alpha_grid) require(a > 0 && a < 1, "selector.alpha_grid entries must lie in (0, 1)");
  require(so.K >= 2, "selector.K must be >= 2");
  require(so.max_L_factor >= 1, "selector.max_L_factor must be >= 1");
  require(so.stall_limit >= 1, "selector.stall_limit must be >= 1");
  for (double r : so.rho_grid) require(r > 0 && r <= 1, "selector.rho_grid entries must lie in (0, 1]");
  require(c.model.significance > 0 && c.model.significance < 1, "model.significance must lie in (0, 1)");
  require(c.model.huber.k > 0 && c.model.huber.max_iter >= 1, "model Huber settings out of range");
  require(sy.reps >= 1, "synth.reps must be >= 1");
  for (double a : sy.alphas) require(a > 0 && a < 1, "synth.alphas entries must lie in (0, 1)");
  for (const auto& f : sy.families) synth::parse_correlation(f);
  for (const auto& v : sy.variants) {
    try {
      trex::parse_variant(v);
    } catch (const Error& e) {
      throw Error(ErrorKind::config, std::string("synth.variants: ") + e.what());
    }
  }
  std::set<std::string> seen_videos, seen_ids;
  for (const auto& v : c.videos) require(seen_videos.insert(v).second, "video '" + v + "' listed twice");
  for (const auto& p : c.participants)
    require(seen_ids.insert(p.participant_id).second, "participant '" + p.participant_id + "' listed twice");
  if (check_paths)
    for (const auto& p : c.participants) {
      require(fs::exists(p.physio_path), "file not found: " + p.physio_path);
      require(p.annotation_path.empty() || fs::exists(p.annotation_path), "file not found: " + p.annotation_path);
    }
  c.selector.threads = c.threads;
  c.selector.seed = so.seed;

  c.echo = echo;
  json hashed = echo;
  hashed.erase("threads");
  hashed.erase("output_dir");
  c.hash = fnv1a_hex(hashed.dump());
  return c;
}

PipelineConfig load_config(const std::string& path, const Overrides& ov, bool check_paths) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::config, "cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::config, path + ": " + e.what());
  }
  const fs::path base = fs::absolute(path).parent_path();
  return parse_config(j, base.string(), ov, check_paths);
}

int cmd_extract(const PipelineConfig& cfg, std::ostream& log) {
  if (cfg.participants.empty()) throw Error(ErrorKind::config, "no participants configured");
  if (cfg.videos.empty()) throw Error(ErrorKind::config, "no videos configured");
  fs::create_directories(cfg.output_dir);

  struct Outcome {
    std::vector<dataset::DesignRow> rows;
    std::vector<std::string> messages;
    std::size_t skipped = 0;
  };
  std::vector<Outcome> outcomes(cfg.participants.size());
  extract::TimingCounters timing;
  const auto& opt = cfg.extractor;

  parallel_for(cfg.participants.size(), cfg.threads ? cfg.threads : default_threads(), [&](std::size_t i) {
    Outcome& out = outcomes[i];
    const auto& files = cfg.participants[i];
    const std::string& pid = files.participant_id;
    dataset::SessionRecording rec;
    try {
      rec = dataset::load_recording(files, cfg.mapping, cfg.fs_phys, cfg.fs_annot);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::config) throw;
      out.messages.push_back(pid + ": recording skipped: " + e.what());
      out.skipped += cfg.videos.size();
      return;
    }
    const auto sig = extract::prepare_recording(rec, opt);
    if (!sig.rr_error.empty()) out.messages.push_back(pid + ": RR unavailable: " + sig.rr_error);
    if (!opt.eda_per_window && !sig.eda) out.messages.push_back(pid + ": EDA unavailable: " + sig.eda_error);

    for (const auto& video : cfg.videos) {
      const std::string where = pid + "/" + video;
      dataset::SessionWindow w;
      double response = 0.0;
      try {
        w = dataset::extract_window(rec, video, cfg.window_s);
        response = dataset::compute_response(w);
      } catch (const Error& e) {
        out.messages.push_back(where + ": row skipped: " + e.what());
        ++out.skipped;
        continue;
      }
      Diagnostics diag;
      const auto values = extract::extract_features(extract::window_input(sig, rec, w, opt), opt, &diag, &timing);
      for (const auto& msg : diag.warnings()) out.messages.push_back(where + ": " + msg);
      if (std::none_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); })) {
        out.messages.push_back(where + ": row skipped: no feature could be computed");
        ++out.skipped;
        continue;
      }
      out.rows.push_back({{pid, video}, values, response});
    }
  });

  dataset::FeatureTable table;
  table.config_hash = cfg.hash;
  table.col_names = feature_names();
  std::size_t skipped = 0;
  std::string log_text = "# config_hash=" + cfg.hash + "\n";
  for (auto& o : outcomes) {
    for (auto& r : o.rows) table.rows.push_back(std::move(r));
    for (const auto& msg : o.messages) log_text += msg + "\n";
    skipped += o.skipped;
  }
  std::sort(table.rows.begin(), table.rows.end(),
            [](const dataset::DesignRow& a, const dataset::DesignRow& b) { return a.key < b.key; });

  const fs::path dir(cfg.output_dir);
  dataset::write_features_csv((dir / "features.csv").string(), table);
  write_text(dir / "config.json", cfg.echo.dump(2) + "\n");
  std::string timing_text = "family,seconds,calls\n";
  for (const auto& e : timing.snapshot())
    timing_text += std::string(to_string(e.family)) + "," + fmt("%.3f", e.seconds) + "," + std::to_string(e.calls) + "\n";
  write_text(dir / "extract_log.txt", log_text);
  write_text(dir / "extract_timing.csv", timing_text);

  log << "extract: " << table.rows.size() << " rows, " << table.col_names.size() << " features, " << skipped
      << " skipped -> " << (dir / "features.csv").string() << "\n";
  if (skipped > 0) {
    log << "extract: see extract_log.txt for the reasons rows were skipped\n";
    return exit_code_for(ErrorKind::data);
  }
  return 0;
}

int cmd_select(const PipelineConfig& cfg, std::ostream& log) {
  const auto table = read_stage_features(cfg);
  const auto fm = dataset::assemble_design(table.rows, table.col_names, true);
  trex::Selector selector(fm.X, fm.y, cfg.selector.K, cfg.selector.seed, cfg.threads);
  const auto res = selector.run(cfg.selector);

  auto names_of = [&](const std::vector<int>& idx) {
    std::vector<std::string> out;
    for (int j : idx) out.push_back(fm.col_names[static_cast<std::size_t>(j)]);
    return out;
  };
  const double p = static_cast<double>(fm.col_names.size());
  json j;
  j["config_hash"] = cfg.hash;
  j["features_config_hash"] = table.config_hash;
  j["config"] = cfg.echo;
  j["alpha"] = res.alpha;
  j["K"] = res.K;
  j["seed"] = res.seed;
  j["variant"] = trex::to_string(res.variant);
  j["feasible"] = res.feasible;
  j["v"] = res.v;
  j["T"] = res.T;
  j["L"] = res.L;
  j["rho"] = res.rho;
  j["fdp_hat"] = res.fdp_hat;
  j["n_rows"] = fm.X.rows();
  j["n_features"] = fm.X.cols();
  j["selected"] = names_of(res.selected);
  j["selected_percent"] = 100.0 * static_cast<double>(res.selected.size()) / p;
  json feats = json::array();
  for (std::size_t i = 0; i < fm.col_names.size(); ++i) {
    const bool sel = std::find(res.selected.begin(), res.selected.end(), static_cast<int>(i)) != res.selected.end();
    feats.push_back({{"name", fm.col_names[i]},
                     {"phi", res.phi[i]},
                     {"phi_penalized", res.phi_penalized[i]},
                     {"phi_deflated", res.phi_deflated[i]},
                     {"selected", sel}});
  }
  j["features"] = feats;
  json sweep = json::array();
  std::vector<svg::Bar> bars;
  for (const auto& r : res.sweep) {
    sweep.push_back({{"alpha", r.alpha},
                     {"selected_percent", r.selected_percent},
                     {"selected", names_of(r.selected)},
                     {"fdp_hat", r.fdp_hat},
                     {"v", r.v},
                     {"T", r.T},
                     {"L", r.L},
                     {"rho", r.rho}});
    bars.push_back({fmt("%g%%", 100.0 * r.alpha), r.selected_percent});
  }
  j["alpha_sweep"] = sweep;
  j["warnings"] = fm.warnings;

  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  write_text(dir / "selection.json", j.dump(2) + "\n");
  write_text(dir / "alpha_sweep.svg",
             svg::bar_chart(bars, "Selected features by target FDR", "target FDR", "selected features (%)"));

  log << "select: " << res.selected.size() << " of " << fm.X.cols() << " features at alpha = " << res.alpha << " ("
      << trex::to_string(res.variant) << ", K = " << res.K << ", v = " << res.v << ", T = " << res.T
      << ", L = " << res.L << ")";
  for (const auto& n : names_of(res.selected)) log << " " << n;
  log << "\n";
  return 0;
}

namespace {

json fit_to_json(const mixed::MixedModelFit& f) {
  json coefs = json::array();
  for (const auto& c : f.coef)
    coefs.push_back({{"name", c.name},
                     {"estimate", c.estimate},
                     {"se", c.se},
                     {"t", c.t},
                     {"df", c.df},
                     {"p_raw", c.p_raw},
                     {"p_adj", c.p_adj}});
  json j;
  j["coefficients"] = coefs;
  j["variance"] = {{"sigma_u", f.sigma_u}, {"sigma_e", f.sigma_e}, {"lambda", f.lambda}};
  j["stats"] = {{"r2_marginal", f.r2_marginal}, {"r2_conditional", f.r2_conditional}, {"aic", f.aic},
                {"bic", f.bic},                 {"icc", f.icc},                       {"rmse", f.rmse},
                {"reml_deviance", f.reml_deviance}};
  j["n_obs"] = f.n_obs;
  j["n_groups"] = f.n_groups;
  j["robust"] = f.robust;
  if (f.robust) {
    j["iterations"] = f.iterations;
    std::size_t down = 0;
    for (double w : f.weights) down += w < 1.0 ? 1 : 0;
    j["downweighted"] = down;
    j["min_weight"] = f.weights.empty() ? 1.0 : *std::min_element(f.weights.begin(), f.weights.end());
  }
  return j;
}

mixed::MixedModelFit fit_from_json(const json& j) {
  mixed::MixedModelFit f;
  try {
    for (const auto& c : j.at("coefficients"))
      f.coef.push_back({c.at("name").get<std::string>(), c.at("estimate").get<double>(), c.at("se").get<double>(),
                        c.at("t").get<double>(), c.at("df").get<double>(), c.at("p_raw").get<double>(),
                        c.at("p_adj").get<double>()});
    f.sigma_u = j.at("variance").at("sigma_u").get<double>();
    f.sigma_e = j.at("variance").at("sigma_e").get<double>();
    f.lambda = j.at("variance").at("lambda").get<double>();
    const auto& s = j.at("stats");
    f.r2_marginal = s.at("r2_marginal").get<double>();
    f.r2_conditional = s.at("r2_conditional").get<double>();
    f.aic = s.at("aic").get<double>();
    f.bic = s.at("bic").get<double>();
    f.icc = s.at("icc").get<double>();
    f.rmse = s.at("rmse").get<double>();
    f.reml_deviance = s.at("reml_deviance").get<double>();
    f.n_obs = j.at("n_obs").get<int>();
    f.n_groups = j.at("n_groups").get<int>();
    f.robust = j.at("robust").get<bool>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::data, std::string("model.json: ") + e.what());
  }
  return f;
}

std::vector<std::string> selected_names(const json& sel) {
  try {
    return sel.at("selected").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::data, std::string("selection.json: ") + e.what());
  }
}

const std::vector<std::string>& palette() {
  static const std::vector<std::string> p{"#4477aa", "#ee6677", "#228833", "#ccbb44",
                                          "#66ccee", "#aa3377", "#bbbbbb", "#000000"};
  return p;
}

}  // namespace

int cmd_fit(const PipelineConfig& cfg, std::ostream& log) {
  const fs::path dir(cfg.output_dir);
  const json sel = read_json(dir / "selection.json", "select");
  const auto names = selected_names(sel);
  if (names.empty()) {
    fs::remove(dir / "model.json");
    fs::remove(dir / "effects.svg");
    log << "fit: nothing to fit, no features were selected at target FDR " << sel.value("alpha", 0.0) << "\n";
    return 0;
  }

  const auto table = read_stage_features(cfg);
  const auto fm = dataset::assemble_design(table.rows, table.col_names, true);
  Eigen::MatrixXd X(fm.X.rows(), static_cast<Eigen::Index>(names.size()));
  for (std::size_t k = 0; k < names.size(); ++k) {
    const auto it = std::find(fm.col_names.begin(), fm.col_names.end(), names[k]);
    if (it == fm.col_names.end())
      throw Error(ErrorKind::data, "selected feature '" + names[k] + "' is not a column of features.csv");
    X.col(static_cast<Eigen::Index>(k)) = fm.X.col(it - fm.col_names.begin());
  }
  std::map<std::string, int> group_id;
  std::vector<int> groups;
  for (const auto& key : fm.row_keys) {
    const auto [it, fresh] = group_id.emplace(key.participant, static_cast<int>(group_id.size()));
    groups.push_back(it->second);
  }

  const auto classical = mixed::fit_lmer(fm.y, X, names, groups);
  std::optional<mixed::MixedModelFit> robust;
  if (cfg.model.robust) robust = mixed::fit_rlmer(fm.y, X, names, groups, cfg.model.huber);

  std::string formula = "response ~ 1";
  for (const auto& n : names) formula += " + " + n;
  formula += " + (1 | participant)";
  json j;
  j["config_hash"] = cfg.hash;
  j["selection_config_hash"] = sel.value("config_hash", "");
  j["features_config_hash"] = table.config_hash;
  j["config"] = cfg.echo;
  j["formula"] = formula;
  j["response"] = "mean arousal over the window, z-scored";
  j["predictors"] = "z-scored features";
  j["df_method"] = "residual, N - s - 2";
  j["models"]["lmer"] = fit_to_json(classical);
  if (robust) j["models"]["rlmer"] = fit_to_json(*robust);
  write_text(dir / "model.json", j.dump(2) + "\n");

  // One panel per selected feature, coloured by stimulus class.
  std::vector<std::string> panels;
  std::map<std::string, std::string> colors = cfg.class_colors;
  for (std::size_t k = 0; k < names.size(); ++k) {
    std::map<std::string, svg::Series> by_class;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const auto& video = fm.row_keys[static_cast<std::size_t>(i)].video;
      const auto cls = cfg.video_classes.count(video) ? cfg.video_classes.at(video) : std::string("unlabelled");
      if (!colors.count(cls)) colors[cls] = palette()[colors.size() % palette().size()];
      auto& s = by_class[cls];
      s.name = cls;
      s.color = colors[cls];
      s.x.push_back(X(i, static_cast<Eigen::Index>(k)));
      s.y.push_back(fm.y(i));
    }
    std::vector<svg::Series> series;
    for (auto& [cls, s] : by_class) series.push_back(std::move(s));
    std::vector<svg::Line> lines{{"LMER", "#222222", classical.coef[0].estimate, classical.coef[k + 1].estimate}};
    if (robust) lines.push_back({"RLMER", "#cc3311", robust->coef[0].estimate, robust->coef[k + 1].estimate});
    panels.push_back(svg::scatter(series, lines, "Mean arousal vs " + names[k], names[k] + " (z)", "mean arousal (z)"));
  }
  write_text(dir / "effects.svg", svg::stack(panels));

  log << "fit: " << formula << "\n";
  std::vector<const mixed::MixedModelFit*> fits{&classical};
  std::vector<std::string> labels{"LMER"};
  if (robust) {
    fits.push_back(&*robust);
    labels.emplace_back("RLMER");
  }
  log << mixed::model_summary(fits, labels);
  return 0;
}

int cmd_report(const PipelineConfig& cfg, std::ostream& log) {
  const fs::path dir(cfg.output_dir);
  const auto table = read_stage_features(cfg);
  const json sel = read_json(dir / "selection.json", "select");
  const auto names = selected_names(sel);
  std::optional<json> model;
  if (!names.empty()) model = read_json(dir / "model.json", "fit");

  std::ostringstream s;
  s << "Arousal feature discovery summary\n";
  s << "config hash: " << cfg.hash << "\n";
  s << "stage hashes: features " << table.config_hash << ", selection " << sel.value("config_hash", "?");
  if (model) s << ", model " << model->value("config_hash", "?");
  s << "\n\n";

  std::set<std::string> participants, videos;
  for (const auto& r : table.rows) {
    participants.insert(r.key.participant);
    videos.insert(r.key.video);
  }
  s << "Data\n";
  s << "  rows: " << table.rows.size() << " (" << participants.size() << " participants x " << videos.size()
    << " videos)\n";
  s << "  features: " << table.col_names.size() << "\n\n";

  s << "Selection\n";
  s << "  variant " << sel.value("variant", "?") << ", target FDR " << sel.value("alpha", 0.0) << ", K "
    << sel.value("K", 0) << ", seed " << sel.value("seed", std::uint64_t{0}) << "\n";
  s << "  calibrated v " << fmt("%.2f", sel.value("v", 0.0)) << ", T " << sel.value("T", 0) << ", L "
    << sel.value("L", 0) << ", rho " << sel.value("rho", 0.0) << ", estimated FDP "
    << fmt("%.4f", sel.value("fdp_hat", 0.0)) << "\n";
  if (names.empty()) {
    s << "  No discoveries at target FDR " << sel.value("alpha", 0.0) << ".\n";
  } else {
    s << "  selected (" << names.size() << ", " << fmt("%.2f", sel.value("selected_percent", 0.0)) << "%):";
    for (const auto& n : names) s << " " << n;
    s << "\n";
  }

  std::vector<json> feats;
  if (sel.contains("features"))
    for (const auto& f : sel["features"]) feats.push_back(f);
  std::stable_sort(feats.begin(), feats.end(), [](const json& a, const json& b) {
    return a.value("phi_penalized", 0.0) > b.value("phi_penalized", 0.0);
  });
  std::string phi_csv = "# config_hash=" + cfg.hash + "\nname,phi,phi_penalized,phi_deflated,selected\n";
  s << "  top features by penalized relative occurrence:\n";
  for (std::size_t i = 0; i < feats.size(); ++i) {
    const auto& f = feats[i];
    const std::string name = f.value("name", "");
    char buf[192];
    std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g,%d\n", name.c_str(), f.value("phi", 0.0),
                  f.value("phi_penalized", 0.0), f.value("phi_deflated", 0.0), f.value("selected", false) ? 1 : 0);
    phi_csv += buf;
    if (i < 10 && f.value("phi", 0.0) > 0.0) {
      std::snprintf(buf, sizeof buf, "    %-22s phi %.2f  penalized %.2f%s\n", name.c_str(), f.value("phi", 0.0),
                    f.value("phi_penalized", 0.0), f.value("selected", false) ? "  selected" : "");
      s << buf;
    }
  }
  s << "  target FDR sweep:\n";
  if (sel.contains("alpha_sweep"))
    for (const auto& r : sel["alpha_sweep"]) {
      s << "    alpha " << fmt("%.2f", r.value("alpha", 0.0)) << ": " << fmt("%.2f", r.value("selected_percent", 0.0))
        << "% selected";
      for (const auto& n : r.value("selected", std::vector<std::string>{})) s << " " << n;
      s << "\n";
    }
  s << "\n";

  if (model) {
    s << "Mixed models: " << model->value("formula", "") << "\n";
    std::vector<mixed::MixedModelFit> fits;
    std::vector<std::string> labels;
    for (const auto& [key, label] : {std::pair{"lmer", "LMER"}, std::pair{"rlmer", "RLMER"}})
      if (model->contains("models") && (*model)["models"].contains(key)) {
        fits.push_back(fit_from_json((*model)["models"][key]));
        labels.emplace_back(label);
      }
    std::vector<const mixed::MixedModelFit*> ptrs;
    for (const auto& f : fits) ptrs.push_back(&f);
    s << mixed::model_summary(ptrs, labels);

    std::size_t confirmed = 0;
    for (const auto& n : names) {
      bool all = !fits.empty();
      for (const auto& f : fits) {
        const auto it = std::find_if(f.coef.begin(), f.coef.end(), [&](const mixed::Coefficient& c) { return c.name == n; });
        all = all && it != f.coef.end() && it->p_adj < cfg.model.significance;
      }
      confirmed += all ? 1 : 0;
    }
    std::string which;
    for (std::size_t i = 0; i < labels.size(); ++i) which += (i ? " and " : "") + labels[i];
    s << "Confirmation rate: " << fmt("%.0f", 100.0 * static_cast<double>(confirmed) / static_cast<double>(names.size()))
      << "% (" << confirmed << " of " << names.size() << " selected features with BH-adjusted p < "
      << cfg.model.significance << " in " << which << ")\n\n";
  }

  s << "Files\n";
  for (const char* f : {"features.csv", "selection.json", "alpha_sweep.svg", "model.json", "effects.svg", "phi_table.csv"})
    if (fs::exists(dir / f) || std::string(f) == "phi_table.csv") s << "  " << f << "\n";
  log << s.str();  // everything except the configuration echo
  s << "\nConfiguration\n" << cfg.echo.dump(2) << "\n";

  write_text(dir / "phi_table.csv", phi_csv);
  write_text(dir / "summary.txt", s.str());
  log << "report: wrote " << (dir / "summary.txt").string() << "\n";
  return 0;
}

int cmd_synth_bench(const PipelineConfig& cfg, std::ostream& log) {
  const auto& sy = cfg.synth;
  std::vector<trex::Variant> variants;
  for (const auto& v : sy.variants) variants.push_back(trex::parse_variant(v));
  if (sy.reps < 50) log << "synth-bench: fewer than 50 repetitions, standard errors are rough\n";

  std::vector<synth::FdrRow> all;
  for (const auto& family : sy.families) {
    const bool null = family == "null";
    auto spec = synth::benchmark_spec(synth::parse_correlation(family), null ? 0 : sy.n_true, sy.target_corr, sy.n, sy.p);
    spec.rho = sy.ar_rho;
    spec.duplicate_sd = sy.duplicate_sd;
    auto opt = cfg.selector;
    opt.threads = cfg.threads;
    auto rows = synth::run_fdr_experiment(spec, sy.alphas, variants, sy.reps, sy.seed, opt);
    for (auto& r : rows) {
      log << fmt("%-12s", r.family.c_str()) << fmt("%-6s", trex::to_string(r.variant)) << " alpha "
          << fmt("%.2f", r.alpha) << "  FDR " << fmt("%.3f", r.fdr) << " (SE " << fmt("%.3f", r.fdr_se) << ")  TPR "
          << fmt("%.3f", r.tpr) << " (SE " << fmt("%.3f", r.tpr_se) << ")  "
          << (r.fdr <= r.alpha + 3.0 * r.fdr_se ? "controlled" : "NOT controlled") << "\n";
      all.push_back(std::move(r));
    }
  }
  fs::create_directories(cfg.output_dir);
  const auto path = (fs::path(cfg.output_dir) / "fdr_report.csv").string();
  synth::write_fdr_csv(path, all, cfg.hash);
  log << "synth-bench: " << all.size() << " rows -> " << path << "\n";
  return 0;
}

}  // namespace physio::pipeline
