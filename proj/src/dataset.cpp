#include "physio/dataset.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

namespace physio::dataset {

namespace {

std::string trim(std::string s) {
  const auto keep = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), keep));
  s.erase(std::find_if(s.rbegin(), s.rend(), keep).base(), s.end());
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string> split(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, delim)) out.push_back(trim(cell));
  if (!line.empty() && line.back() == delim) out.emplace_back();
  return out;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  errno = 0;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

double cell_value(const Table& t, std::size_t row, std::size_t col, const std::string& file) {
  double v = 0.0;
  const auto& cells = t.rows[row];
  if (col >= cells.size() || !parse_double(cells[col], v))
    throw Error(ErrorKind::data, file + ":" + std::to_string(t.line_numbers[row]) + ": cannot parse '" +
                                     (col < cells.size() ? cells[col] : std::string()) + "' in column '" +
                                     t.header[col] + "' as a number");
  return v;
}

void check_increasing(const std::vector<double>& t, const std::string& what) {
  for (std::size_t i = 1; i < t.size(); ++i)
    if (!(t[i] > t[i - 1]))
      throw Error(ErrorKind::data, what + ": time is not strictly increasing at index " + std::to_string(i));
}

}  // namespace

std::size_t SessionRecording::samples() const {
  return channels.empty() ? 0 : channels.begin()->second.size();
}

std::size_t Table::column(const std::string& name, const std::string& file) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw Error(ErrorKind::config, file + ": missing column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

Table read_table(const std::string& path, char delimiter, const std::vector<std::string>& wanted) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::config, "cannot open '" + path + "'");
  Table t;
  std::vector<std::size_t> keep;
  std::size_t width = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || line[0] == '#') continue;
    auto cells = split(line, delimiter);
    if (width == 0) {
      width = cells.size();
      if (wanted.empty()) {
        t.header = std::move(cells);
        for (std::size_t c = 0; c < width; ++c) keep.push_back(c);
      } else {
        for (const auto& name : wanted) {
          const auto it = std::find(cells.begin(), cells.end(), name);
          if (it == cells.end()) throw Error(ErrorKind::config, path + ": missing column '" + name + "'");
          keep.push_back(static_cast<std::size_t>(it - cells.begin()));
        }
        t.header = wanted;
      }
      continue;
    }
    if (cells.size() != width)
      throw Error(ErrorKind::data, path + ":" + std::to_string(lineno) + ": expected " +
                                       std::to_string(width) + " fields, found " + std::to_string(cells.size()));
    std::vector<std::string> row;
    row.reserve(keep.size());
    for (std::size_t c : keep) row.push_back(std::move(cells[c]));
    t.rows.push_back(std::move(row));
    t.line_numbers.push_back(lineno);
  }
  if (width == 0) throw Error(ErrorKind::data, path + ": empty file");
  return t;
}

std::string normalize_label(const std::string& raw) {
  const std::string s = trim(raw);
  double v = 0.0;
  if (parse_double(s, v) && std::isfinite(v) && v == std::floor(v) && std::abs(v) < 1e15)
    return std::to_string(static_cast<long long>(v));
  return s;
}

void regularize_annotations(std::vector<double>& t, std::vector<double>& v,
                            std::vector<std::string>& labels, double fs) {
  check_increasing(t, "annotations");
  if (t.size() < 2) return;
  const double dt = 1.0 / fs;
  bool regular = true;
  for (std::size_t i = 1; i < t.size() && regular; ++i) regular = std::abs(t[i] - t[i - 1] - dt) < 1e-3 * dt;
  if (regular) return;

  const auto count = static_cast<std::size_t>(std::floor((t.back() - t.front()) * fs + 1e-6)) + 1;
  std::vector<double> gt(count), gv(count);
  std::vector<std::string> gl(labels.empty() ? 0 : count);
  std::size_t j = 0;
  for (std::size_t k = 0; k < count; ++k) {
    const double tk = t.front() + static_cast<double>(k) * dt;
    while (j + 2 < t.size() && t[j + 1] <= tk + 1e-9) ++j;
    const double w = std::clamp((tk - t[j]) / (t[j + 1] - t[j]), 0.0, 1.0);
    gt[k] = tk;
    gv[k] = v[j] + w * (v[j + 1] - v[j]);
    if (!labels.empty()) gl[k] = labels[(tk >= t[j + 1] - 1e-9) ? j + 1 : j];
  }
  t = std::move(gt);
  v = std::move(gv);
  labels = std::move(gl);
}

SessionRecording load_recording(const RecordingFiles& files, const ColumnMapping& m, double fs_phys,
                                double fs_annot) {
  if (!(fs_phys > 0.0) || !(fs_annot > 0.0))
    throw Error(ErrorKind::config, "sampling rates must be positive");
  SessionRecording rec;
  rec.participant_id = files.participant_id;
  rec.fs_phys = fs_phys;
  rec.fs_annot = fs_annot;

  std::vector<std::string> phys_cols;
  for (const auto* c : {&m.ecg, &m.eda, &m.physio_time, &m.physio_video})
    if (!c->empty() && std::find(phys_cols.begin(), phys_cols.end(), *c) == phys_cols.end()) phys_cols.push_back(*c);
  const Table phys = read_table(files.physio_path, m.delimiter, phys_cols);
  const std::string& pf = files.physio_path;
  auto load_channel = [&](const std::string& col, const char* key) {
    if (col.empty()) return;
    const std::size_t c = phys.column(col, pf);
    std::vector<double> x(phys.rows.size());
    for (std::size_t r = 0; r < x.size(); ++r) x[r] = cell_value(phys, r, c, pf);
    rec.channels[key] = std::move(x);
  };
  load_channel(m.ecg, "ecg");
  load_channel(m.eda, "eda");
  if (rec.channels.empty()) throw Error(ErrorKind::config, "no physiological channel is mapped");
  if (!m.physio_time.empty()) {
    const std::size_t c = phys.column(m.physio_time, pf);
    std::vector<double> t(phys.rows.size());
    for (std::size_t r = 0; r < t.size(); ++r) t[r] = cell_value(phys, r, c, pf) * m.time_scale;
    check_increasing(t, pf);
    if (!t.empty()) rec.t0 = t.front();
  }
  if (!m.physio_video.empty()) {
    const std::size_t c = phys.column(m.physio_video, pf);
    rec.physio_video.reserve(phys.rows.size());
    for (const auto& row : phys.rows) rec.physio_video.push_back(normalize_label(row[c]));
  }

  if (!files.annotation_path.empty()) {
    const std::string& af = files.annotation_path;
    if (m.arousal.empty()) throw Error(ErrorKind::config, "arousal column is not mapped");
    if (m.annot_time.empty()) throw Error(ErrorKind::config, "annotation time column is not mapped");
    std::vector<std::string> ann_cols{m.annot_time};
    for (const auto* c : {&m.arousal, &m.annot_video})
      if (!c->empty() && std::find(ann_cols.begin(), ann_cols.end(), *c) == ann_cols.end()) ann_cols.push_back(*c);
    const Table ann = read_table(af, m.delimiter, ann_cols);
    const std::size_t ct = ann.column(m.annot_time, af);
    const std::size_t ca = ann.column(m.arousal, af);
    for (std::size_t r = 0; r < ann.rows.size(); ++r) {
      rec.annot_time.push_back(cell_value(ann, r, ct, af) * m.time_scale);
      rec.arousal.push_back(cell_value(ann, r, ca, af));
    }
    if (!m.annot_video.empty()) {
      const std::size_t cv = ann.column(m.annot_video, af);
      for (const auto& row : ann.rows) rec.annot_video.push_back(normalize_label(row[cv]));
    }
    regularize_annotations(rec.annot_time, rec.arousal, rec.annot_video, fs_annot);
  }
  return rec;
}

SessionWindow extract_window(const SessionRecording& rec, const std::string& video_id, double window_s) {
  if (!(window_s > 0.0)) throw Error(ErrorKind::config, "window length must be positive");
  const std::size_t n = rec.samples();
  SessionWindow w;
  w.participant_id = rec.participant_id;
  w.video_id = video_id;

  std::size_t seg_begin = 0, seg_end = 0;
  if (!rec.physio_video.empty()) {
    const auto first = std::find(rec.physio_video.begin(), rec.physio_video.end(), video_id);
    if (first == rec.physio_video.end())
      throw Error(ErrorKind::window, "participant " + rec.participant_id + ": video " + video_id + " not found");
    const auto last = std::find(rec.physio_video.rbegin(), rec.physio_video.rend(), video_id);
    seg_begin = static_cast<std::size_t>(first - rec.physio_video.begin());
    seg_end = static_cast<std::size_t>(rec.physio_video.rend() - last);
  } else if (!rec.annot_video.empty()) {
    const auto first = std::find(rec.annot_video.begin(), rec.annot_video.end(), video_id);
    if (first == rec.annot_video.end())
      throw Error(ErrorKind::window, "participant " + rec.participant_id + ": video " + video_id + " not found");
    const auto last = std::find(rec.annot_video.rbegin(), rec.annot_video.rend(), video_id);
    const double ta = rec.annot_time[static_cast<std::size_t>(first - rec.annot_video.begin())];
    const double tb = rec.annot_time[static_cast<std::size_t>(rec.annot_video.rend() - last) - 1] + 1.0 / rec.fs_annot;
    auto to_index = [&](double t) {
      return static_cast<std::size_t>(std::clamp(std::lround((t - rec.t0) * rec.fs_phys), 0L, static_cast<long>(n)));
    };
    seg_begin = to_index(ta);
    seg_end = to_index(tb);
  } else {
    throw Error(ErrorKind::config, "no video label column is mapped");
  }

  const double available = static_cast<double>(seg_end - seg_begin) / rec.fs_phys;
  const auto need = static_cast<std::size_t>(std::lround(window_s * rec.fs_phys));
  if (seg_end - seg_begin < need) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "participant %s video %s: segment lasts %.3f s, window needs %.3f s",
                  rec.participant_id.c_str(), video_id.c_str(), available, window_s);
    throw Error(ErrorKind::window, buf);
  }
  w.phys_end = seg_end;
  w.phys_begin = seg_end - need;
  w.t_end = rec.t0 + static_cast<double>(w.phys_end) / rec.fs_phys;
  w.t_begin = w.t_end - window_s;
  for (const auto& [name, x] : rec.channels) {
    std::vector<double> part(x.begin() + static_cast<std::ptrdiff_t>(w.phys_begin),
                             x.begin() + static_cast<std::ptrdiff_t>(w.phys_end));
    if (name == "ecg") w.ecg = std::move(part);
    else if (name == "eda") w.eda = std::move(part);
  }

  if (!rec.annot_time.empty()) {
    // Annotation samples are taken on their own grid, ending at the same instant.
    const double tol = 0.5 / rec.fs_annot;
    const auto e = static_cast<std::size_t>(
        std::lower_bound(rec.annot_time.begin(), rec.annot_time.end(), w.t_end - tol) - rec.annot_time.begin());
    const auto na = static_cast<std::size_t>(std::lround(window_s * rec.fs_annot));
    if (e < na)
      throw Error(ErrorKind::window, "participant " + rec.participant_id + " video " + video_id +
                                         ": annotation trace does not cover the window");
    w.arousal.assign(rec.arousal.begin() + static_cast<std::ptrdiff_t>(e - na),
                     rec.arousal.begin() + static_cast<std::ptrdiff_t>(e));
  }
  return w;
}

double compute_response(const SessionWindow& w) {
  if (w.arousal.empty()) throw Error(ErrorKind::data, "empty arousal window");
  return stats::mean(w.arousal);
}

bool label_less(const std::string& a, const std::string& b) {
  double x = 0.0, y = 0.0;
  if (parse_double(a, x) && parse_double(b, y) && x != y) return x < y;
  return a < b;
}

bool operator<(const RowKey& a, const RowKey& b) {
  if (a.participant != b.participant) return label_less(a.participant, b.participant);
  return label_less(a.video, b.video);
}

FeatureMatrix assemble_design(std::vector<DesignRow> rows, const std::vector<std::string>& col_names,
                              bool standardize) {
  const std::size_t p = col_names.size();
  for (const auto& r : rows)
    if (r.features.size() != p)
      throw Error(ErrorKind::data, "row (" + r.key.participant + ", " + r.key.video + ") has " +
                                       std::to_string(r.features.size()) + " features, expected " +
                                       std::to_string(p));
  std::stable_sort(rows.begin(), rows.end(), [](const DesignRow& a, const DesignRow& b) { return a.key < b.key; });
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].key.participant == rows[i - 1].key.participant && rows[i].key.video == rows[i - 1].key.video)
      throw Error(ErrorKind::data, "duplicate row (" + rows[i].key.participant + ", " + rows[i].key.video + ")");

  const std::size_t n = rows.size();
  FeatureMatrix fm;
  fm.col_names = col_names;
  fm.standardized = standardize;
  fm.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  fm.y.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    fm.row_keys.push_back(rows[i].key);
    if (!std::isfinite(rows[i].response))
      throw Error(ErrorKind::data, "non-finite response for (" + rows[i].key.participant + ", " + rows[i].key.video + ")");
    fm.y(static_cast<Eigen::Index>(i)) = rows[i].response;
    for (std::size_t j = 0; j < p; ++j)
      fm.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i].features[j];
  }

  for (std::size_t j = 0; j < p; ++j) {
    auto col = fm.X.col(static_cast<Eigen::Index>(j));
    std::vector<double> finite;
    for (Eigen::Index i = 0; i < col.size(); ++i)
      if (std::isfinite(col(i))) finite.push_back(col(i));
    if (finite.size() < n) {
      const double fill = finite.empty() ? 0.0 : stats::median(finite);
      fm.warnings.push_back(col_names[j] + ": " + std::to_string(n - finite.size()) +
                            " non-finite value(s) imputed by column median");
      for (Eigen::Index i = 0; i < col.size(); ++i)
        if (!std::isfinite(col(i))) col(i) = fill;
    }
    if (!standardize || n < 2) continue;
    const std::vector<double> v(col.data(), col.data() + col.size());
    const double mu = stats::mean(v), sd = stats::sd(v);
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mu)))) {
      fm.warnings.push_back(col_names[j] + ": constant column set to zero");
      col.setZero();
      continue;
    }
    col = (col.array() - mu) / sd;
  }
  if (standardize && n >= 2) {
    const std::vector<double> v(fm.y.data(), fm.y.data() + fm.y.size());
    const double mu = stats::mean(v), sd = stats::sd(v);
    if (sd > 0.0) {
      fm.y = (fm.y.array() - mu) / sd;
    } else {
      fm.warnings.push_back("response: constant, set to zero");
      fm.y.setZero();
    }
  }
  return fm;
}

void write_features_csv(const std::string& path, const FeatureTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::config, "cannot write '" + path + "'");
  out << "# config_hash=" << table.config_hash << '\n';
  out << "participant,video,response";
  for (const auto& c : table.col_names) out << ',' << c;
  out << '\n';
  char buf[40];
  auto num = [&buf](double v) -> const char* {
    if (std::isnan(v)) return "nan";
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
  };
  for (const auto& r : table.rows) {
    for (const auto& s : {r.key.participant, r.key.video})
      if (s.find(',') != std::string::npos) throw Error(ErrorKind::data, "label '" + s + "' contains a comma");
    out << r.key.participant << ',' << r.key.video << ',' << num(r.response);
    for (double v : r.features) out << ',' << num(v);
    out << '\n';
  }
}

FeatureTable read_features_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::config, "cannot open '" + path + "'");
  FeatureTable t;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string key = "# config_hash=";
      if (line.rfind(key, 0) == 0) t.config_hash = line.substr(key.size());
      continue;
    }
    auto cells = split(line, ',');
    const std::string where = path + ":" + std::to_string(lineno);
    if (!have_header) {
      if (cells.size() < 3 || cells[0] != "participant" || cells[1] != "video" || cells[2] != "response")
        throw Error(ErrorKind::data, where + ": header must start with participant,video,response");
      t.col_names.assign(cells.begin() + 3, cells.end());
      width = cells.size();
      have_header = true;
      continue;
    }
    if (cells.size() != width)
      throw Error(ErrorKind::data, where + ": expected " + std::to_string(width) + " fields, found " +
                                       std::to_string(cells.size()));
    DesignRow r;
    r.key = {cells[0], cells[1]};
    if (!parse_double(cells[2], r.response)) throw Error(ErrorKind::data, where + ": bad response '" + cells[2] + "'");
    r.features.resize(width - 3);
    for (std::size_t j = 3; j < width; ++j)
      if (!parse_double(cells[j], r.features[j - 3]))
        throw Error(ErrorKind::data, where + ": bad value '" + cells[j] + "' for " + t.col_names[j - 3]);
    t.rows.push_back(std::move(r));
  }
  if (!have_header) throw Error(ErrorKind::data, path + ": missing header");
  return t;
}

}  // namespace physio::dataset
