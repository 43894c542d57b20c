#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "physio/common.hpp"
#include "physio/registry.hpp"

namespace physio::dataset {

/// Column names inside the per-participant files. Empty means "absent".
struct ColumnMapping {
  std::string physio_time = "daqtime";
  std::string ecg = "ecg";
  std::string eda = "gsr";
  std::string physio_video = "video";
  std::string annot_time = "jstime";
  std::string arousal = "arousal";
  std::string annot_video = "video";
  double time_scale = 0.001;  // multiply file timestamps by this to get seconds
  char delimiter = ',';
};

struct RecordingFiles {
  std::string participant_id;
  std::string physio_path;
  std::string annotation_path;
};

struct SessionRecording {
  std::string participant_id;
  double fs_phys = 1000.0;
  double fs_annot = 20.0;
  double t0 = 0.0;  // time of physiological sample 0 (s)
  std::map<std::string, std::vector<double>> channels;  // "ecg", "eda"
  std::vector<std::string> physio_video;                // per-sample label, may be empty
  std::vector<double> annot_time;                       // seconds, uniform at fs_annot
  std::vector<double> arousal;
  std::vector<std::string> annot_video;
  std::size_t samples() const;
};

/// Minimal delimited-text table: header row, then rows of cells. Only the
/// `wanted` columns are kept (all when empty); a missing one is a config error.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row
  std::size_t column(const std::string& name, const std::string& file) const;
};
Table read_table(const std::string& path, char delimiter, const std::vector<std::string>& wanted = {});

/// Canonical video label: "3.0" -> "3", otherwise trimmed text.
std::string normalize_label(const std::string& raw);

/// Linear interpolation of (t, v) onto t[0] + k / fs. Labels follow the most
/// recent original sample. Regular input is returned unchanged.
void regularize_annotations(std::vector<double>& t, std::vector<double>& v,
                            std::vector<std::string>& labels, double fs);

SessionRecording load_recording(const RecordingFiles& files, const ColumnMapping& mapping,
                                double fs_phys, double fs_annot);

struct SessionWindow {
  std::string participant_id;
  std::string video_id;
  std::size_t phys_begin = 0;  // sample range [begin, end) in the recording
  std::size_t phys_end = 0;
  double t_begin = 0.0;  // seconds, recording clock
  double t_end = 0.0;
  std::vector<double> ecg, eda, arousal;
};

/// Final `window_s` seconds of the stimulus segment labelled `video_id`.
/// Throws window error (with the available duration) if the segment is short.
SessionWindow extract_window(const SessionRecording& rec, const std::string& video_id,
                             double window_s);

/// Mean of the arousal samples. Throws data error on an empty window.
double compute_response(const SessionWindow& w);

struct RowKey {
  std::string participant;
  std::string video;
};
/// Orders numerically when both labels are numbers, lexically otherwise.
bool label_less(const std::string& a, const std::string& b);
bool operator<(const RowKey& a, const RowKey& b);

struct DesignRow {
  RowKey key;
  std::vector<double> features;  // registry order
  double response = 0.0;
};

struct FeatureMatrix {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<RowKey> row_keys;
  std::vector<std::string> col_names;
  bool standardized = false;
  std::vector<std::string> warnings;
};

/// Sorts rows, imputes non-finite entries by column median, zeroes constant
/// columns (with a warning) and z-scores X columns and y.
FeatureMatrix assemble_design(std::vector<DesignRow> rows, const std::vector<std::string>& col_names,
                              bool standardize = true);

struct FeatureTable {
  std::string config_hash;
  std::vector<std::string> col_names;
  std::vector<DesignRow> rows;
};
void write_features_csv(const std::string& path, const FeatureTable& table);
/// Throws data error naming the offending line on malformed input.
FeatureTable read_features_csv(const std::string& path);

}  // namespace physio::dataset
