#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "physio/dataset.hpp"
#include "physio/extractor.hpp"
#include "physio/mixed.hpp"
#include "physio/trex.hpp"

namespace physio::pipeline {

struct ModelConfig {
  bool robust = true;
  mixed::RobustOptions huber;
  double significance = 0.05;  // for the confirmation-rate line
};

struct SynthConfig {
  std::vector<std::string> families{"null", "ar1", "duplicated"};
  std::vector<double> alphas{0.05, 0.1, 0.2};
  std::vector<std::string> variants{"da-nn", "plain"};
  int reps = 100;
  int n = 240;
  int p = 164;
  int n_true = 3;
  double target_corr = 0.3;
  double ar_rho = 0.8;
  double duplicate_sd = 0.5;
  std::uint64_t seed = 1;
};

struct PipelineConfig {
  std::vector<dataset::RecordingFiles> participants;
  dataset::ColumnMapping mapping;
  double fs_phys = 1000.0;
  double fs_annot = 20.0;
  double window_s = 116.0;
  std::vector<std::string> videos;
  std::map<std::string, std::string> video_classes;  // video id -> stimulus class
  std::map<std::string, std::string> class_colors;   // stimulus class -> SVG colour
  extract::ExtractorOptions extractor;
  trex::Options selector;
  ModelConfig model;
  SynthConfig synth;
  std::string output_dir = "out";
  unsigned threads = 0;

  nlohmann::json echo;  // resolved configuration, defaults filled in
  std::string hash;     // FNV-1a of `echo` without threads and output_dir
};

/// Command-line values that take precedence over the file.
struct Overrides {
  std::optional<std::string> output_dir;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<double> alpha;
  std::optional<std::vector<double>> alpha_grid;
  std::optional<int> K;
  std::optional<std::string> variant;
};

/// Unknown keys and out-of-range values are config errors. Relative paths
/// resolve against `base_dir`. With `check_paths`, every data file must exist.
PipelineConfig parse_config(const nlohmann::json& j, const std::string& base_dir, const Overrides& ov = {},
                            bool check_paths = true);
PipelineConfig load_config(const std::string& path, const Overrides& ov = {}, bool check_paths = true);

std::string fnv1a_hex(const std::string& bytes);

/// Each command returns a process exit code and throws physio::Error on
/// failure. Progress goes to `log`.
int cmd_extract(const PipelineConfig& cfg, std::ostream& log);
int cmd_select(const PipelineConfig& cfg, std::ostream& log);
int cmd_fit(const PipelineConfig& cfg, std::ostream& log);
int cmd_report(const PipelineConfig& cfg, std::ostream& log);
int cmd_synth_bench(const PipelineConfig& cfg, std::ostream& log);

}  // namespace physio::pipeline
