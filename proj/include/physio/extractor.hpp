#pragma once

#include <array>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "physio/common.hpp"
#include "physio/dataset.hpp"
#include "physio/eda.hpp"
#include "physio/features_linear.hpp"
#include "physio/features_nonlinear.hpp"
#include "physio/registry.hpp"
#include "physio/rr.hpp"

namespace physio::extract {

struct ExtractorOptions {
  features::SpectralBands bands;
  signal::WelchOptions welch;
  features::PeakOptions peaks;
  double scl_window_s = 20.0;
  double scr_window_s = 5.0;
  double rr_resample_hz = 4.0;
  features::RqaOptions rqa;
  features::ComEdaOptions comeda;
  rr::DetectorOptions detector;
  bool ectopic_filter = false;
  eda::CvxEdaParams cvxeda;
  double eda_fs = 50.0;
  /// Decompose each window separately instead of the whole recording.
  bool eda_per_window = false;
};

inline constexpr std::size_t kFamilyCount = 18;

class TimingCounters {
 public:
  void add(FeatureFamily family, double seconds);
  struct Entry {
    FeatureFamily family;
    double seconds;
    std::size_t calls;
  };
  std::vector<Entry> snapshot() const;

 private:
  mutable std::mutex mutex_;
  std::array<double, kFamilyCount> seconds_{};
  std::array<std::size_t, kFamilyCount> calls_{};
};

/// Signals for one analysis window. A missing source carries the reason.
struct WindowInput {
  std::optional<rr::RRSeries> rr;
  std::optional<eda::EdaComponents> eda;
  std::string rr_error;
  std::string eda_error;
};

/// All registry features in registry order. A family that throws is left NaN
/// and reported through `diag`.
std::vector<double> extract_features(const WindowInput& in, const ExtractorOptions& opt,
                                     Diagnostics* diag = nullptr, TimingCounters* timing = nullptr);

/// Recording-level preprocessing shared by all windows of one participant.
struct RecordingSignals {
  std::vector<double> beat_times_s;  // recording clock
  std::optional<eda::EdaComponents> eda;  // whole recording at eda_fs
  std::string rr_error;
  std::string eda_error;
};
RecordingSignals prepare_recording(const dataset::SessionRecording& rec, const ExtractorOptions& opt);

/// Beats inside [t_begin, t_end) turned into an interval series.
rr::RRSeries window_rr(std::span<const double> beat_times_s, double t_begin, double t_end);

/// Samples [begin, end) of every component.
eda::EdaComponents slice_components(const eda::EdaComponents& c, std::size_t begin, std::size_t end);

WindowInput window_input(const RecordingSignals& sig, const dataset::SessionRecording& rec,
                         const dataset::SessionWindow& w, const ExtractorOptions& opt);

}  // namespace physio::extract
