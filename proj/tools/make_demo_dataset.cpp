// Writes a small synthetic dataset shaped like the CASE recordings (1 kHz
// physiology with video labels, 20 Hz joystick arousal) plus a pipeline config.
// Arousal drives heart rate, tonic skin conductance and the phasic driver rate.
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string out = "demo";
  int participants = 10;
  int videos = 4;
  double video_s = 126.0;
  double window_s = 116.0;
  double fs = 1000.0;
  double fs_annot = 20.0;
  unsigned seed = 7;
};

const char* kClasses[] = {"amusing", "boring", "relaxed", "scary"};
const char* kColors[] = {"#ee7733", "#0077bb", "#009988", "#cc3311"};
const double kClassArousal[] = {6.5, 3.0, 2.5, 7.0};

void write_participant(const Options& o, int pid, std::mt19937_64& gen, const fs::path& dir) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif;
  const double total = o.videos * o.video_s;
  const auto n = static_cast<std::size_t>(std::llround(total * o.fs));

  std::vector<double> level(static_cast<std::size_t>(o.videos));
  for (int v = 0; v < o.videos; ++v) level[static_cast<std::size_t>(v)] = kClassArousal[v % 4] + 0.8 * normal(gen);
  const double subject_scl = 2.0 + 0.5 * normal(gen);
  const double subject_rr = 0.95 + 0.06 * normal(gen);
  const double subject_gain = 0.025 * std::exp(0.3 * normal(gen));  // RR shortening per arousal unit
  const double scl_gain = 0.15 * std::exp(0.4 * normal(gen));
  // Physiology follows a felt arousal that the joystick only reports noisily;
  // the offset spread leaves most of the rating unexplained by physiology.
  std::vector<double> felt(level.size());
  for (std::size_t v = 0; v < level.size(); ++v) felt[v] = 2.0 * normal(gen);
  auto video_at = [&](double t) { return std::min(o.videos - 1, static_cast<int>(t / o.video_s)); };
  auto ramp = [&](double t, const std::vector<double>& off) {
    const int v = video_at(t);
    const double start = v * o.video_s;
    const auto cur = static_cast<std::size_t>(v);
    const double prev = v == 0 ? 5.0 : level[cur - 1] + off[cur - 1];
    const double w = std::min(1.0, (t - start) / 10.0);  // 10 s ramp into each clip
    return prev + w * (level[cur] + off[cur] - prev);
  };
  const std::vector<double> none(level.size(), 0.0);
  auto arousal_at = [&](double t) { return ramp(t, none); };
  auto felt_at = [&](double t) { return ramp(t, felt); };

  // Beat times: RR shortens with arousal, with respiratory and slow modulation.
  std::vector<double> beats;
  for (double t = 0.3; t < total;) {
    beats.push_back(t);
    const double a = felt_at(t);
    t += subject_rr - subject_gain * a + 0.03 * std::sin(2 * std::numbers::pi * 0.25 * t) + 0.02 * std::sin(2 * std::numbers::pi * 0.08 * t) +
         0.02 * normal(gen);
  }
  // Sudomotor bursts: Poisson with arousal-dependent rate.
  std::vector<double> driver(static_cast<std::size_t>(total * 10.0) + 1, 0.0);  // 10 Hz impulse train
  for (std::size_t k = 0; k < driver.size(); ++k) {
    const double a = felt_at(static_cast<double>(k) / 10.0);
    if (unif(gen) < (0.01 + 0.012 * a) / 10.0) driver[k] = 0.3 + 0.2 * unif(gen);
  }
  // Phasic response by the Bateman kernel (tau0 = 2 s, tau1 = 0.7 s) at 10 Hz.
  std::vector<double> scr(driver.size(), 0.0);
  for (std::size_t k = 0; k < driver.size(); ++k) {
    if (driver[k] == 0.0) continue;
    for (std::size_t m = k; m < std::min(driver.size(), k + 200); ++m) {
      const double dt = static_cast<double>(m - k) / 10.0;
      scr[m] += driver[k] * (std::exp(-dt / 2.0) - std::exp(-dt / 0.7));
    }
  }

  std::ofstream ph(dir / ("physio_" + std::to_string(pid) + ".csv"));
  ph << "daqtime,ecg,gsr,video\n";
  std::size_t next_beat = 0;
  double scl_state = subject_scl;
  char line[128];
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / o.fs;
    while (next_beat + 1 < beats.size() && beats[next_beat + 1] <= t) ++next_beat;
    double ecg = 0.05 * std::sin(2 * std::numbers::pi * 0.3 * t) + 0.02 * normal(gen);
    for (std::size_t b = next_beat; b < std::min(beats.size(), next_beat + 2); ++b) {
      const double d = t - beats[b];
      ecg += std::exp(-0.5 * (d / 0.010) * (d / 0.010)) - 0.15 * std::exp(-0.5 * ((d + 0.03) / 0.01) * ((d + 0.03) / 0.01)) +
             0.2 * std::exp(-0.5 * ((d - 0.25) / 0.04) * ((d - 0.25) / 0.04));
    }
    const double target = subject_scl + scl_gain * felt_at(t);
    scl_state += (target - scl_state) / (20.0 * o.fs);
    const double k = t * 10.0;
    const auto k0 = std::min(scr.size() - 2, static_cast<std::size_t>(k));
    const double phasic = scr[k0] + (k - static_cast<double>(k0)) * (scr[k0 + 1] - scr[k0]);
    const double gsr = scl_state + phasic + 0.003 * normal(gen);
    std::snprintf(line, sizeof line, "%.0f,%.5f,%.5f,%d\n", t * 1000.0, ecg, gsr, video_at(t) + 1);
    ph << line;
  }

  std::ofstream an(dir / ("annotations_" + std::to_string(pid) + ".csv"));
  an << "jstime,arousal,video\n";
  double smooth = arousal_at(0.0);
  for (double t = 0.0; t < total; t += 1.0 / o.fs_annot) {
    smooth += 0.1 * (arousal_at(t) + 0.5 * normal(gen) - smooth);
    const double a = std::clamp(smooth, 0.5, 9.5);
    std::snprintf(line, sizeof line, "%.0f,%.3f,%d\n", t * 1000.0, a, video_at(t) + 1);
    an << line;
  }
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"Write a synthetic demo dataset and a matching pipeline config"};
  app.add_option("--out", o.out, "output directory");
  app.add_option("--participants", o.participants)->check(CLI::Range(2, 1000));
  app.add_option("--videos", o.videos)->check(CLI::Range(1, 100));
  app.add_option("--video-seconds", o.video_s)->check(CLI::PositiveNumber);
  app.add_option("--window-seconds", o.window_s)->check(CLI::PositiveNumber);
  app.add_option("--seed", o.seed);
  CLI11_PARSE(app, argc, argv);
  if (o.window_s > o.video_s) {
    std::cerr << "window must not exceed the clip length\n";
    return 4;
  }

  const fs::path dir(o.out);
  fs::create_directories(dir / "data");
  std::mt19937_64 gen(o.seed);
  nlohmann::json cfg;
  cfg["participants"] = nlohmann::json::array();
  for (int p = 1; p <= o.participants; ++p) {
    write_participant(o, p, gen, dir / "data");
    cfg["participants"].push_back({{"id", std::to_string(p)},
                                   {"physio", "data/physio_" + std::to_string(p) + ".csv"},
                                   {"annotations", "data/annotations_" + std::to_string(p) + ".csv"}});
  }
  cfg["videos"] = nlohmann::json::array();
  for (int v = 1; v <= o.videos; ++v) {
    cfg["videos"].push_back(std::to_string(v));
    cfg["video_classes"][std::to_string(v)] = kClasses[(v - 1) % 4];
  }
  for (int c = 0; c < 4; ++c) cfg["class_colors"][kClasses[c]] = kColors[c];
  cfg["fs_phys"] = o.fs;
  cfg["fs_annot"] = o.fs_annot;
  cfg["window_s"] = o.window_s;
  cfg["output_dir"] = "out";
  cfg["selector"] = {{"alpha", 0.1}, {"K", 100}, {"seed", 42}, {"variant", "da-nn"}};
  cfg["synth"] = {{"reps", 5}, {"families", {"null", "ar1", "duplicated"}}};
  std::ofstream(dir / "config.json") << cfg.dump(2) << "\n";
  std::cout << "wrote " << o.participants << " participants x " << o.videos << " videos to " << dir.string() << "\n";
  return 0;
}
