#include "doctest.h"

#include <cmath>
#include <sstream>

#include "physio/common.hpp"
#include "physio/dataset.hpp"
#include "test_util.hpp"

using namespace physio;
using namespace physio::dataset;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected physio::Error");
  return ErrorKind::contract;
}

// Physiology at `fs` with one label per sample and a matching 20 Hz trace.
SessionRecording synthetic_recording(const std::vector<std::pair<std::string, double>>& segments, double fs = 1000.0) {
  SessionRecording rec;
  rec.participant_id = "7";
  rec.fs_phys = fs;
  rec.fs_annot = 20.0;
  std::vector<double> ecg, eda;
  for (const auto& [video, seconds] : segments) {
    const auto n = static_cast<std::size_t>(std::lround(seconds * fs));
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(ecg.size()) / fs;
      ecg.push_back(t);
      eda.push_back(-t);
      rec.physio_video.push_back(video);
    }
  }
  rec.channels["ecg"] = ecg;
  rec.channels["eda"] = eda;
  const double total = static_cast<double>(ecg.size()) / fs;
  for (std::size_t k = 0; static_cast<double>(k) / 20.0 < total - 1e-9; ++k) {
    const double t = static_cast<double>(k) / 20.0;
    rec.annot_time.push_back(t);
    rec.arousal.push_back(t);
  }
  return rec;
}

}  // namespace

TEST_CASE("toy physiology file loads at its length") {
  testutil::TempDir dir("ds");
  std::ostringstream phys, ann;
  phys << "daqtime,ecg\n";
  for (int i = 0; i < 5000; ++i) phys << i << "," << std::sin(i * 0.01) << "\n";
  ann << "jstime,arousal\n";
  for (int k = 0; k < 100; ++k) ann << k * 50 << ",5\n";
  testutil::write_file(dir.file("p.csv"), phys.str());
  testutil::write_file(dir.file("a.csv"), ann.str());
  ColumnMapping m;
  m.eda.clear();
  m.physio_video.clear();
  m.annot_video.clear();
  const auto rec = load_recording({"1", dir.file("p.csv"), dir.file("a.csv")}, m, 1000.0, 20.0);
  CHECK(rec.samples() == 5000);
  CHECK(rec.channels.at("ecg").size() == 5000);
  CHECK(rec.arousal.size() == 100);
}

TEST_CASE("annotation gap is filled by linear interpolation") {
  std::vector<double> t, v;
  std::vector<std::string> labels;
  for (int k = 0; k <= 40; ++k) {
    if (k == 20) continue;  // t = 1.00 s missing
    t.push_back(k * 0.05);
    v.push_back(k == 19 ? 3.0 : (k == 21 ? 4.0 : 5.0));
    labels.push_back("1");
  }
  regularize_annotations(t, v, labels, 20.0);
  REQUIRE(t.size() == 41);
  CHECK(t[20] == doctest::Approx(1.0));
  CHECK(v[20] == doctest::Approx(3.5));
  CHECK(labels.size() == 41);
}

TEST_CASE("missing arousal column is a configuration error") {
  testutil::TempDir dir("ds");
  testutil::write_file(dir.file("p.csv"), "daqtime,ecg,gsr,video\n0,0,1,1\n1,0,1,1\n");
  testutil::write_file(dir.file("a.csv"), "jstime,valence,video\n0,5,1\n50,5,1\n");
  const ColumnMapping m;
  CHECK(kind_of([&] { load_recording({"1", dir.file("p.csv"), dir.file("a.csv")}, m, 1000.0, 20.0); }) ==
        ErrorKind::config);
}

TEST_CASE("non-monotone physiology timestamps are a data error") {
  testutil::TempDir dir("ds");
  testutil::write_file(dir.file("p.csv"), "daqtime,ecg,gsr,video\n0,0,1,1\n2,0,1,1\n1,0,1,1\n");
  testutil::write_file(dir.file("a.csv"), "jstime,arousal,video\n0,5,1\n50,5,1\n");
  CHECK(kind_of([&] { load_recording({"1", dir.file("p.csv"), dir.file("a.csv")}, {}, 1000.0, 20.0); }) ==
        ErrorKind::data);
}

TEST_CASE("window is the final part of the stimulus segment") {
  SUBCASE("119 s segment drops its first 3 s") {
    const auto rec = synthetic_recording({{"1", 10.0}, {"2", 119.0}, {"3", 5.0}}, 100.0);
    const auto w = extract_window(rec, "2", 116.0);
    CHECK(w.phys_end - w.phys_begin == 11600);
    CHECK(w.t_begin == doctest::Approx(13.0));
    CHECK(w.t_end == doctest::Approx(129.0));
    CHECK(w.ecg.front() == doctest::Approx(13.0));
  }
  SUBCASE("197 s segment keeps 116 s of both traces") {
    const auto rec = synthetic_recording({{"5", 197.0}});
    const auto w = extract_window(rec, "5", 116.0);
    CHECK(w.ecg.size() == 116000);
    CHECK(w.eda.size() == 116000);
    CHECK(w.arousal.size() == 116 * 20);
    CHECK(w.arousal.back() == doctest::Approx(196.95));
  }
  SUBCASE("short segment is a window error") {
    const auto rec = synthetic_recording({{"1", 100.0}}, 100.0);
    CHECK(kind_of([&] { extract_window(rec, "1", 116.0); }) == ErrorKind::window);
  }
}

TEST_CASE("response is the mean arousal of the window") {
  SessionWindow w;
  w.arousal.assign(50, 5.0);
  CHECK(compute_response(w) == doctest::Approx(5.0));
  w.arousal = {1, 2, 3, 4};
  CHECK(compute_response(w) == doctest::Approx(2.5));
  w.arousal.clear();
  for (int i = 0; i <= 100; ++i) w.arousal.push_back(0.5 + 9.0 * i / 100.0);
  CHECK(compute_response(w) == doctest::Approx(5.0));
  w.arousal.clear();
  CHECK(kind_of([&] { compute_response(w); }) == ErrorKind::data);
}

TEST_CASE("design assembly standardizes and orders rows") {
  std::vector<DesignRow> rows = {
      {{"2", "1"}, {3.0, 1.0}, 4.0},
      {{"1", "10"}, {1.0, 1.0}, 1.0},
      {{"1", "2"}, {2.0, 1.0}, 2.0},
  };
  const auto fm = assemble_design(rows, {"a", "b"});
  REQUIRE(fm.X.rows() == 3);
  CHECK(fm.row_keys[0].video == "2");  // numeric order: 2 before 10
  CHECK(fm.row_keys[1].video == "10");
  CHECK(fm.row_keys[2].participant == "2");
  CHECK(std::abs(fm.X.col(0).mean()) < 1e-12);
  const double sd = std::sqrt((fm.X.col(0).array() - fm.X.col(0).mean()).square().sum() / 2.0);
  CHECK(sd == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fm.X.col(1).isZero());
  CHECK(fm.warnings.size() == 1);
  CHECK(std::abs(fm.y.mean()) < 1e-12);
}

TEST_CASE("design rows do not depend on input order") {
  std::vector<DesignRow> rows;
  for (int p = 1; p <= 30; ++p)
    for (int v = 1; v <= 8; ++v)
      rows.push_back({{std::to_string(p), std::to_string(v)}, {double(p * v % 7), double(p + v)}, double(p % 5)});
  auto fwd = assemble_design(rows, {"a", "b"});
  std::reverse(rows.begin(), rows.end());
  auto rev = assemble_design(rows, {"a", "b"});
  CHECK(fwd.X.rows() == 240);
  CHECK(fwd.X == rev.X);
  CHECK(fwd.y == rev.y);
}

TEST_CASE("non-finite entries are imputed by the column median") {
  std::vector<DesignRow> rows = {
      {{"1", "1"}, {1.0}, 1.0},
      {{"1", "2"}, {NAN}, 2.0},
      {{"1", "3"}, {3.0}, 3.0},
      {{"1", "4"}, {5.0}, 4.0},
  };
  const auto raw = assemble_design(rows, {"a"}, false);
  CHECK(raw.X(1, 0) == doctest::Approx(3.0));
  CHECK(raw.X.allFinite());
}

TEST_CASE("features.csv round trip") {
  testutil::TempDir dir("ds");
  FeatureTable t;
  t.config_hash = "abc123";
  t.col_names = {"x", "y/z"};
  t.rows = {{{"1", "1"}, {0.1, 1e-300}, 2.5}, {{"1", "2"}, {NAN, -3.0}, 7.0}};
  write_features_csv(dir.file("f.csv"), t);
  const auto back = read_features_csv(dir.file("f.csv"));
  CHECK(back.config_hash == "abc123");
  CHECK(back.col_names == t.col_names);
  REQUIRE(back.rows.size() == 2);
  CHECK(back.rows[0].features[1] == 1e-300);
  CHECK(std::isnan(back.rows[1].features[0]));
  CHECK(back.rows[1].response == 7.0);
}

TEST_CASE("malformed features.csv names the line") {
  testutil::TempDir dir("ds");
  testutil::write_file(dir.file("f.csv"), "participant,video,response,a\n1,1,2.0,3\n1,2,oops,4\n");
  try {
    read_features_csv(dir.file("f.csv"));
    FAIL("expected a data error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::data);
    CHECK(std::string(e.what()).find("3") != std::string::npos);
  }
}

TEST_CASE("video labels are normalized") {
  CHECK(normalize_label("3.0") == "3");
  CHECK(normalize_label(" 12 ") == "12");
  CHECK(normalize_label("intro") == "intro");
  CHECK(label_less("2", "10"));
  CHECK(label_less("a", "b"));
}
