// Command-line front end: extract -> select -> fit -> report, plus synth-bench.
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "physio/common.hpp"
#include "physio/pipeline.hpp"

namespace pl = physio::pipeline;

int main(int argc, char** argv) {
  CLI::App app{"FDR-controlled discovery of physiological features of arousal"};
  app.require_subcommand(1);

  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  double alpha = 0.0;
  std::vector<double> alpha_grid;
  int k = 0;
  std::string variant;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "pipeline configuration (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory (overrides output_dir)");
    sub->add_option("--threads", threads, "worker threads, 0 for all cores");
  };
  auto add_selector = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "selector seed");
    sub->add_option("--alpha", alpha, "target FDR")->check(CLI::Range(0.0, 1.0));
    sub->add_option("--alpha-grid", alpha_grid, "target FDR values for the sweep")->delimiter(',');
    sub->add_option("--k", k, "number of random experiments")->check(CLI::PositiveNumber);
    sub->add_option("--variant", variant, "plain or da-nn")->check(CLI::IsMember({"plain", "da-nn"}));
  };

  auto* extract = app.add_subcommand("extract", "window the recordings and compute every feature");
  auto* select = app.add_subcommand("select", "run the calibrated T-Rex selector on features.csv");
  auto* fit = app.add_subcommand("fit", "fit classical and robust mixed models on the selection");
  auto* report = app.add_subcommand("report", "write summary.txt from the stage outputs");
  auto* bench = app.add_subcommand("synth-bench", "empirical FDR and TPR on synthetic designs");
  for (auto* sub : {extract, select, fit, report, bench}) add_common(sub);
  for (auto* sub : {select, bench}) add_selector(sub);
  // fit and report only read stage files, but accept the selector flags so the
  // config hash matches the select invocation.
  for (auto* sub : {fit, report}) add_selector(sub);

  CLI11_PARSE(app, argc, argv);

  pl::Overrides ov;
  auto given = [&](const char* flag) {
    for (auto* sub : app.get_subcommands()) {
      const auto* opt = sub->get_option_no_throw(flag);
      if (opt != nullptr && opt->count() > 0) return true;
    }
    return false;
  };
  if (given("--out")) ov.output_dir = out;
  if (given("--threads")) ov.threads = threads;
  if (given("--seed")) ov.seed = seed;
  if (given("--alpha")) ov.alpha = alpha;
  if (given("--alpha-grid")) ov.alpha_grid = alpha_grid;
  if (given("--k")) ov.K = k;
  if (given("--variant")) ov.variant = variant;

  try {
    const bool needs_data = extract->parsed();
    const auto cfg = pl::load_config(config, ov, needs_data);
    if (extract->parsed()) return pl::cmd_extract(cfg, std::cout);
    if (select->parsed()) return pl::cmd_select(cfg, std::cout);
    if (fit->parsed()) return pl::cmd_fit(cfg, std::cout);
    if (report->parsed()) return pl::cmd_report(cfg, std::cout);
    return pl::cmd_synth_bench(cfg, std::cout);
  } catch (const physio::Error& e) {
    std::cerr << "error (" << physio::to_string(e.kind()) << "): " << e.what() << "\n";
    return physio::exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return physio::exit_code_for(physio::ErrorKind::numeric);
  }
}
