#include "physio/registry.hpp"

#include <unordered_map>

#include "physio/common.hpp"

namespace physio {

const char* to_string(FeatureFamily family) {
  switch (family) {
    case FeatureFamily::rr_temporal: return "rr_temporal";
    case FeatureFamily::scl_temporal: return "scl_temporal";
    case FeatureFamily::scr_temporal: return "scr_temporal";
    case FeatureFamily::smna_temporal: return "smna_temporal";
    case FeatureFamily::rr_geometric: return "rr_geometric";
    case FeatureFamily::rr_frequency: return "rr_frequency";
    case FeatureFamily::eda_frequency: return "eda_frequency";
    case FeatureFamily::combined: return "combined";
    case FeatureFamily::lagged_poincare: return "lagged_poincare";
    case FeatureFamily::fractal: return "fractal";
    case FeatureFamily::dfa: return "dfa";
    case FeatureFamily::symbolic: return "symbolic";
    case FeatureFamily::attention_entropy: return "attention_entropy";
    case FeatureFamily::comeda: return "comeda";
    case FeatureFamily::rqa: return "rqa";
    case FeatureFamily::entropy: return "entropy";
    case FeatureFamily::bispectrum: return "bispectrum";
    case FeatureFamily::visibility_graph: return "visibility_graph";
  }
  return "unknown";
}

namespace {

std::vector<FeatureSpec> build_registry() {
  using F = FeatureFamily;
  std::vector<FeatureSpec> r;
  auto add = [&r](std::string name, F fam, std::string src, std::string desc) {
    r.push_back({std::move(name), fam, std::move(src), std::move(desc)});
  };

  add("meanRR", F::rr_temporal, "RR", "mean RR interval (ms)");
  add("stdRR", F::rr_temporal, "RR", "sample standard deviation of RR (ms)");
  add("SDSD", F::rr_temporal, "RR", "standard deviation of successive differences (ms)");
  add("RMSSD", F::rr_temporal, "RR", "root mean square of successive differences (ms)");
  add("NN50", F::rr_temporal, "RR", "count of |successive difference| > 50 ms");
  add("pNN50", F::rr_temporal, "RR", "100 * NN50 / (n - 1)");
  add("meanDER1", F::rr_temporal, "RR", "mean of first differences");
  add("stdDER1", F::rr_temporal, "RR", "standard deviation of first differences");
  add("meanDER2", F::rr_temporal, "RR", "mean of second differences");
  add("stdDER2", F::rr_temporal, "RR", "standard deviation of second differences");
  add("SkewRR", F::rr_temporal, "RR", "standardized third moment");
  add("KurtRR", F::rr_temporal, "RR", "standardized fourth moment (normal = 3)");

  const char* stat_names[] = {"mean", "median", "std", "MAD"};
  for (const char* s : stat_names)
    add(std::string("SCL_") + s, F::scl_temporal, "SCL", std::string(s) + " over the whole window");
  const char* win_names[] = {"meanWin", "medWin", "stdWin", "MADWin"};
  for (std::size_t i = 0; i < 4; ++i)
    add(std::string("SCL_") + win_names[i], F::scl_temporal, "SCL",
        std::string(stat_names[i]) + " per 20 s segment, averaged over segments");

  for (const char* s : stat_names)
    add(std::string("SCR_") + s, F::scr_temporal, "SCR", std::string(s) + " over the whole window");
  add("SCR_Npeaks", F::scr_temporal, "SCR", "number of detected peaks");
  add("SCR_MaxPeak", F::scr_temporal, "SCR", "largest peak amplitude");
  add("SCR_AmpSum", F::scr_temporal, "SCR", "sum of peak amplitudes");
  for (std::size_t i = 0; i < 4; ++i)
    add(std::string("SCR_") + win_names[i], F::scr_temporal, "SCR",
        std::string(stat_names[i]) + " per 5 s segment, averaged over segments");
  add("SCR_AmpSumWin", F::scr_temporal, "SCR", "sum of peak amplitudes per 5 s segment, averaged");

  add("SMNA_mean", F::smna_temporal, "SMNA", "mean driver over the whole window");
  add("SMNA_MaxPeak", F::smna_temporal, "SMNA", "largest driver peak");
  add("SMNA_Npeaks", F::smna_temporal, "SMNA", "number of driver peaks");
  add("SMNA_AmpSum", F::smna_temporal, "SMNA", "sum of driver peak amplitudes");

  add("TriRR", F::rr_geometric, "RR", "n / count of the modal 1/128 s histogram bin");
  add("TINN", F::rr_geometric, "RR", "base width of the least-squares triangular histogram fit (ms)");

  add("LF_power", F::rr_frequency, "RR", "Welch power 0.04-0.15 Hz (ms^2)");
  add("HF_power", F::rr_frequency, "RR", "Welch power 0.15-0.4 Hz (ms^2)");
  add("LF_perc", F::rr_frequency, "RR", "100 * LF / total (0.003-0.4 Hz)");
  add("HF_perc", F::rr_frequency, "RR", "100 * HF / total (0.003-0.4 Hz)");
  add("LF_nu", F::rr_frequency, "RR", "LF / (LF + HF)");
  add("HF_nu", F::rr_frequency, "RR", "HF / (LF + HF)");
  add("LF/HF", F::rr_frequency, "RR", "LF / HF");
  add("LF_peak", F::rr_frequency, "RR", "PSD argmax within LF (Hz)");
  add("HF_peak", F::rr_frequency, "RR", "PSD argmax within HF (Hz)");

  add("EDASymp", F::eda_frequency, "SCL+SCR", "periodogram power 0.045-0.25 Hz");
  add("EDASymp_db", F::eda_frequency, "SCL+SCR", "10 log10 EDASymp");
  add("EDASymp_nu", F::eda_frequency, "SCL+SCR", "EDASymp / power 0.008-0.25 Hz");
  add("EDASymp_Welch", F::eda_frequency, "SCL+SCR", "Welch power 0.045-0.25 Hz");
  add("EDASymp_db_Welch", F::eda_frequency, "SCL+SCR", "10 log10 EDASymp_Welch");
  add("EDASymp_nu_Welch", F::eda_frequency, "SCL+SCR", "EDASymp_Welch / Welch power 0.008-0.25 Hz");

  add("EDASymp/HF", F::combined, "SCL+SCR+RR", "EDASymp / HF_power");
  add("EDASymp_Welch/HF", F::combined, "SCL+SCR+RR", "EDASymp_Welch / HF_power");

  const char* lpp_names[] = {"SD1", "SD2", "SD12", "rho", "P_surf", "SDRR"};
  const char* lpp_desc[] = {
      "sqrt(var(RR[i+M] - RR[i]) / 2)", "sqrt(var(RR[i+M] + RR[i]) / 2)", "SD1 / SD2",
      "Pearson correlation of (RR[i], RR[i+M])", "pi * SD1 * SD2",
      "sqrt((var(RR[i]) + var(RR[i+M])) / 2) over the lag-M pairs"};
  for (int lag = 1; lag <= 10; ++lag)
    for (std::size_t k = 0; k < 6; ++k)
      add(std::string(lpp_names[k]) + "_M" + std::to_string(lag), F::lagged_poincare, "RR",
          std::string(lpp_desc[k]) + " at lag " + std::to_string(lag));
  const char* auc_names[] = {"AUC_SD1", "AUC_SD2", "AUC_SD12", "AUC_rho_RR", "AUC_P_surf", "AUC_SDRR"};
  for (std::size_t k = 0; k < 6; ++k)
    add(auc_names[k], F::lagged_poincare, "RR",
        std::string("trapezoidal area of ") + lpp_names[k] + " over lags 1..10");

  add("FracDim", F::fractal, "RR", "Sevcik fractal dimension");
  add("HurstExp", F::fractal, "RR", "rescaled-range Hurst exponent");
  add("DFA_alpha1", F::dfa, "RR", "DFA slope over boxes 4-16");
  add("DFA_alpha2", F::dfa, "RR", "DFA slope over boxes 16-64");
  add("v0", F::symbolic, "RR", "% of 6-level words with no variation");
  add("v2", F::symbolic, "RR", "% of 6-level words with two variations");
  add("c1v", F::symbolic, "RR", "fraction of 4-level words over symbols {0,2} only");
  add("c3v", F::symbolic, "RR", "fraction of 4-level words over symbols {1,3} only");
  add("AttEn_maxmax", F::attention_entropy, "RR", "entropy of max-to-max key-point intervals");
  add("AttEn_minmin", F::attention_entropy, "RR", "entropy of min-to-min key-point intervals");
  add("AttEn_maxmin", F::attention_entropy, "RR", "entropy of max-to-min key-point intervals");
  add("AttEn_minmax", F::attention_entropy, "RR", "entropy of min-to-max key-point intervals");
  add("AttEn_average", F::attention_entropy, "RR", "mean of the four attention entropies");
  add("ComEDA", F::comeda, "SCR", "distribution entropy of the SCR phase space");
  add("MComEDA", F::comeda, "SCR", "median ComEDA over coarse-grained scales 1-5");

  add("rec_rate", F::rqa, "RR", "recurrence density");
  add("det", F::rqa, "RR", "determinism: recurrent points on diagonals >= 2");
  add("avg_diag", F::rqa, "RR", "mean diagonal line length");
  add("ratio", F::rqa, "RR", "det / rec_rate");
  add("ent", F::rqa, "RR", "Shannon entropy of diagonal line lengths");
  add("lam", F::rqa, "RR", "laminarity: recurrent points on verticals >= 2");
  add("trap_time", F::rqa, "RR", "mean vertical line length");
  add("max_len", F::rqa, "RR", "longest diagonal line");
  add("mean_rec_time", F::rqa, "RR", "mean recurrence time (vertical gaps)");
  add("SampEn", F::entropy, "RR", "sample entropy, m = 2, r = 0.2 sd");
  add("FuzzyEn", F::entropy, "RR", "fuzzy entropy, m = 2, r = 0.2 sd, gradient 2");
  add("DistEn", F::entropy, "RR", "distribution entropy, m = 2, 512 bins");

  add("Phase_Entr", F::bispectrum, "RR", "entropy of the biphase histogram");
  add("Mean_Magn", F::bispectrum, "RR", "mean bispectral magnitude");
  add("Mean_P", F::bispectrum, "RR", "mean of squared bispectral magnitude");
  add("std_P", F::bispectrum, "RR", "standard deviation of squared bispectral magnitude");
  add("N_Bis_Ent", F::bispectrum, "RR", "normalized bispectral entropy");
  add("N_Bis_Sq_Ent", F::bispectrum, "RR", "normalized bispectral squared entropy");
  add("Sum_log_Amp", F::bispectrum, "RR", "sum of log bispectral amplitudes");
  add("LL_RR", F::bispectrum, "RR", "mean |B| over LF x LF");
  add("LH_RR", F::bispectrum, "RR", "mean |B| over LF x HF");
  add("HH_RR", F::bispectrum, "RR", "mean |B| over HF x HF");

  add("ShortPathLen", F::visibility_graph, "RR", "mean shortest path length");
  add("GlobClusterCoef", F::visibility_graph, "RR", "global clustering (transitivity)");
  add("LocalClusterCoef_mean", F::visibility_graph, "RR", "mean local clustering coefficient");
  add("Degree_mean", F::visibility_graph, "RR", "mean node degree");
  return r;
}

}  // namespace

const std::vector<FeatureSpec>& feature_registry() {
  static const std::vector<FeatureSpec> registry = build_registry();
  return registry;
}

std::vector<std::string> feature_names() {
  std::vector<std::string> out;
  for (const auto& f : feature_registry()) out.push_back(f.name);
  return out;
}

std::size_t feature_index(std::string_view name) {
  static const auto index = [] {
    std::unordered_map<std::string, std::size_t> m;
    const auto& reg = feature_registry();
    for (std::size_t i = 0; i < reg.size(); ++i) m.emplace(reg[i].name, i);
    return m;
  }();
  const auto it = index.find(std::string(name));
  if (it == index.end()) throw Error(ErrorKind::config, "unknown feature '" + std::string(name) + "'");
  return it->second;
}

}  // namespace physio
