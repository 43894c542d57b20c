#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace physio {

/// Ordered (name, value) pairs emitted by one extractor.
using NamedValues = std::vector<std::pair<std::string, double>>;

enum class FeatureFamily {
  rr_temporal,
  scl_temporal,
  scr_temporal,
  smna_temporal,
  rr_geometric,
  rr_frequency,
  eda_frequency,
  combined,
  lagged_poincare,
  fractal,
  dfa,
  symbolic,
  attention_entropy,
  comeda,
  rqa,
  entropy,
  bispectrum,
  visibility_graph,
};

const char* to_string(FeatureFamily family);

struct FeatureSpec {
  std::string name;
  FeatureFamily family;
  std::string source;  // RR, SCL, SCR, SMNA, SCL+SCR, SCL+SCR+RR
  std::string description;
};

/// The canonical feature battery in emission order (162 entries).
const std::vector<FeatureSpec>& feature_registry();

std::vector<std::string> feature_names();

/// Position of `name` in the registry; throws config error if unknown.
std::size_t feature_index(std::string_view name);

}  // namespace physio
