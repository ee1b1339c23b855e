#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "metatriage/bench.hpp"

namespace metatriage {

inline constexpr const char* kToolVersion = "0.1.0";

/// Everything a subcommand needs; serialisable so provenance.json can replay it.
struct RunConfig {
  std::string command;
  std::uint64_t seed = 0;
  std::size_t threads = 0;  // 0: all hardware threads
  std::string corpus;
  std::string out;
  std::string tag;

  // generate
  std::string preset = "default";
  nlohmann::json generator = nlohmann::json::object();  // field overrides on the preset

  // labelling and composition
  std::uint32_t threshold = 4;
  bool ambiguous_as_goodware = false;
  double malware_fraction = 0.5;
  std::size_t subset_size = 5000;
  bool whole_corpus = false;

  PipelineConfig pipeline;
  std::size_t k = 10;
  ModelKind model = ModelKind::forest;
  std::vector<ModelKind> models{ModelKind::logistic, ModelKind::linear_svm, ModelKind::forest};
  FeatureSelectionSpec selection = FeatureSelectionSpec::top(15);
  std::vector<SelectionMethod> rank_methods{SelectionMethod::chi_squared, SelectionMethod::info_gain,
                                            SelectionMethod::gain_ratio, SelectionMethod::mdni};

  // experiments
  std::vector<double> fractions{0.02, 0.25, 0.50};
  std::vector<std::uint32_t> thresholds{1, 2, 4};
  bool full_scale = false;
  std::vector<std::size_t> hash_sizes{32, 64, 128, 256, 512, 1024, 2048};
  ModelKind sweep_model = ModelKind::logistic;
  std::vector<std::size_t> feature_counts;  // empty: 1..min(P,30) and P
  std::vector<std::size_t> window_starts{1, 3, 5, 7, 9, 11, 13};
  std::size_t window_width = 15;
  bool frozen_ranking = false;

  // report
  std::string from;
};

nlohmann::ordered_json to_json(const RunConfig& config);

/// Fields present in doc override base; unknown keys raise DataError.
RunConfig run_config_from_json(const nlohmann::json& doc, RunConfig base = {});

/// Configuration as recorded in provenance: threads, output location and tag
/// do not change results and are left out.
nlohmann::ordered_json provenance_config(const RunConfig& config);

/// Entry point of the metatriage executable. Returns 0 on success, 1 on usage
/// errors and 2 on data, contract or I/O errors.
int dispatch(int argc, const char* const* argv);

}  // namespace metatriage
