#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "metatriage/corpus.hpp"
#include "metatriage/evaluate.hpp"

namespace metatriage {

/// Settings shared by every experiment.
struct ExperimentContext {
  PipelineConfig pipeline;
  std::size_t k = 10;
  std::uint64_t seed = 0;
  /// Columns of a ranking fitted once up front. When set, experiments select
  /// from this list instead of re-ranking inside every training fold.
  std::optional<std::vector<std::string>> frozen_ranking;
};

struct BenchmarkGrid {
  std::vector<double> malware_fractions{0.02, 0.25, 0.50};
  std::vector<std::uint32_t> thresholds{1, 2, 4};
  std::size_t subset_size = 5000;
  std::vector<ModelKind> models{ModelKind::logistic, ModelKind::linear_svm, ModelKind::forest};
  AmbiguousHandling ambiguous = AmbiguousHandling::exclude;
};

inline constexpr std::size_t kFullScaleSubsetSize = 50000;

/// One result row: a (cell, model, variant) triple aggregated over folds.
struct BenchRow {
  double malware_fraction = 0.0;
  std::uint32_t threshold = 0;
  std::string model;
  std::string variant;
  std::size_t parameter = 0;  // hash width, feature count or window start
  std::size_t n_rows = 0;
  std::size_t n_malware = 0;
  MetricSet train, test;
  double test_f1_stddev = 0.0;
  bool infeasible = false;
  std::string note;
  /// Display-only reference numbers keyed like "test_f1"; never asserted.
  std::map<std::string, double> reference;
};

struct RocSeries {
  std::string label;
  std::vector<RocPoint> points;
  double auc = 0.0;
};

struct RankedColumn {
  std::string name;
  double score = 0.0;  // normalised to the top score
};

struct BenchReport {
  std::string experiment;  // hash-sweep, feature-curve, grid, robustness
  std::vector<BenchRow> rows;
  std::vector<RocSeries> roc;
  std::vector<RankedColumn> ranking;
  std::vector<std::string> flags;
  nlohmann::ordered_json provenance = nlohmann::ordered_json::object();

  nlohmann::ordered_json to_json() const;
};

BenchReport bench_report_from_json(const nlohmann::ordered_json& doc);

std::vector<std::size_t> default_hash_sizes();

/// Cross-validated scores using permission-hash columns only, one point per
/// width. Failing points are marked infeasible and the sweep continues.
BenchReport hash_size_sweep(const LabeledDataset& dataset, const std::vector<std::size_t>& sizes, ModelKind model,
                            const ExperimentContext& context);

/// 1..min(P, 30) followed by P itself.
std::vector<std::size_t> default_feature_counts(std::size_t n_columns);

/// Test F1 of every model on the top-k columns for each k.
BenchReport feature_count_curve(const LabeledDataset& dataset, const std::vector<std::size_t>& counts,
                                const std::vector<ModelKind>& models, const ExperimentContext& context);

/// Every (fraction, threshold) cell composed from the corpus and evaluated
/// with each model on the given selection.
BenchReport grid_benchmark(const std::vector<AppRecord>& corpus, const BenchmarkGrid& grid,
                           const FeatureSelectionSpec& selection, const ExperimentContext& context);

struct RobustnessOptions {
  std::vector<std::uint32_t> thresholds{1, 2, 4};
  double malware_fraction = 0.50;
  std::size_t subset_size = 5000;
  std::vector<std::size_t> starts{1, 3, 5, 7, 9, 11, 13};
  std::size_t width = 15;
  ModelKind model = ModelKind::forest;
  AmbiguousHandling ambiguous = AmbiguousHandling::exclude;
};

/// Sliding windows over the ranking, one row per (threshold, window).
BenchReport robustness_windows(const std::vector<AppRecord>& corpus, const RobustnessOptions& options,
                               const ExperimentContext& context);

/// Ranking of a whole dataset as display rows.
std::vector<RankedColumn> ranked_columns(const LabeledDataset& dataset, const PipelineConfig& config,
                                         std::size_t limit);

// ---------------------------------------------------------------------------
// Report output

struct EmitFormats {
  bool csv = true;
  bool markdown = true;
  bool svg = true;
};

void write_results_csv(std::ostream& out, const BenchReport& report);
std::string render_markdown(const BenchReport& report);

/// Writes results.csv, report.md, *.svg, provenance.json and report.json into
/// dir. All files are staged first; on failure nothing new is left behind.
/// Returns the written paths.
std::vector<std::filesystem::path> emit_report(const BenchReport& report, const std::filesystem::path& dir,
                                               const EmitFormats& formats = {});

}  // namespace metatriage
