#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "metatriage/corpus.hpp"
#include "metatriage/featurize.hpp"
#include "metatriage/learn.hpp"
#include "metatriage/select.hpp"

namespace metatriage {

struct ConfusionMatrix {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::size_t total() const { return tp + fp + tn + fn; }
};

struct ClassificationMetrics {
  ConfusionMatrix confusion;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;  // harmonic mean 2PR/(P+R)
  bool precision_undefined = false;  // tp + fp == 0
  bool recall_undefined = false;     // tp + fn == 0
};

ClassificationMetrics classification_metrics(std::span<const int> labels, std::span<const int> predicted);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // (0,0) first, (1,1) last
  double auc = 0.0;
};

/// Threshold sweep over distinct scores, descending; tied scores form one step
/// so ties count one half. Throws ContractError when a class is missing.
RocCurve roc_and_auc(std::span<const double> scores, std::span<const int> labels);

/// Score threshold t (predict malware iff score >= t) maximising F1 on the
/// given rows; the highest such threshold wins ties.
double tune_threshold_max_f1(std::span<const double> scores, std::span<const int> labels);

std::vector<int> apply_threshold(std::span<const double> scores, double threshold);

/// Stratified assignment of rows to k folds. Returns the sorted test rows of
/// every fold; the folds partition [0, n) and sizes differ by at most one.
std::vector<std::vector<std::size_t>> stratified_folds(std::span<const int> labels, std::size_t k, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Cross-validation

struct FeatureSelectionSpec {
  enum class Mode { all, top_k, window, columns };
  Mode mode = Mode::all;
  std::size_t k = 15;         // top_k
  std::size_t start = 1;      // window, 1-based
  std::size_t width = 15;     // window
  std::vector<std::string> columns;  // columns (a frozen ranking)

  static FeatureSelectionSpec all_features() { return {}; }
  static FeatureSelectionSpec top(std::size_t k);
  static FeatureSelectionSpec window(std::size_t start, std::size_t width);
  static FeatureSelectionSpec named(std::vector<std::string> columns);
  std::string describe() const;
};

struct PipelineConfig {
  HashConfig hash;
  FeatureGroups groups;
  double reputation_alpha = 1.0;
  /// Build reputation tables over the whole dataset, test rows included.
  bool paper_leaky = false;
  std::size_t n_bins = 10;
  SelectionMethod ranking_method = SelectionMethod::mdni;
  ForestParams ranking_forest{.n_trees = 30, .max_depth = {}, .min_leaf = 1, .mtry = {}, .seed = 0, .bootstrap = true};
  Hyperparams hyperparams;
};

nlohmann::ordered_json to_json(const PipelineConfig& config);

/// Everything fitted on one fold's training chunk.
struct PreparedFold {
  std::size_t index = 0;
  std::vector<std::size_t> train_rows, test_rows;  // into the dataset
  ReputationTable developer_table, issuer_table;
  FeatureMatrix train, test;  // raw (unstandardised) features
  std::optional<RankedFeatures> ranking;
  /// Set when a class is missing from the train or test chunk.
  std::optional<std::string> excluded_reason;
};

/// Called once per fold after its state is fitted (leakage instrumentation).
using FoldObserver = std::function<void(const PreparedFold&)>;

struct MetricSet {
  double precision = 0.0, recall = 0.0, f1 = 0.0, auc = 0.0;
};

struct FoldResult {
  std::size_t fold = 0;
  std::size_t n_train = 0, n_test = 0;
  MetricSet train, test;
  double threshold = 0.0;
  bool excluded = false;
  std::string flag;
  std::vector<std::string> selected_columns;
};

struct MetricSummary {
  double mean = 0.0, stddev = 0.0, min = 0.0, max = 0.0;
};

struct EvalReport {
  std::string variant;
  ModelKind model = ModelKind::forest;
  std::size_t k = 10;
  std::uint64_t seed = 0;
  std::size_t n_rows = 0;
  std::vector<FoldResult> folds;
  /// Keys: train_precision ... test_auc, over folds not excluded.
  std::map<std::string, MetricSummary> summary;
  std::vector<std::string> flags;
  /// Out-of-fold test scores and labels in fold order, for pooled ROC curves.
  std::vector<double> oof_scores;
  std::vector<int> oof_labels;

  double mean(const std::string& key) const;
  nlohmann::ordered_json to_json() const;
};

void write_eval_csv(std::ostream& out, const EvalReport& report);

struct EvalVariant {
  std::string label;
  ModelKind model = ModelKind::forest;
  FeatureSelectionSpec selection;
};

/// Stratified k-fold CV evaluating every variant on the same folds. Per fold
/// the reputation tables, binning, standardisation, ranking and model are
/// fitted on the training chunk only (unless config.paper_leaky).
std::vector<EvalReport> cross_validate_variants(const LabeledDataset& dataset, const PipelineConfig& config,
                                                const std::vector<EvalVariant>& variants, std::size_t k,
                                                std::uint64_t seed, const FoldObserver& observer = {});

EvalReport cross_validate(const LabeledDataset& dataset, const PipelineConfig& config, ModelKind model,
                          std::size_t k, std::uint64_t seed,
                          const FeatureSelectionSpec& selection = FeatureSelectionSpec::all_features(),
                          const FoldObserver& observer = {});

/// Ranking fitted on the whole dataset (not leakage-safe; for frozen-ranking
/// runs and rank reports).
RankedFeatures rank_dataset(const LabeledDataset& dataset, const PipelineConfig& config,
                            const std::vector<SelectionMethod>& methods, FeatureMatrix* features = nullptr);

}  // namespace metatriage
