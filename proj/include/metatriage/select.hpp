#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "metatriage/featurize.hpp"
#include "metatriage/learn.hpp"

namespace metatriage {

/// borda is a rank aggregation over the four scoring methods, not a score of
/// its own.
enum class SelectionMethod { chi_squared, info_gain, gain_ratio, mdni, borda };

const char* to_string(SelectionMethod method);
SelectionMethod selection_method_from_string(const std::string& name);

/// Scores of one discretised feature against binary labels. `degenerate` is
/// set when the feature occupies a single bin (score 0).
struct DiscreteScore {
  double value = 0.0;
  bool degenerate = false;
};

/// Pearson chi-squared statistic of the bins x labels contingency table.
DiscreteScore score_chi_squared(std::span<const int> binned_feature, std::span<const int> labels);
/// H(y) - H(y|X) in bits.
DiscreteScore score_information_gain(std::span<const int> binned_feature, std::span<const int> labels);
/// IG / H(X); 0 when H(X) = 0.
DiscreteScore score_gain_ratio(std::span<const int> binned_feature, std::span<const int> labels);

/// Mean decrease in node impurity per feature, averaged over trees.
std::vector<double> score_mdni(const ForestModel& forest);

struct FeatureScore {
  SelectionMethod method = SelectionMethod::mdni;
  std::vector<double> raw;
  std::vector<double> normalized;  // raw / max(raw); zeros when max is 0
};

FeatureScore make_feature_score(SelectionMethod method, std::vector<double> raw);

using ScoresByMethod = std::map<SelectionMethod, FeatureScore>;

struct ScoringOptions {
  std::vector<SelectionMethod> methods{SelectionMethod::chi_squared, SelectionMethod::info_gain,
                                       SelectionMethod::gain_ratio, SelectionMethod::mdni};
  std::size_t n_bins = 10;
  /// Forest fitted to obtain MDNI scores.
  ForestParams ranking_forest{};
};

/// Scores every column of x. Continuous columns are discretised with
/// bin_column for the contingency-based methods; MDNI uses raw values.
ScoresByMethod score_features(const FeatureMatrix& x, std::span<const int> labels, const ScoringOptions& options);

struct RankedFeatures {
  std::vector<std::size_t> order;  // column indices, best first
  ScoresByMethod by_method;
  SelectionMethod ranking_method = SelectionMethod::mdni;
};

/// Descending by the chosen method's raw scores (Borda points for borda), ties
/// by ascending column index.
RankedFeatures rank_features(const ScoresByMethod& by_method, SelectionMethod ranking_method);

struct WindowSelection {
  RankedFeatures ranked;
  std::vector<std::size_t> columns;  // ranks [start, start + width - 1]
};

/// start is 1-based. Throws ContractError when the window leaves the ranking.
WindowSelection rank_and_window(const ScoresByMethod& by_method, SelectionMethod ranking_method, std::size_t start,
                                std::size_t width);

/// rank,column,method,raw,normalized, one row per (rank, method).
void write_ranking_csv(std::ostream& out, const RankedFeatures& ranked, const std::vector<std::string>& column_names);

}  // namespace metatriage
