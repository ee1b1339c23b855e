#include "metatriage/select.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <ostream>

#include "metatriage/csv.hpp"
#include "metatriage/error.hpp"
#include "metatriage/parallel.hpp"

namespace metatriage {

namespace {

// Counts per (bin, label) with bin ids compressed to 0..k-1.
struct Contingency {
  std::vector<std::array<double, 2>> cells;
  std::array<double, 2> label_totals{0.0, 0.0};
  double n = 0.0;
};

Contingency tabulate(std::span<const int> bins, std::span<const int> labels) {
  if (bins.size() != labels.size()) throw ContractError("feature and label vectors differ in length");
  Contingency t;
  std::vector<int> ids(bins.begin(), bins.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  t.cells.assign(ids.size(), {0.0, 0.0});
  for (std::size_t i = 0; i < bins.size(); ++i) {
    const auto k = static_cast<std::size_t>(std::lower_bound(ids.begin(), ids.end(), bins[i]) - ids.begin());
    const int y = labels[i] == 1 ? 1 : 0;
    t.cells[k][y] += 1.0;
    t.label_totals[y] += 1.0;
  }
  t.n = static_cast<double>(bins.size());
  if (t.label_totals[0] == 0.0 || t.label_totals[1] == 0.0) {
    throw ContractError("feature scoring needs both label classes present");
  }
  return t;
}

double entropy_bits(std::span<const double> counts, double total) {
  double h = 0.0;
  for (double c : counts) {
    if (c > 0.0) {
      const double p = c / total;
      h -= p * std::log2(p);
    }
  }
  return h;
}

struct EntropyTerms {
  double h_y = 0.0, h_y_given_x = 0.0, h_x = 0.0;
};

EntropyTerms entropy_terms(const Contingency& t) {
  EntropyTerms e;
  e.h_y = entropy_bits(t.label_totals, t.n);
  std::vector<double> bin_totals;
  for (const auto& cell : t.cells) {
    const double nb = cell[0] + cell[1];
    bin_totals.push_back(nb);
    e.h_y_given_x += (nb / t.n) * entropy_bits(cell, nb);
  }
  e.h_x = entropy_bits(bin_totals, t.n);
  return e;
}

}  // namespace

const char* to_string(SelectionMethod method) {
  switch (method) {
    case SelectionMethod::chi_squared: return "chi_squared";
    case SelectionMethod::info_gain: return "info_gain";
    case SelectionMethod::gain_ratio: return "gain_ratio";
    case SelectionMethod::mdni: return "mdni";
    case SelectionMethod::borda: return "borda";
  }
  return "?";
}

SelectionMethod selection_method_from_string(const std::string& name) {
  for (auto m : {SelectionMethod::chi_squared, SelectionMethod::info_gain, SelectionMethod::gain_ratio,
                 SelectionMethod::mdni, SelectionMethod::borda}) {
    if (name == to_string(m)) return m;
  }
  throw ContractError("unknown ranking method '" + name + "'");
}

DiscreteScore score_chi_squared(std::span<const int> binned_feature, std::span<const int> labels) {
  const auto t = tabulate(binned_feature, labels);
  if (t.cells.size() < 2) return {0.0, true};
  double chi2 = 0.0;
  for (const auto& cell : t.cells) {
    const double nb = cell[0] + cell[1];
    for (int y = 0; y < 2; ++y) {
      const double expected = nb * t.label_totals[y] / t.n;
      if (expected > 0.0) {
        const double d = cell[y] - expected;
        chi2 += d * d / expected;
      }
    }
  }
  return {chi2, false};
}

DiscreteScore score_information_gain(std::span<const int> binned_feature, std::span<const int> labels) {
  const auto t = tabulate(binned_feature, labels);
  if (t.cells.size() < 2) return {0.0, true};
  const auto e = entropy_terms(t);
  return {std::max(0.0, e.h_y - e.h_y_given_x), false};
}

DiscreteScore score_gain_ratio(std::span<const int> binned_feature, std::span<const int> labels) {
  const auto t = tabulate(binned_feature, labels);
  if (t.cells.size() < 2) return {0.0, true};
  const auto e = entropy_terms(t);
  if (e.h_x <= 0.0) return {0.0, true};
  return {std::clamp((e.h_y - e.h_y_given_x) / e.h_x, 0.0, 1.0), false};
}

std::vector<double> score_mdni(const ForestModel& forest) {
  std::vector<double> importance(forest.n_features, 0.0);
  if (forest.trees.empty()) return importance;
  for (const auto& tree : forest.trees) {
    for (const auto& node : tree.nodes) {
      if (node.feature >= 0) importance[static_cast<std::size_t>(node.feature)] += node.impurity_decrease;
    }
  }
  for (auto& v : importance) v /= static_cast<double>(forest.trees.size());
  return importance;
}

FeatureScore make_feature_score(SelectionMethod method, std::vector<double> raw) {
  FeatureScore s;
  s.method = method;
  const double top = raw.empty() ? 0.0 : *std::max_element(raw.begin(), raw.end());
  s.normalized.resize(raw.size(), 0.0);
  if (top > 0.0) {
    for (std::size_t i = 0; i < raw.size(); ++i) s.normalized[i] = raw[i] / top;
  }
  s.raw = std::move(raw);
  return s;
}

ScoresByMethod score_features(const FeatureMatrix& x, std::span<const int> labels, const ScoringOptions& options) {
  if (labels.size() != x.n_rows) throw ContractError("label count differs from row count");
  ScoresByMethod out;
  const std::size_t p = x.n_cols();
  const bool wants_discrete = std::any_of(options.methods.begin(), options.methods.end(), [](SelectionMethod m) {
    return m == SelectionMethod::chi_squared || m == SelectionMethod::info_gain || m == SelectionMethod::gain_ratio ||
           m == SelectionMethod::borda;
  });
  const bool wants_mdni = std::any_of(options.methods.begin(), options.methods.end(), [](SelectionMethod m) {
    return m == SelectionMethod::mdni || m == SelectionMethod::borda;
  });
  if (wants_discrete) {
    std::vector<double> chi(p), ig(p), gr(p);
    parallel_for(p, [&](std::size_t c) {
      const auto column = x.column(c);
      const auto binned = bin_column(column, options.n_bins);
      chi[c] = score_chi_squared(binned.bins, labels).value;
      ig[c] = score_information_gain(binned.bins, labels).value;
      gr[c] = score_gain_ratio(binned.bins, labels).value;
    });
    out[SelectionMethod::chi_squared] = make_feature_score(SelectionMethod::chi_squared, std::move(chi));
    out[SelectionMethod::info_gain] = make_feature_score(SelectionMethod::info_gain, std::move(ig));
    out[SelectionMethod::gain_ratio] = make_feature_score(SelectionMethod::gain_ratio, std::move(gr));
  }
  if (wants_mdni) {
    const auto forest = train_forest(x, labels, options.ranking_forest);
    out[SelectionMethod::mdni] = make_feature_score(SelectionMethod::mdni, score_mdni(forest.forest()));
  }
  return out;
}

namespace {

std::vector<std::size_t> order_descending(const std::vector<double>& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace

RankedFeatures rank_features(const ScoresByMethod& by_method, SelectionMethod ranking_method) {
  RankedFeatures ranked;
  ranked.by_method = by_method;
  ranked.ranking_method = ranking_method;
  if (ranking_method != SelectionMethod::borda) {
    const auto it = by_method.find(ranking_method);
    if (it == by_method.end()) throw ContractError(std::string("no scores computed for ") + to_string(ranking_method));
    ranked.order = order_descending(it->second.raw);
    return ranked;
  }
  std::vector<double> points;
  for (const auto& [method, score] : by_method) {
    if (method == SelectionMethod::borda) continue;
    const auto order = order_descending(score.raw);
    if (points.empty()) points.assign(order.size(), 0.0);
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
      points[order[rank]] += static_cast<double>(order.size() - rank);
    }
  }
  if (points.empty()) throw ContractError("borda aggregation needs at least one scored method");
  ranked.by_method[SelectionMethod::borda] = make_feature_score(SelectionMethod::borda, points);
  ranked.order = order_descending(points);
  return ranked;
}

WindowSelection rank_and_window(const ScoresByMethod& by_method, SelectionMethod ranking_method, std::size_t start,
                                std::size_t width) {
  WindowSelection sel;
  sel.ranked = rank_features(by_method, ranking_method);
  const std::size_t p = sel.ranked.order.size();
  if (start < 1 || width < 1 || start + width - 1 > p) {
    throw ContractError("feature window " + std::to_string(start) + ".." + std::to_string(start + width - 1) +
                        " lies outside the " + std::to_string(p) + " ranked features");
  }
  sel.columns.assign(sel.ranked.order.begin() + static_cast<std::ptrdiff_t>(start - 1),
                     sel.ranked.order.begin() + static_cast<std::ptrdiff_t>(start - 1 + width));
  return sel;
}

void write_ranking_csv(std::ostream& out, const RankedFeatures& ranked, const std::vector<std::string>& column_names) {
  out << "rank,column,method,raw,normalized\n";
  for (std::size_t rank = 0; rank < ranked.order.size(); ++rank) {
    const std::size_t c = ranked.order[rank];
    for (const auto& [method, score] : ranked.by_method) {
      out << rank + 1 << ',' << csv::escape(column_names.at(c)) << ',' << to_string(method) << ','
          << csv::format_number(score.raw[c], 9) << ',' << csv::format_number(score.normalized[c], 9) << '\n';
    }
  }
}

}  // namespace metatriage
