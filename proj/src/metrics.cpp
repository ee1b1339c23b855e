#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "metatriage/error.hpp"
#include "metatriage/evaluate.hpp"
#include "metatriage/rng.hpp"

namespace metatriage {

ClassificationMetrics classification_metrics(std::span<const int> labels, std::span<const int> predicted) {
  if (labels.size() != predicted.size()) throw ContractError("labels and predictions differ in length");
  ClassificationMetrics m;
  auto& c = m.confusion;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool actual = labels[i] == 1, guess = predicted[i] == 1;
    if (actual && guess) ++c.tp;
    else if (!actual && guess) ++c.fp;
    else if (!actual && !guess) ++c.tn;
    else ++c.fn;
  }
  m.precision_undefined = c.tp + c.fp == 0;
  m.recall_undefined = c.tp + c.fn == 0;
  m.precision = m.precision_undefined ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  m.recall = m.recall_undefined ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  m.f1 = (m.precision + m.recall) > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

namespace {

std::vector<std::size_t> descending_order(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace

RocCurve roc_and_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ContractError("scores and labels differ in length");
  const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) throw ContractError("AUC is undefined when only one class is present");

  const auto order = descending_order(scores);
  RocCurve roc;
  roc.points.push_back({0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  // Twice the area in units of (1 negative x 1 positive), kept integral.
  std::uint64_t doubled_area = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    const std::size_t tp_before = tp, fp_before = fp;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? tp : fp) += 1;
      ++j;
    }
    doubled_area += static_cast<std::uint64_t>(fp - fp_before) * (tp + tp_before);
    roc.points.push_back({static_cast<double>(fp) / static_cast<double>(negatives),
                          static_cast<double>(tp) / static_cast<double>(positives)});
    i = j;
  }
  roc.auc = static_cast<double>(doubled_area) / (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
  return roc;
}

double tune_threshold_max_f1(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ContractError("scores and labels differ in length");
  if (scores.empty()) return 0.0;
  const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const auto order = descending_order(scores);
  const double top = scores[order.front()];
  double best_threshold = std::nextafter(top, std::numeric_limits<double>::infinity());
  if (positives == 0) return best_threshold;
  double best_f1 = -1.0;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? tp : fp) += 1;
      ++j;
    }
    const double f1 = 2.0 * static_cast<double>(tp) / static_cast<double>(tp + fp + positives);
    if (f1 > best_f1) {
      best_f1 = f1;
      best_threshold = scores[order[i]];
    }
    i = j;
  }
  return best_threshold;
}

std::vector<int> apply_threshold(std::span<const double> scores, double threshold) {
  std::vector<int> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] >= threshold ? 1 : 0;
  return out;
}

std::vector<std::vector<std::size_t>> stratified_folds(std::span<const int> labels, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ContractError("cross-validation needs k >= 2");
  if (labels.size() < k) throw ContractError("fewer rows than folds");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == 1 ? pos : neg).push_back(i);
  Engine rng(derive_seed(seed, 0x666f6c6473ULL));
  shuffle(std::span(pos), rng);
  shuffle(std::span(neg), rng);
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t slot = 0;
  for (auto i : pos) folds[slot++ % k].push_back(i);
  for (auto i : neg) folds[slot++ % k].push_back(i);
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

}  // namespace metatriage
