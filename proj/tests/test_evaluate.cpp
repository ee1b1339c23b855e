#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "fixtures.hpp"
#include "metatriage/error.hpp"
#include "metatriage/evaluate.hpp"
#include "oracles.hpp"

using namespace metatriage;

TEST_CASE("metrics from a worked confusion matrix") {
  // tp=3, fp=1, fn=2, tn=4
  std::vector<int> y{1, 1, 1, 0, 1, 1, 0, 0, 0, 0};
  std::vector<int> p{1, 1, 1, 1, 0, 0, 0, 0, 0, 0};
  auto m = classification_metrics(y, p);
  CHECK(m.confusion.tp == 3);
  CHECK(m.confusion.fp == 1);
  CHECK(m.confusion.fn == 2);
  CHECK(m.confusion.tn == 4);
  CHECK(m.precision == doctest::Approx(0.75));
  CHECK(m.recall == doctest::Approx(0.6));
  CHECK(m.f1 == doctest::Approx(2.0 * 0.45 / 1.35));
}

TEST_CASE("perfect and empty predictions") {
  std::vector<int> y{1, 0, 1, 0};
  auto perfect = classification_metrics(y, y);
  CHECK(perfect.precision == 1.0);
  CHECK(perfect.recall == 1.0);
  CHECK(perfect.f1 == 1.0);

  auto none = classification_metrics(y, std::vector<int>{0, 0, 0, 0});
  CHECK(none.precision == 0.0);
  CHECK(none.precision_undefined);
  CHECK(none.recall == 0.0);
  CHECK_FALSE(none.recall_undefined);
  CHECK(none.f1 == 0.0);

  auto no_positives = classification_metrics(std::vector<int>{0, 0}, std::vector<int>{1, 0});
  CHECK(no_positives.recall_undefined);
}

TEST_CASE("metrics match the counting oracle on random instances") {
  Engine rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + uniform_index(rng, 199);
    auto y = fixture::random_labels(rng, n);
    std::vector<int> p(n);
    for (auto& v : p) v = static_cast<int>(uniform_index(rng, 2));
    auto m = classification_metrics(y, p);
    auto c = oracle::confusion(y, p);
    const double precision = c.tp + c.fp > 0 ? c.tp / (c.tp + c.fp) : 0.0;
    const double recall = c.tp + c.fn > 0 ? c.tp / (c.tp + c.fn) : 0.0;
    CHECK(std::abs(m.precision - precision) <= 1e-12);
    CHECK(std::abs(m.recall - recall) <= 1e-12);
    CHECK(m.confusion.total() == n);
    if (precision > 0 && recall > 0) {
      CHECK(std::abs(1.0 / m.f1 - 0.5 * (1.0 / precision + 1.0 / recall)) <= 1e-12);
    }
    CHECK(m.f1 >= 0.0);
    CHECK(m.f1 <= 1.0);
  }
}

TEST_CASE("AUC worked values") {
  CHECK(roc_and_auc(std::vector<double>{0.9, 0.8, 0.3}, std::vector<int>{1, 0, 1}).auc == 0.5);
  CHECK(roc_and_auc(std::vector<double>{0.4, 0.4, 0.4, 0.4}, std::vector<int>{1, 0, 1, 0}).auc == 0.5);
  CHECK(roc_and_auc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, std::vector<int>{1, 1, 0, 0}).auc == 1.0);
  CHECK_THROWS_AS(roc_and_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), ContractError);
}

TEST_CASE("AUC equals the pairwise statistic and ignores monotone transforms") {
  Engine rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + uniform_index(rng, 199);
    auto y = fixture::random_labels(rng, n);
    std::vector<double> s(n);
    // Coarse scores give plenty of ties.
    for (auto& v : s) v = trial % 2 ? uniform01(rng) : static_cast<double>(uniform_index(rng, 5));
    auto roc = roc_and_auc(s, y);
    CHECK(std::abs(roc.auc - oracle::pairwise_auc(s, y)) <= 1e-12);
    CHECK(roc.points.front().fpr == 0.0);
    CHECK(roc.points.front().tpr == 0.0);
    CHECK(roc.points.back().fpr == 1.0);
    CHECK(roc.points.back().tpr == 1.0);
    for (std::size_t i = 1; i < roc.points.size(); ++i) CHECK(roc.points[i].fpr >= roc.points[i - 1].fpr);

    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = std::exp(3.0 * s[i]) - 7.0;
    CHECK(std::abs(roc_and_auc(t, y).auc - roc.auc) <= 1e-12);
  }
}

TEST_CASE("threshold tuning maximises F1 and prefers the highest threshold") {
  std::vector<double> s{0.9, 0.8, 0.7, 0.1};
  std::vector<int> y{1, 1, 0, 0};
  const double t = tune_threshold_max_f1(s, y);
  CHECK(t == 0.8);
  CHECK(apply_threshold(s, t) == std::vector<int>{1, 1, 0, 0});
}

TEST_CASE("stratified folds partition the rows") {
  std::vector<int> y(100);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = i % 3 == 0;
  auto folds = stratified_folds(y, 10, 5);
  REQUIRE(folds.size() == 10);
  std::set<std::size_t> seen;
  for (const auto& f : folds) {
    CHECK(f.size() == 10);
    CHECK(std::is_sorted(f.begin(), f.end()));
    const auto pos = std::count_if(f.begin(), f.end(), [&](auto i) { return y[i] == 1; });
    CHECK(pos >= 3);
    CHECK(pos <= 4);
    seen.insert(f.begin(), f.end());
  }
  CHECK(seen.size() == 100);
  CHECK(stratified_folds(y, 10, 5) == folds);

  auto small = stratified_folds(std::vector<int>{1, 0, 1, 0}, 2, 0);
  REQUIRE(small.size() == 2);
  for (const auto& f : small) {
    REQUIRE(f.size() == 2);
    const std::vector<int> labels{1, 0, 1, 0};
    CHECK(labels[f[0]] + labels[f[1]] == 1);
  }
}

TEST_CASE("selection spec descriptions") {
  CHECK(FeatureSelectionSpec::top(15).mode == FeatureSelectionSpec::Mode::top_k);
  CHECK(FeatureSelectionSpec::window(3, 15).start == 3);
  CHECK(FeatureSelectionSpec::named({"a"}).columns.size() == 1);
  CHECK_FALSE(FeatureSelectionSpec::top(15).describe().empty());
}

namespace {

LabeledDataset planted(std::size_t size, std::uint64_t seed) {
  auto corpus = generate_synthetic(generator_preset("default"), seed);
  return compose_subset(corpus, {.malware_fraction = 0.5, .policy = {4}, .target_size = size, .seed = seed});
}

PipelineConfig small_pipeline() {
  PipelineConfig config;
  config.hash.n_hashes = 32;
  config.ranking_forest.n_trees = 10;
  config.hyperparams.forest.n_trees = 30;
  return config;
}

}  // namespace

TEST_CASE("per-fold reputation tables never see the test fold") {
  auto ds = planted(100, 1);
  std::size_t observed = 0;
  auto observer = [&](const PreparedFold& fold) {
    observed++;
    std::set<std::string> test_ids;
    for (auto r : fold.test_rows) test_ids.insert(ds.records[r].app_id);
    for (const auto* table : {&fold.developer_table, &fold.issuer_table}) {
      CHECK(table->contributors().size() == fold.train_rows.size());
      for (const auto& id : table->contributors()) CHECK(test_ids.count(id) == 0);
    }
  };
  auto report = cross_validate(ds, small_pipeline(), ModelKind::logistic, 10, 3, FeatureSelectionSpec::top(5), observer);
  CHECK(observed == 10);
  CHECK(report.folds.size() == 10);
  for (const auto& f : report.folds) CHECK(f.n_test == 10);
}

TEST_CASE("leaky mode builds tables over every row and says so") {
  auto ds = planted(100, 1);
  auto config = small_pipeline();
  config.paper_leaky = true;
  bool saw_test_row = false;
  auto observer = [&](const PreparedFold& fold) {
    std::set<std::string> ids(fold.developer_table.contributors().begin(), fold.developer_table.contributors().end());
    for (auto r : fold.test_rows) saw_test_row |= ids.count(ds.records[r].app_id) > 0;
  };
  auto report = cross_validate(ds, config, ModelKind::logistic, 5, 3, {}, observer);
  CHECK(saw_test_row);
  CHECK_FALSE(report.flags.empty());
}

TEST_CASE("cross_validate is deterministic and summaries bracket the folds") {
  auto ds = planted(400, 2);
  auto a = cross_validate(ds, small_pipeline(), ModelKind::forest, 5, 9, FeatureSelectionSpec::top(10));
  auto b = cross_validate(ds, small_pipeline(), ModelKind::forest, 5, 9, FeatureSelectionSpec::top(10));
  CHECK(a.to_json().dump() == b.to_json().dump());
  for (const auto& [key, s] : a.summary) {
    CHECK(s.mean >= s.min - 1e-12);
    CHECK(s.mean <= s.max + 1e-12);
  }
  CHECK(a.oof_scores.size() == ds.size());
  std::ostringstream csv;
  write_eval_csv(csv, a);
  const auto text = csv.str();
  CHECK(std::count(text.begin(), text.end(), '\n') >= 6);
}

TEST_CASE("variants share the same folds") {
  auto ds = planted(300, 3);
  auto reports = cross_validate_variants(ds, small_pipeline(),
                                         {{"lr", ModelKind::logistic, FeatureSelectionSpec::all_features()},
                                          {"rf", ModelKind::forest, FeatureSelectionSpec::top(5)}},
                                         5, 1);
  REQUIRE(reports.size() == 2);
  CHECK(reports[0].oof_labels == reports[1].oof_labels);
  for (const auto& f : reports[1].folds) CHECK(f.selected_columns.size() == 5);
}

TEST_CASE("planted signal beats a shuffled-label copy") {
  auto ds = planted(600, 4);
  auto shuffled = ds;
  Engine rng(99);
  shuffle(std::span(shuffled.labels), rng);
  auto config = small_pipeline();
  const double real = cross_validate(ds, config, ModelKind::forest, 10, 1).mean("test_f1");
  const double fake = cross_validate(shuffled, config, ModelKind::forest, 10, 1).mean("test_f1");
  CHECK(real - fake >= 0.3);
}

TEST_CASE("a class missing from a fold is flagged and excluded") {
  auto ds = planted(40, 5);
  // Keep a single malware record so most folds lack it.
  LabeledDataset lopsided;
  bool kept = false;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.labels[i] == 1 && kept) continue;
    kept |= ds.labels[i] == 1;
    lopsided.records.push_back(ds.records[i]);
    lopsided.labels.push_back(ds.labels[i]);
  }
  auto report = cross_validate(lopsided, small_pipeline(), ModelKind::logistic, 4, 1);
  const auto excluded = std::count_if(report.folds.begin(), report.folds.end(), [](auto& f) { return f.excluded; });
  CHECK(excluded >= 3);
  CHECK_FALSE(report.flags.empty());
}
