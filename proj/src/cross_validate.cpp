#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>
#include <ostream>

#include "metatriage/csv.hpp"
#include "metatriage/error.hpp"
#include "metatriage/evaluate.hpp"
#include "metatriage/hash.hpp"
#include "metatriage/parallel.hpp"
#include "metatriage/rng.hpp"

namespace metatriage {

FeatureSelectionSpec FeatureSelectionSpec::top(std::size_t k) {
  FeatureSelectionSpec s;
  s.mode = Mode::top_k;
  s.k = k;
  return s;
}

FeatureSelectionSpec FeatureSelectionSpec::window(std::size_t start, std::size_t width) {
  FeatureSelectionSpec s;
  s.mode = Mode::window;
  s.start = start;
  s.width = width;
  return s;
}

FeatureSelectionSpec FeatureSelectionSpec::named(std::vector<std::string> columns) {
  FeatureSelectionSpec s;
  s.mode = Mode::columns;
  s.columns = std::move(columns);
  return s;
}

std::string FeatureSelectionSpec::describe() const {
  switch (mode) {
    case Mode::all: return "all";
    case Mode::top_k: return "top-" + std::to_string(k);
    case Mode::window: return std::to_string(start) + "-" + std::to_string(start + width - 1);
    case Mode::columns: return std::to_string(columns.size()) + " named columns";
  }
  return "?";
}

nlohmann::ordered_json to_json(const PipelineConfig& c) {
  nlohmann::ordered_json j;
  j["n_hashes"] = c.hash.n_hashes;
  j["hash_seed"] = c.hash.seed;
  j["hash_name"] = std::string(kHashName);
  j["signed_hashing"] = c.hash.signed_hashing;
  j["groups"] = {{"hashes", c.groups.hashes},
                 {"intrinsic", c.groups.intrinsic},
                 {"social", c.groups.social},
                 {"reputation", c.groups.reputation}};
  j["reputation_alpha"] = c.reputation_alpha;
  j["paper_leaky"] = c.paper_leaky;
  j["n_bins"] = c.n_bins;
  j["ranking_method"] = to_string(c.ranking_method);
  Hyperparams ranking;
  ranking.forest = c.ranking_forest;
  j["ranking_forest"] = to_json(ranking)["forest"];
  j["hyperparams"] = to_json(c.hyperparams);
  return j;
}

namespace {

template <typename T>
std::vector<T> gather(const std::vector<T>& items, std::span<const std::size_t> rows) {
  std::vector<T> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(items[r]);
  return out;
}

bool has_both_classes(std::span<const int> labels) {
  const auto pos = std::count(labels.begin(), labels.end(), 1);
  return pos > 0 && static_cast<std::size_t>(pos) < labels.size();
}

bool needs_ranking(const FeatureSelectionSpec& s) {
  return s.mode == FeatureSelectionSpec::Mode::top_k || s.mode == FeatureSelectionSpec::Mode::window;
}

PreparedFold prepare_fold(const LabeledDataset& ds, const PipelineConfig& config, std::size_t index,
                          std::vector<std::size_t> train_rows, std::vector<std::size_t> test_rows, bool with_ranking,
                          std::uint64_t seed) {
  PreparedFold fold;
  fold.index = index;
  fold.train_rows = std::move(train_rows);
  fold.test_rows = std::move(test_rows);
  const auto train_records = gather(ds.records, fold.train_rows);
  const auto test_records = gather(ds.records, fold.test_rows);
  const auto y_train = gather(ds.labels, fold.train_rows);
  const auto y_test = gather(ds.labels, fold.test_rows);

  if (config.paper_leaky) {
    fold.developer_table = build_reputation_table(ds.records, ds.labels, EntityKind::developer, config.reputation_alpha);
    fold.issuer_table = build_reputation_table(ds.records, ds.labels, EntityKind::issuer, config.reputation_alpha);
  } else {
    fold.developer_table = build_reputation_table(train_records, y_train, EntityKind::developer, config.reputation_alpha);
    fold.issuer_table = build_reputation_table(train_records, y_train, EntityKind::issuer, config.reputation_alpha);
  }
  fold.train = assemble_features(train_records, fold.developer_table, fold.issuer_table, config.hash, config.groups);
  fold.test = assemble_features(test_records, fold.developer_table, fold.issuer_table, config.hash, config.groups);
  fold.train.labels = y_train;
  fold.test.labels = y_test;

  if (!has_both_classes(y_train)) {
    fold.excluded_reason = "training chunk lacks a class";
  } else if (!has_both_classes(y_test)) {
    fold.excluded_reason = "test chunk lacks a class";
  }
  if (with_ranking && !fold.excluded_reason) {
    ScoringOptions options;
    options.n_bins = config.n_bins;
    options.ranking_forest = config.ranking_forest;
    options.ranking_forest.seed = derive_seed(config.ranking_forest.seed ^ seed, 0x72616e6bULL + index);
    if (config.ranking_method != SelectionMethod::borda) options.methods = {config.ranking_method};
    fold.ranking = rank_features(score_features(fold.train, y_train, options), config.ranking_method);
  }
  return fold;
}

std::vector<std::size_t> resolve_columns(const PreparedFold& fold, const FeatureSelectionSpec& spec) {
  const std::size_t p = fold.train.n_cols();
  switch (spec.mode) {
    case FeatureSelectionSpec::Mode::all: {
      std::vector<std::size_t> all(p);
      std::iota(all.begin(), all.end(), 0);
      return all;
    }
    case FeatureSelectionSpec::Mode::top_k:
      if (spec.k == 0 || spec.k > p) throw ContractError("top-k selection with k outside [1, " + std::to_string(p) + "]");
      return {fold.ranking->order.begin(), fold.ranking->order.begin() + static_cast<std::ptrdiff_t>(spec.k)};
    case FeatureSelectionSpec::Mode::window:
      if (spec.start < 1 || spec.width < 1 || spec.start + spec.width - 1 > p) {
        throw ContractError("feature window " + spec.describe() + " lies outside the " + std::to_string(p) + " features");
      }
      return {fold.ranking->order.begin() + static_cast<std::ptrdiff_t>(spec.start - 1),
              fold.ranking->order.begin() + static_cast<std::ptrdiff_t>(spec.start - 1 + spec.width)};
    case FeatureSelectionSpec::Mode::columns: {
      std::vector<std::size_t> cols;
      for (const auto& name : spec.columns) cols.push_back(fold.train.column_index(name));
      if (cols.empty()) throw ContractError("named feature selection is empty");
      return cols;
    }
  }
  return {};
}

MetricSet metric_set(std::span<const double> scores, std::span<const int> labels, double threshold) {
  const auto m = classification_metrics(labels, apply_threshold(scores, threshold));
  MetricSet out{m.precision, m.recall, m.f1, 0.5};
  if (has_both_classes(labels)) out.auc = roc_and_auc(scores, labels).auc;
  return out;
}

struct VariantFoldOutput {
  FoldResult result;
  std::vector<double> test_scores;
};

VariantFoldOutput evaluate_variant(const PreparedFold& fold, const EvalVariant& variant, const PipelineConfig& config,
                                   std::uint64_t seed) {
  VariantFoldOutput out;
  auto& r = out.result;
  r.fold = fold.index;
  r.n_train = fold.train.n_rows;
  r.n_test = fold.test.n_rows;
  if (fold.excluded_reason) {
    r.excluded = true;
    r.flag = *fold.excluded_reason;
    return out;
  }
  const auto columns = resolve_columns(fold, variant.selection);
  FeatureMatrix train = fold.train.select_columns(columns);
  FeatureMatrix test = fold.test.select_columns(columns);
  r.selected_columns = train.column_names;
  if (variant.model != ModelKind::forest) {
    const auto params = fit_standardization(train);
    params.apply(train);
    params.apply(test);
  }
  Hyperparams h = config.hyperparams;
  h.forest.seed = derive_seed(h.forest.seed ^ seed, fold.index);
  h.svm.seed = derive_seed(h.svm.seed ^ seed, fold.index);
  const auto model = train_model(variant.model, train, train.labels, h);
  const auto train_scores = predict_score(model, train);
  out.test_scores = predict_score(model, test);
  r.threshold = tune_threshold_max_f1(train_scores, train.labels);
  r.train = metric_set(train_scores, train.labels, r.threshold);
  r.test = metric_set(out.test_scores, test.labels, r.threshold);
  return out;
}

MetricSummary summarize(const std::vector<double>& values) {
  MetricSummary s;
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  s.min = *std::min_element(values.begin(), values.end());
  s.max = *std::max_element(values.begin(), values.end());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  // Keep the mean inside [min, max] despite rounding.
  s.mean = std::clamp(s.mean, s.min, s.max);
  return s;
}

nlohmann::ordered_json metrics_json(const MetricSet& m) {
  return {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"auc", m.auc}};
}

}  // namespace

double EvalReport::mean(const std::string& key) const {
  const auto it = summary.find(key);
  if (it == summary.end()) throw ContractError("no summary metric '" + key + "'");
  return it->second.mean;
}

nlohmann::ordered_json EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["variant"] = variant;
  j["model"] = metatriage::to_string(model);
  j["k"] = k;
  j["seed"] = seed;
  j["n_rows"] = n_rows;
  j["flags"] = flags;
  auto& s = j["summary"];
  s = nlohmann::ordered_json::object();
  for (const auto& [key, m] : summary) {
    s[key] = {{"mean", m.mean}, {"stddev", m.stddev}, {"min", m.min}, {"max", m.max}};
  }
  auto& folds_json = j["folds"];
  folds_json = nlohmann::ordered_json::array();
  for (const auto& f : folds) {
    nlohmann::ordered_json fj;
    fj["fold"] = f.fold;
    fj["n_train"] = f.n_train;
    fj["n_test"] = f.n_test;
    fj["excluded"] = f.excluded;
    if (!f.flag.empty()) fj["flag"] = f.flag;
    fj["threshold"] = f.threshold;
    fj["train"] = metrics_json(f.train);
    fj["test"] = metrics_json(f.test);
    fj["selected_columns"] = f.selected_columns;
    folds_json.push_back(std::move(fj));
  }
  return j;
}

void write_eval_csv(std::ostream& out, const EvalReport& report) {
  out << "fold,n_train,n_test,excluded,threshold,train_precision,train_recall,train_f1,train_auc,"
         "test_precision,test_recall,test_f1,test_auc\n";
  auto num = [](double v) { return csv::format_number(v); };
  for (const auto& f : report.folds) {
    out << f.fold << ',' << f.n_train << ',' << f.n_test << ',' << (f.excluded ? 1 : 0) << ',' << num(f.threshold)
        << ',' << num(f.train.precision) << ',' << num(f.train.recall) << ',' << num(f.train.f1) << ','
        << num(f.train.auc) << ',' << num(f.test.precision) << ',' << num(f.test.recall) << ',' << num(f.test.f1)
        << ',' << num(f.test.auc) << '\n';
  }
  auto mean = [&](const char* key) { return num(report.summary.count(key) ? report.summary.at(key).mean : 0.0); };
  out << "mean,,,,," << mean("train_precision") << ',' << mean("train_recall") << ',' << mean("train_f1") << ','
      << mean("train_auc") << ',' << mean("test_precision") << ',' << mean("test_recall") << ',' << mean("test_f1")
      << ',' << mean("test_auc") << '\n';
}

std::vector<EvalReport> cross_validate_variants(const LabeledDataset& dataset, const PipelineConfig& config,
                                                const std::vector<EvalVariant>& variants, std::size_t k,
                                                std::uint64_t seed, const FoldObserver& observer) {
  if (dataset.records.size() != dataset.labels.size()) throw ContractError("dataset records and labels differ in length");
  if (variants.empty()) throw ContractError("no model variants to evaluate");
  const auto folds = stratified_folds(dataset.labels, k, seed);
  const bool with_ranking = std::any_of(variants.begin(), variants.end(), [](const EvalVariant& v) {
    return needs_ranking(v.selection);
  });

  std::vector<std::vector<VariantFoldOutput>> outputs(variants.size(), std::vector<VariantFoldOutput>(k));
  std::mutex observer_mutex;
  parallel_for(k, [&](std::size_t f) {
    std::vector<std::size_t> train_rows;
    for (std::size_t g = 0; g < k; ++g) {
      if (g != f) train_rows.insert(train_rows.end(), folds[g].begin(), folds[g].end());
    }
    std::sort(train_rows.begin(), train_rows.end());
    const auto fold = prepare_fold(dataset, config, f, std::move(train_rows), folds[f], with_ranking, seed);
    if (observer) {
      std::lock_guard lock(observer_mutex);
      observer(fold);
    }
    for (std::size_t v = 0; v < variants.size(); ++v) outputs[v][f] = evaluate_variant(fold, variants[v], config, seed);
  });

  std::vector<EvalReport> reports;
  for (std::size_t v = 0; v < variants.size(); ++v) {
    EvalReport report;
    report.variant = variants[v].label.empty() ? variants[v].selection.describe() : variants[v].label;
    report.model = variants[v].model;
    report.k = k;
    report.seed = seed;
    report.n_rows = dataset.records.size();
    std::map<std::string, std::vector<double>> collected;
    for (std::size_t f = 0; f < k; ++f) {
      auto& out = outputs[v][f];
      report.folds.push_back(out.result);
      if (out.result.excluded) {
        report.flags.push_back("fold " + std::to_string(f) + " excluded: " + out.result.flag);
        continue;
      }
      const auto& r = out.result;
      collected["train_precision"].push_back(r.train.precision);
      collected["train_recall"].push_back(r.train.recall);
      collected["train_f1"].push_back(r.train.f1);
      collected["train_auc"].push_back(r.train.auc);
      collected["test_precision"].push_back(r.test.precision);
      collected["test_recall"].push_back(r.test.recall);
      collected["test_f1"].push_back(r.test.f1);
      collected["test_auc"].push_back(r.test.auc);
      report.oof_scores.insert(report.oof_scores.end(), out.test_scores.begin(), out.test_scores.end());
      for (auto row : folds[f]) report.oof_labels.push_back(dataset.labels[row]);
    }
    for (const auto& [key, values] : collected) report.summary[key] = summarize(values);
    if (config.paper_leaky) report.flags.push_back("paper-leaky reputation: tables include test rows");
    if (dataset.shrunk) report.flags.push_back("dataset shrunk below the requested size");
    if (collected.empty()) report.flags.push_back("every fold was excluded");
    reports.push_back(std::move(report));
  }
  return reports;
}

EvalReport cross_validate(const LabeledDataset& dataset, const PipelineConfig& config, ModelKind model, std::size_t k,
                          std::uint64_t seed, const FeatureSelectionSpec& selection, const FoldObserver& observer) {
  return cross_validate_variants(dataset, config, {{"", model, selection}}, k, seed, observer).front();
}

RankedFeatures rank_dataset(const LabeledDataset& dataset, const PipelineConfig& config,
                            const std::vector<SelectionMethod>& methods, FeatureMatrix* features) {
  const auto dev = build_reputation_table(dataset.records, dataset.labels, EntityKind::developer, config.reputation_alpha);
  const auto iss = build_reputation_table(dataset.records, dataset.labels, EntityKind::issuer, config.reputation_alpha);
  FeatureMatrix x = assemble_features(dataset.records, dev, iss, config.hash, config.groups);
  x.labels = dataset.labels;
  ScoringOptions options;
  options.methods = methods;
  if (config.ranking_method != SelectionMethod::borda &&
      std::find(methods.begin(), methods.end(), config.ranking_method) == methods.end()) {
    options.methods.push_back(config.ranking_method);
  }
  options.n_bins = config.n_bins;
  options.ranking_forest = config.ranking_forest;
  auto ranked = rank_features(score_features(x, dataset.labels, options), config.ranking_method);
  if (features) *features = std::move(x);
  return ranked;
}

}  // namespace metatriage
