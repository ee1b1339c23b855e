#include "metatriage/bench.hpp"

#include <algorithm>
#include <cmath>

#include "metatriage/error.hpp"
#include "metatriage/parallel.hpp"
#include "metatriage/rng.hpp"

namespace metatriage {

namespace {

// Reference numbers for side-by-side display, F1/precision/recall as
// train/test pairs. Rows follow (threshold 1, 2, 4) x (fraction 2%, 25%, 50%).
struct GridReference {
  ModelKind model;
  double fraction;
  std::uint32_t threshold;
  double f1[2], precision[2], recall[2];
};

constexpr GridReference kGridReference[] = {
    {ModelKind::logistic, 0.02, 1, {0.82, 0.11}, {0.80, 0.07}, {0.85, 0.22}},
    {ModelKind::logistic, 0.25, 1, {0.89, 0.62}, {0.93, 0.61}, {0.85, 0.63}},
    {ModelKind::logistic, 0.50, 1, {0.93, 0.75}, {0.97, 0.91}, {0.89, 0.64}},
    {ModelKind::logistic, 0.02, 2, {0.65, 0.23}, {0.95, 0.27}, {0.50, 0.19}},
    {ModelKind::logistic, 0.25, 2, {0.89, 0.70}, {0.94, 0.67}, {0.85, 0.74}},
    {ModelKind::logistic, 0.50, 2, {0.94, 0.83}, {0.98, 0.90}, {0.90, 0.76}},
    {ModelKind::logistic, 0.02, 4, {0.81, 0.29}, {0.81, 0.22}, {0.81, 0.42}},
    {ModelKind::logistic, 0.25, 4, {0.91, 0.76}, {0.95, 0.72}, {0.87, 0.79}},
    {ModelKind::logistic, 0.50, 4, {0.95, 0.86}, {0.99, 0.86}, {0.92, 0.86}},
    {ModelKind::linear_svm, 0.02, 1, {0.86, 0.08}, {0.78, 0.05}, {0.96, 0.23}},
    {ModelKind::linear_svm, 0.25, 1, {0.92, 0.67}, {0.91, 0.62}, {0.93, 0.71}},
    {ModelKind::linear_svm, 0.50, 1, {0.95, 0.81}, {0.96, 0.88}, {0.94, 0.76}},
    {ModelKind::linear_svm, 0.02, 2, {0.83, 0.18}, {0.75, 0.11}, {0.93, 0.38}},
    {ModelKind::linear_svm, 0.25, 2, {0.92, 0.70}, {0.92, 0.62}, {0.91, 0.80}},
    {ModelKind::linear_svm, 0.50, 2, {0.95, 0.85}, {0.97, 0.89}, {0.93, 0.81}},
    {ModelKind::linear_svm, 0.02, 4, {0.85, 0.27}, {0.76, 0.18}, {0.96, 0.53}},
    {ModelKind::linear_svm, 0.25, 4, {0.93, 0.76}, {0.93, 0.69}, {0.92, 0.84}},
    {ModelKind::linear_svm, 0.50, 4, {0.96, 0.87}, {0.98, 0.87}, {0.94, 0.88}},
    {ModelKind::forest, 0.02, 1, {0.99, 0.12}, {0.99, 0.08}, {0.99, 0.32}},
    {ModelKind::forest, 0.25, 1, {0.99, 0.73}, {0.99, 0.70}, {0.99, 0.76}},
    {ModelKind::forest, 0.50, 1, {0.99, 0.83}, {0.99, 0.87}, {0.99, 0.80}},
    {ModelKind::forest, 0.02, 2, {0.99, 0.22}, {0.99, 0.15}, {0.99, 0.45}},
    {ModelKind::forest, 0.25, 2, {0.99, 0.78}, {0.99, 0.74}, {0.99, 0.82}},
    {ModelKind::forest, 0.50, 2, {0.99, 0.87}, {0.99, 0.89}, {0.99, 0.85}},
    {ModelKind::forest, 0.02, 4, {0.99, 0.32}, {0.99, 0.22}, {0.99, 0.58}},
    {ModelKind::forest, 0.25, 4, {0.99, 0.82}, {0.99, 0.77}, {0.99, 0.86}},
    {ModelKind::forest, 0.50, 4, {0.99, 0.89}, {0.99, 0.88}, {0.99, 0.90}},
};

// Forest F1 (train/test) per threshold for windows starting at 1, 3, ..., 13.
struct WindowReference {
  std::uint32_t threshold;
  double f1[7][2];
};

constexpr WindowReference kWindowReference[] = {
    {1, {{0.99, 0.83}, {0.99, 0.86}, {0.99, 0.84}, {0.99, 0.74}, {0.96, 0.72}, {0.88, 0.67}, {0.80, 0.64}}},
    {2, {{0.99, 0.87}, {0.99, 0.87}, {0.99, 0.86}, {0.99, 0.79}, {0.96, 0.75}, {0.88, 0.71}, {0.75, 0.66}}},
    {4, {{0.99, 0.89}, {0.99, 0.88}, {0.99, 0.87}, {0.99, 0.80}, {0.96, 0.77}, {0.89, 0.73}, {0.77, 0.69}}},
};

bool same_fraction(double a, double b) { return std::abs(a - b) < 1e-9; }

std::map<std::string, double> grid_reference(ModelKind model, double fraction, std::uint32_t threshold) {
  for (const auto& r : kGridReference) {
    if (r.model == model && r.threshold == threshold && same_fraction(r.fraction, fraction)) {
      return {{"train_f1", r.f1[0]},        {"test_f1", r.f1[1]},     {"train_precision", r.precision[0]},
              {"test_precision", r.precision[1]}, {"train_recall", r.recall[0]}, {"test_recall", r.recall[1]}};
    }
  }
  return {};
}

std::map<std::string, double> window_reference(ModelKind model, double fraction, std::uint32_t threshold,
                                               std::size_t start, std::size_t width) {
  if (model != ModelKind::forest || width != 15 || !same_fraction(fraction, 0.5)) return {};
  if (start < 1 || start > 13 || start % 2 == 0) return {};
  for (const auto& r : kWindowReference) {
    if (r.threshold == threshold) {
      const auto& v = r.f1[(start - 1) / 2];
      return {{"train_f1", v[0]}, {"test_f1", v[1]}};
    }
  }
  return {};
}

// Subset seed keyed by cell content, so the same cell draws the same subset in
// every experiment.
std::uint64_t cell_seed(std::uint64_t seed, double fraction, std::uint32_t threshold) {
  const auto permille = static_cast<std::uint64_t>(std::llround(fraction * 1000.0));
  return derive_seed(seed, (permille << 32) | threshold);
}

BenchRow row_from_report(const EvalReport& report) {
  BenchRow row;
  row.model = to_string(report.model);
  row.variant = report.variant;
  row.n_rows = report.n_rows;
  if (report.summary.empty()) {
    row.infeasible = true;
    row.note = "every fold was excluded";
    return row;
  }
  auto mean = [&](const char* key) { return report.summary.at(key).mean; };
  row.train = {mean("train_precision"), mean("train_recall"), mean("train_f1"), mean("train_auc")};
  row.test = {mean("test_precision"), mean("test_recall"), mean("test_f1"), mean("test_auc")};
  row.test_f1_stddev = report.summary.at("test_f1").stddev;
  return row;
}

void append_flags(std::vector<std::string>& flags, const std::string& prefix, const std::vector<std::string>& extra) {
  for (const auto& f : extra) {
    const auto entry = prefix + f;
    if (std::find(flags.begin(), flags.end(), entry) == flags.end()) flags.push_back(entry);
  }
}

FeatureSelectionSpec top_columns(const ExperimentContext& context, std::size_t k) {
  if (!context.frozen_ranking) return FeatureSelectionSpec::top(k);
  const auto& names = *context.frozen_ranking;
  if (k > names.size()) throw ContractError("frozen ranking holds fewer than " + std::to_string(k) + " columns");
  return FeatureSelectionSpec::named({names.begin(), names.begin() + static_cast<std::ptrdiff_t>(k)});
}

FeatureSelectionSpec window_columns(const ExperimentContext& context, std::size_t start, std::size_t width) {
  if (!context.frozen_ranking) return FeatureSelectionSpec::window(start, width);
  const auto& names = *context.frozen_ranking;
  if (start < 1 || start - 1 + width > names.size()) {
    throw ContractError("window " + std::to_string(start) + ".." + std::to_string(start + width - 1) +
                        " exceeds the frozen ranking");
  }
  const auto first = names.begin() + static_cast<std::ptrdiff_t>(start - 1);
  return FeatureSelectionSpec::named({first, first + static_cast<std::ptrdiff_t>(width)});
}

const char* kFrozenFlag = "frozen ranking: columns chosen once outside the folds";

}  // namespace

std::vector<std::size_t> default_hash_sizes() { return {32, 64, 128, 256, 512, 1024, 2048}; }

std::vector<std::size_t> default_feature_counts(std::size_t n_columns) {
  std::vector<std::size_t> counts;
  for (std::size_t k = 1; k <= std::min<std::size_t>(n_columns, 30); ++k) counts.push_back(k);
  if (n_columns > 30) counts.push_back(n_columns);
  return counts;
}

std::vector<RankedColumn> ranked_columns(const LabeledDataset& dataset, const PipelineConfig& config,
                                         std::size_t limit) {
  FeatureMatrix x;
  const auto ranked = rank_dataset(dataset, config, {config.ranking_method}, &x);
  const auto& score = ranked.by_method.at(ranked.ranking_method);
  std::vector<RankedColumn> out;
  for (std::size_t i = 0; i < std::min(limit, ranked.order.size()); ++i) {
    const auto c = ranked.order[i];
    out.push_back({x.column_names[c], score.normalized[c]});
  }
  return out;
}

BenchReport hash_size_sweep(const LabeledDataset& dataset, const std::vector<std::size_t>& sizes, ModelKind model,
                            const ExperimentContext& context) {
  if (sizes.empty()) throw ContractError("hash sweep needs at least one size");
  BenchReport report;
  report.experiment = "hash-sweep";
  std::vector<BenchRow> rows(sizes.size());
  std::vector<RocSeries> curves(sizes.size());
  std::vector<std::vector<std::string>> flags(sizes.size());
  parallel_for(sizes.size(), [&](std::size_t i) {
    PipelineConfig config = context.pipeline;
    config.groups = {.hashes = true, .intrinsic = false, .social = false, .reputation = false};
    config.hash.n_hashes = sizes[i];
    const std::string label = "hashes " + std::to_string(sizes[i]);
    try {
      const auto eval = cross_validate(dataset, config, model, context.k, context.seed);
      rows[i] = row_from_report(eval);
      flags[i] = eval.flags;
      if (!eval.oof_scores.empty()) {
        const auto roc = roc_and_auc(eval.oof_scores, eval.oof_labels);
        curves[i] = {label, roc.points, roc.auc};
      }
    } catch (const Error& e) {
      rows[i].infeasible = true;
      rows[i].note = e.what();
      rows[i].model = to_string(model);
    }
    rows[i].variant = label;
    rows[i].parameter = sizes[i];
    rows[i].n_rows = dataset.size();
    rows[i].n_malware = dataset.n_malware();
    rows[i].malware_fraction = dataset.size() ? static_cast<double>(dataset.n_malware()) / dataset.size() : 0.0;
  });
  report.rows = std::move(rows);
  for (auto& c : curves) {
    if (!c.label.empty()) report.roc.push_back(std::move(c));
  }
  for (const auto& f : flags) append_flags(report.flags, "", f);
  return report;
}

BenchReport feature_count_curve(const LabeledDataset& dataset, const std::vector<std::size_t>& counts,
                                const std::vector<ModelKind>& models, const ExperimentContext& context) {
  if (counts.empty() || models.empty()) throw ContractError("feature curve needs counts and models");
  const std::size_t p = feature_column_names(context.pipeline.hash, context.pipeline.groups).size();
  BenchReport report;
  report.experiment = "feature-curve";
  std::vector<EvalVariant> variants;
  std::vector<BenchRow> skipped;
  for (auto k : counts) {
    for (auto m : models) {
      if (k == 0 || k > p) {
        BenchRow row;
        row.model = to_string(m);
        row.variant = "top " + std::to_string(k);
        row.parameter = k;
        row.infeasible = true;
        row.note = "feature count outside 1.." + std::to_string(p);
        skipped.push_back(std::move(row));
        continue;
      }
      variants.push_back({"top " + std::to_string(k), m, top_columns(context, k)});
    }
  }
  if (!variants.empty()) {
    const auto evals = cross_validate_variants(dataset, context.pipeline, variants, context.k, context.seed);
    for (const auto& eval : evals) {
      auto row = row_from_report(eval);
      row.parameter = std::stoul(eval.variant.substr(4));
      report.rows.push_back(std::move(row));
      append_flags(report.flags, "", eval.flags);
    }
  }
  report.rows.insert(report.rows.end(), skipped.begin(), skipped.end());
  for (auto& row : report.rows) {
    row.n_rows = dataset.size();
    row.n_malware = dataset.n_malware();
    row.malware_fraction = dataset.size() ? static_cast<double>(dataset.n_malware()) / dataset.size() : 0.0;
  }
  if (context.frozen_ranking) report.flags.push_back(kFrozenFlag);
  report.ranking = ranked_columns(dataset, context.pipeline, 30);
  return report;
}

BenchReport grid_benchmark(const std::vector<AppRecord>& corpus, const BenchmarkGrid& grid,
                           const FeatureSelectionSpec& selection, const ExperimentContext& context) {
  if (grid.malware_fractions.empty() || grid.thresholds.empty() || grid.models.empty()) {
    throw ContractError("benchmark grid needs fractions, thresholds and models");
  }
  struct Cell {
    double fraction;
    std::uint32_t threshold;
  };
  std::vector<Cell> cells;
  for (auto t : grid.thresholds) {
    for (auto f : grid.malware_fractions) cells.push_back({f, t});
  }
  std::vector<std::vector<BenchRow>> cell_rows(cells.size());
  std::vector<std::vector<std::string>> cell_flags(cells.size());
  parallel_for(cells.size(), [&](std::size_t i) {
    const auto [fraction, threshold] = cells[i];
    auto mark = [&](BenchRow& row) {
      row.malware_fraction = fraction;
      row.threshold = threshold;
    };
    try {
      const CompositionRecipe recipe{fraction, {threshold, grid.ambiguous}, grid.subset_size,
                                     cell_seed(context.seed, fraction, threshold)};
      const auto dataset = compose_subset(corpus, recipe);
      std::vector<EvalVariant> variants;
      for (auto m : grid.models) variants.push_back({selection.describe(), m, selection});
      const auto evals = cross_validate_variants(dataset, context.pipeline, variants, context.k, context.seed);
      for (const auto& eval : evals) {
        auto row = row_from_report(eval);
        mark(row);
        row.n_malware = dataset.n_malware();
        if (dataset.shrunk) row.note = "subset shrunk to " + std::to_string(dataset.size()) + " rows";
        cell_flags[i].insert(cell_flags[i].end(), eval.flags.begin(), eval.flags.end());
        cell_rows[i].push_back(std::move(row));
      }
    } catch (const Error& e) {
      for (auto m : grid.models) {
        BenchRow row;
        mark(row);
        row.model = to_string(m);
        row.variant = selection.describe();
        row.infeasible = true;
        row.note = e.what();
        cell_rows[i].push_back(std::move(row));
      }
    }
  });
  BenchReport report;
  report.experiment = "grid";
  // Table layout: one block per model, rows by threshold then fraction.
  for (auto m : grid.models) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      for (auto& row : cell_rows[i]) {
        if (row.model != to_string(m)) continue;
        row.reference = grid_reference(m, row.malware_fraction, row.threshold);
        report.rows.push_back(row);
      }
    }
  }
  for (std::size_t i = 0; i < cells.size(); ++i) {
    char prefix[64];
    std::snprintf(prefix, sizeof prefix, "cell %.2f/%u: ", cells[i].fraction, cells[i].threshold);
    append_flags(report.flags, prefix, cell_flags[i]);
  }
  if (context.frozen_ranking) report.flags.push_back(kFrozenFlag);
  return report;
}

BenchReport robustness_windows(const std::vector<AppRecord>& corpus, const RobustnessOptions& options,
                               const ExperimentContext& context) {
  if (options.thresholds.empty() || options.starts.empty()) throw ContractError("robustness needs thresholds and windows");
  std::vector<std::vector<BenchRow>> per_threshold(options.thresholds.size());
  std::vector<std::vector<std::string>> flags(options.thresholds.size());
  parallel_for(options.thresholds.size(), [&](std::size_t i) {
    const auto threshold = options.thresholds[i];
    auto base_row = [&](std::size_t start) {
      BenchRow row;
      row.malware_fraction = options.malware_fraction;
      row.threshold = threshold;
      row.model = to_string(options.model);
      row.variant = "window " + std::to_string(start) + "-" + std::to_string(start + options.width - 1);
      row.parameter = start;
      row.reference = window_reference(options.model, options.malware_fraction, threshold, start, options.width);
      return row;
    };
    try {
      const CompositionRecipe recipe{options.malware_fraction, {threshold, options.ambiguous}, options.subset_size,
                                     cell_seed(context.seed, options.malware_fraction, threshold)};
      const auto dataset = compose_subset(corpus, recipe);
      std::vector<EvalVariant> variants;
      for (auto s : options.starts) variants.push_back({"", options.model, window_columns(context, s, options.width)});
      const auto evals = cross_validate_variants(dataset, context.pipeline, variants, context.k, context.seed);
      for (std::size_t v = 0; v < evals.size(); ++v) {
        auto row = row_from_report(evals[v]);
        const auto base = base_row(options.starts[v]);
        row.malware_fraction = base.malware_fraction;
        row.threshold = base.threshold;
        row.variant = base.variant;
        row.parameter = base.parameter;
        row.reference = base.reference;
        row.n_malware = dataset.n_malware();
        flags[i].insert(flags[i].end(), evals[v].flags.begin(), evals[v].flags.end());
        per_threshold[i].push_back(std::move(row));
      }
    } catch (const Error& e) {
      for (auto s : options.starts) {
        auto row = base_row(s);
        row.infeasible = true;
        row.note = e.what();
        per_threshold[i].push_back(std::move(row));
      }
    }
  });
  BenchReport report;
  report.experiment = "robustness";
  for (std::size_t i = 0; i < per_threshold.size(); ++i) {
    report.rows.insert(report.rows.end(), per_threshold[i].begin(), per_threshold[i].end());
    append_flags(report.flags, "threshold " + std::to_string(options.thresholds[i]) + ": ", flags[i]);
  }
  if (context.frozen_ranking) report.flags.push_back(kFrozenFlag);
  return report;
}

// ---------------------------------------------------------------------------
// JSON round trip

namespace {

nlohmann::ordered_json metrics_to_json(const MetricSet& m) {
  return {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"auc", m.auc}};
}

MetricSet metrics_from_json(const nlohmann::json& j) {
  return {j.at("precision").get<double>(), j.at("recall").get<double>(), j.at("f1").get<double>(),
          j.at("auc").get<double>()};
}

}  // namespace

nlohmann::ordered_json BenchReport::to_json() const {
  nlohmann::ordered_json j;
  j["experiment"] = experiment;
  j["flags"] = flags;
  auto& rows_json = j["rows"];
  rows_json = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json rj;
    rj["malware_fraction"] = r.malware_fraction;
    rj["threshold"] = r.threshold;
    rj["model"] = r.model;
    rj["variant"] = r.variant;
    rj["parameter"] = r.parameter;
    rj["n_rows"] = r.n_rows;
    rj["n_malware"] = r.n_malware;
    rj["train"] = metrics_to_json(r.train);
    rj["test"] = metrics_to_json(r.test);
    rj["test_f1_stddev"] = r.test_f1_stddev;
    rj["infeasible"] = r.infeasible;
    rj["note"] = r.note;
    rj["reference"] = nlohmann::ordered_json::object();
    for (const auto& [key, value] : r.reference) rj["reference"][key] = value;
    rows_json.push_back(std::move(rj));
  }
  auto& roc_json = j["roc"];
  roc_json = nlohmann::ordered_json::array();
  for (const auto& c : roc) {
    nlohmann::ordered_json points = nlohmann::ordered_json::array();
    for (const auto& p : c.points) points.push_back({p.fpr, p.tpr});
    roc_json.push_back({{"label", c.label}, {"auc", c.auc}, {"points", std::move(points)}});
  }
  auto& ranking_json = j["ranking"];
  ranking_json = nlohmann::ordered_json::array();
  for (const auto& c : ranking) ranking_json.push_back({{"name", c.name}, {"score", c.score}});
  j["provenance"] = provenance;
  return j;
}

BenchReport bench_report_from_json(const nlohmann::ordered_json& doc) {
  try {
    BenchReport report;
    report.experiment = doc.at("experiment").get<std::string>();
    report.flags = doc.at("flags").get<std::vector<std::string>>();
    for (const auto& rj : doc.at("rows")) {
      BenchRow r;
      r.malware_fraction = rj.at("malware_fraction").get<double>();
      r.threshold = rj.at("threshold").get<std::uint32_t>();
      r.model = rj.at("model").get<std::string>();
      r.variant = rj.at("variant").get<std::string>();
      r.parameter = rj.at("parameter").get<std::size_t>();
      r.n_rows = rj.at("n_rows").get<std::size_t>();
      r.n_malware = rj.at("n_malware").get<std::size_t>();
      r.train = metrics_from_json(rj.at("train"));
      r.test = metrics_from_json(rj.at("test"));
      r.test_f1_stddev = rj.at("test_f1_stddev").get<double>();
      r.infeasible = rj.at("infeasible").get<bool>();
      r.note = rj.at("note").get<std::string>();
      for (const auto& [key, value] : rj.at("reference").items()) r.reference[key] = value.get<double>();
      report.rows.push_back(std::move(r));
    }
    for (const auto& cj : doc.at("roc")) {
      RocSeries c;
      c.label = cj.at("label").get<std::string>();
      c.auc = cj.at("auc").get<double>();
      for (const auto& p : cj.at("points")) c.points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      report.roc.push_back(std::move(c));
    }
    for (const auto& cj : doc.at("ranking")) {
      report.ranking.push_back({cj.at("name").get<std::string>(), cj.at("score").get<double>()});
    }
    report.provenance = doc.at("provenance");
    return report;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed bench report: ") + e.what());
  }
}

}  // namespace metatriage
