#include "metatriage/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "metatriage/csv.hpp"
#include "metatriage/error.hpp"
#include "metatriage/hash.hpp"
#include "metatriage/parallel.hpp"
#include "metatriage/svg.hpp"

namespace metatriage {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// RunConfig <-> JSON

namespace {

void reject_unknown(const nlohmann::json& obj, std::initializer_list<const char*> known, const std::string& where) {
  if (!obj.is_object()) throw DataError(where + " must be a JSON object");
  for (const auto& item : obj.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return item.key() == k; })) {
      throw DataError("unknown config key '" + where + item.key() + "'");
    }
  }
}

template <class T>
void read(const nlohmann::json& obj, const char* key, T& field) {
  if (const auto it = obj.find(key); it != obj.end() && !it->is_null()) {
    try {
      it->get_to(field);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("config key '") + key + "': " + e.what());
    }
  }
}

nlohmann::ordered_json selection_json(const FeatureSelectionSpec& s) {
  switch (s.mode) {
    case FeatureSelectionSpec::Mode::all: return {{"mode", "all"}};
    case FeatureSelectionSpec::Mode::top_k: return {{"mode", "top"}, {"k", s.k}};
    case FeatureSelectionSpec::Mode::window: return {{"mode", "window"}, {"start", s.start}, {"width", s.width}};
    case FeatureSelectionSpec::Mode::columns: return {{"mode", "columns"}, {"columns", s.columns}};
  }
  return nullptr;
}

FeatureSelectionSpec selection_from_json(const nlohmann::json& j) {
  reject_unknown(j, {"mode", "k", "start", "width", "columns"}, "selection.");
  std::string mode = "top";
  read(j, "mode", mode);
  if (mode == "all") return FeatureSelectionSpec::all_features();
  if (mode == "top") {
    std::size_t k = 15;
    read(j, "k", k);
    return FeatureSelectionSpec::top(k);
  }
  if (mode == "window") {
    std::size_t start = 1, width = 15;
    read(j, "start", start);
    read(j, "width", width);
    return FeatureSelectionSpec::window(start, width);
  }
  if (mode == "columns") {
    std::vector<std::string> columns;
    read(j, "columns", columns);
    return FeatureSelectionSpec::named(std::move(columns));
  }
  throw DataError("unknown selection mode '" + mode + "'");
}

PipelineConfig pipeline_from_json(const nlohmann::json& j, PipelineConfig c) {
  reject_unknown(j,
                 {"n_hashes", "hash_seed", "hash_name", "signed_hashing", "groups", "reputation_alpha", "paper_leaky",
                  "n_bins", "ranking_method", "ranking_forest", "hyperparams"},
                 "pipeline.");
  read(j, "n_hashes", c.hash.n_hashes);
  read(j, "hash_seed", c.hash.seed);
  if (const auto it = j.find("hash_name"); it != j.end() && it->get<std::string>() != kHashName) {
    throw DataError("unsupported hash function '" + it->get<std::string>() + "'");
  }
  read(j, "signed_hashing", c.hash.signed_hashing);
  if (const auto it = j.find("groups"); it != j.end()) {
    reject_unknown(*it, {"hashes", "intrinsic", "social", "reputation"}, "pipeline.groups.");
    read(*it, "hashes", c.groups.hashes);
    read(*it, "intrinsic", c.groups.intrinsic);
    read(*it, "social", c.groups.social);
    read(*it, "reputation", c.groups.reputation);
  }
  read(j, "reputation_alpha", c.reputation_alpha);
  read(j, "paper_leaky", c.paper_leaky);
  read(j, "n_bins", c.n_bins);
  if (const auto it = j.find("ranking_method"); it != j.end()) {
    c.ranking_method = selection_method_from_string(it->get<std::string>());
  }
  if (const auto it = j.find("ranking_forest"); it != j.end()) {
    Hyperparams h;
    h.forest = c.ranking_forest;
    c.ranking_forest = hyperparams_from_json({{"forest", *it}}, h).forest;
  }
  if (const auto it = j.find("hyperparams"); it != j.end()) c.hyperparams = hyperparams_from_json(*it, c.hyperparams);
  return c;
}

std::vector<std::string> model_names(const std::vector<ModelKind>& models) {
  std::vector<std::string> out;
  for (auto m : models) out.emplace_back(to_string(m));
  return out;
}

std::vector<ModelKind> models_from_names(const std::vector<std::string>& names) {
  std::vector<ModelKind> out;
  for (const auto& n : names) out.push_back(model_kind_from_string(n));
  return out;
}

}  // namespace

nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["command"] = c.command;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["corpus"] = c.corpus;
  j["out"] = c.out;
  j["tag"] = c.tag;
  j["preset"] = c.preset;
  j["generator"] = c.generator;
  j["threshold"] = c.threshold;
  j["ambiguous_as_goodware"] = c.ambiguous_as_goodware;
  j["malware_fraction"] = c.malware_fraction;
  j["subset_size"] = c.subset_size;
  j["whole_corpus"] = c.whole_corpus;
  j["pipeline"] = to_json(c.pipeline);
  j["k"] = c.k;
  j["model"] = to_string(c.model);
  j["models"] = model_names(c.models);
  j["selection"] = selection_json(c.selection);
  std::vector<std::string> methods;
  for (auto m : c.rank_methods) methods.emplace_back(to_string(m));
  j["rank_methods"] = methods;
  j["fractions"] = c.fractions;
  j["thresholds"] = c.thresholds;
  j["full_scale"] = c.full_scale;
  j["hash_sizes"] = c.hash_sizes;
  j["sweep_model"] = to_string(c.sweep_model);
  j["feature_counts"] = c.feature_counts;
  j["window_starts"] = c.window_starts;
  j["window_width"] = c.window_width;
  j["frozen_ranking"] = c.frozen_ranking;
  j["from"] = c.from;
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& j, RunConfig c) {
  reject_unknown(j,
                 {"command", "seed", "threads", "corpus", "out", "tag", "preset", "generator", "threshold",
                  "ambiguous_as_goodware", "malware_fraction", "subset_size", "whole_corpus", "pipeline", "k", "model",
                  "models", "selection", "rank_methods", "fractions", "thresholds", "full_scale", "hash_sizes",
                  "sweep_model", "feature_counts", "window_starts", "window_width", "frozen_ranking", "from"},
                 "");
  read(j, "command", c.command);
  read(j, "seed", c.seed);
  read(j, "threads", c.threads);
  read(j, "corpus", c.corpus);
  read(j, "out", c.out);
  read(j, "tag", c.tag);
  read(j, "preset", c.preset);
  if (const auto it = j.find("generator"); it != j.end()) {
    if (!it->is_object()) throw DataError("config key 'generator' must be an object");
    c.generator.merge_patch(*it);
  }
  read(j, "threshold", c.threshold);
  read(j, "ambiguous_as_goodware", c.ambiguous_as_goodware);
  read(j, "malware_fraction", c.malware_fraction);
  read(j, "subset_size", c.subset_size);
  read(j, "whole_corpus", c.whole_corpus);
  if (const auto it = j.find("pipeline"); it != j.end()) c.pipeline = pipeline_from_json(*it, c.pipeline);
  read(j, "k", c.k);
  if (const auto it = j.find("model"); it != j.end()) c.model = model_kind_from_string(it->get<std::string>());
  if (const auto it = j.find("models"); it != j.end()) {
    c.models = models_from_names(it->get<std::vector<std::string>>());
  }
  if (const auto it = j.find("selection"); it != j.end()) c.selection = selection_from_json(*it);
  if (const auto it = j.find("rank_methods"); it != j.end()) {
    c.rank_methods.clear();
    for (const auto& name : it->get<std::vector<std::string>>()) {
      c.rank_methods.push_back(selection_method_from_string(name));
    }
  }
  read(j, "fractions", c.fractions);
  read(j, "thresholds", c.thresholds);
  read(j, "full_scale", c.full_scale);
  read(j, "hash_sizes", c.hash_sizes);
  if (const auto it = j.find("sweep_model"); it != j.end()) {
    c.sweep_model = model_kind_from_string(it->get<std::string>());
  }
  read(j, "feature_counts", c.feature_counts);
  read(j, "window_starts", c.window_starts);
  read(j, "window_width", c.window_width);
  read(j, "frozen_ranking", c.frozen_ranking);
  read(j, "from", c.from);
  return c;
}

nlohmann::ordered_json provenance_config(const RunConfig& config) {
  auto j = to_json(config);
  j.erase("threads");
  j.erase("out");
  j.erase("tag");
  return j;
}

// ---------------------------------------------------------------------------
// Subcommands

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void validate(const RunConfig& c) {
  if (c.k < 2) throw UsageError("--k must be at least 2");
  if (c.threshold < 1) throw UsageError("--threshold must be positive");
  if (!(c.malware_fraction > 0.0 && c.malware_fraction < 1.0)) throw UsageError("--malware-fraction must lie in (0,1)");
  for (double f : c.fractions) {
    if (!(f > 0.0 && f < 1.0)) throw UsageError("grid fractions must lie in (0,1)");
  }
  for (auto t : c.thresholds) {
    if (t < 1) throw UsageError("grid thresholds must be positive");
  }
  if (c.pipeline.hash.n_hashes == 0 && c.pipeline.groups.hashes) throw UsageError("--hashes must be positive");
  if (c.models.empty()) throw UsageError("at least one model is required");
  generator_config_from_json(c.generator, generator_preset(c.preset));
}

GeneratorConfig resolved_generator(const RunConfig& c) { return generator_config_from_json(c.generator, generator_preset(c.preset)); }

AmbiguousHandling ambiguous(const RunConfig& c) {
  return c.ambiguous_as_goodware ? AmbiguousHandling::goodware : AmbiguousHandling::exclude;
}

struct LoadedCorpus {
  std::vector<AppRecord> records;
  std::string digest;
};

LoadedCorpus read_corpus(const RunConfig& c) {
  if (c.corpus.empty()) throw UsageError("--corpus is required");
  auto parsed = load_records(c.corpus);
  for (const auto& e : parsed.errors) std::cerr << "warning: " << c.corpus << ":" << e.line << ": " << e.message << "\n";
  if (parsed.records.empty()) throw DataError("corpus " + c.corpus + " holds no valid records");
  LoadedCorpus out;
  out.digest = corpus_digest(parsed.records);
  out.records = std::move(parsed.records);
  return out;
}

LabeledDataset dataset_for(const RunConfig& c, const std::vector<AppRecord>& corpus) {
  const DetectionLabelPolicy policy{c.threshold, ambiguous(c)};
  if (c.whole_corpus) return label_corpus(corpus, policy);
  return compose_subset(corpus, {c.malware_fraction, policy, c.subset_size, c.seed});
}

nlohmann::ordered_json provenance(const RunConfig& c, const std::string& corpus_digest) {
  nlohmann::ordered_json j;
  j["tool"] = "metatriage";
  j["version"] = kToolVersion;
  j["command"] = c.command;
  j["config"] = provenance_config(c);
  j["corpus"] = c.corpus.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(fs::path(c.corpus).filename().string());
  j["corpus_digest"] = corpus_digest;
  j["seeds"] = {{"run", c.seed},
                {"hash", c.pipeline.hash.seed},
                {"forest", c.pipeline.hyperparams.forest.seed},
                {"svm", c.pipeline.hyperparams.svm.seed},
                {"ranking_forest", c.pipeline.ranking_forest.seed}};
  return j;
}

fs::path report_dir(const RunConfig& c, const std::string& experiment) {
  std::string tag = c.tag;
  if (tag.empty()) tag = to_hex(hash64(provenance_config(c).dump(), 0)).substr(0, 12);
  const fs::path root = c.out.empty() ? fs::path("reports") : fs::path(c.out);
  return root / experiment / tag;
}

void announce(const std::vector<fs::path>& written) {
  for (const auto& p : written) std::cout << p.string() << "\n";
}

void write_file(const fs::path& path, const std::string& body) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << body;
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw IoError("cannot write " + path.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot write " + path.string());
  }
}

// Writes to the --out file or stdout.
void emit_text(const RunConfig& c, const std::string& body) {
  if (c.out.empty()) {
    std::cout << body;
  } else {
    write_file(c.out, body);
  }
}

int run_generate(const RunConfig& c) {
  if (c.out.empty()) throw UsageError("generate needs --out");
  const auto records = generate_synthetic(resolved_generator(c), c.seed);
  std::ostringstream body;
  if (format_from_path(c.out) == RecordFormat::csv) write_records_csv(body, records);
  else write_records(body, records);
  write_file(c.out, body.str());
  std::cout << "wrote " << records.size() << " records to " << c.out << " (digest " << corpus_digest(records) << ")\n";
  return 0;
}

int run_histogram(const RunConfig& c) {
  const auto corpus = read_corpus(c);
  const auto hist = detection_histogram(corpus.records);
  std::ostringstream body;
  body << "detection_count,frequency\n";
  svg::Series series{"apps", {}};
  for (const auto& [count, freq] : hist) {
    body << count << ',' << freq << '\n';
    series.points.emplace_back(static_cast<double>(count), static_cast<double>(freq));
  }
  emit_text(c, body.str());
  if (!c.out.empty()) {
    auto svg_path = fs::path(c.out).replace_extension(".svg");
    write_file(svg_path, svg::line_chart({series}, {"Apps by detection count", "AV detections", "Apps", false, false}));
  }
  return 0;
}

int run_featurize(const RunConfig& c) {
  const auto corpus = read_corpus(c);
  const auto dataset = dataset_for(c, corpus.records);
  // Tables over the whole dataset: an export for inspection, not for evaluation.
  const auto dev = build_reputation_table(dataset.records, dataset.labels, EntityKind::developer, c.pipeline.reputation_alpha);
  const auto iss = build_reputation_table(dataset.records, dataset.labels, EntityKind::issuer, c.pipeline.reputation_alpha);
  auto x = assemble_features(dataset.records, dev, iss, c.pipeline.hash, c.pipeline.groups);
  x.labels = dataset.labels;
  std::ostringstream body;
  write_feature_csv(body, x);
  emit_text(c, body.str());
  std::cerr << "note: reputation columns use every row's label; use cv for leakage-safe evaluation\n";
  return 0;
}

int run_rank(const RunConfig& c) {
  const auto corpus = read_corpus(c);
  const auto dataset = dataset_for(c, corpus.records);
  FeatureMatrix x;
  const auto ranked = rank_dataset(dataset, c.pipeline, c.rank_methods, &x);
  std::ostringstream body;
  write_ranking_csv(body, ranked, x.column_names);
  emit_text(c, body.str());
  if (!c.out.empty()) {
    svg::Series series{to_string(ranked.ranking_method), {}};
    const auto& score = ranked.by_method.at(ranked.ranking_method);
    for (std::size_t i = 0; i < std::min<std::size_t>(30, ranked.order.size()); ++i) {
      series.points.emplace_back(i + 1.0, score.normalized[ranked.order[i]]);
    }
    write_file(fs::path(c.out).replace_extension(".svg"),
               svg::line_chart({series}, {"Normalised importance by rank", "Rank", "Score", false, false}));
  }
  return 0;
}

int run_cv(const RunConfig& c) {
  const auto corpus = read_corpus(c);
  const auto dataset = dataset_for(c, corpus.records);
  const auto report = cross_validate(dataset, c.pipeline, c.model, c.k, c.seed, c.selection);
  const auto dir = report_dir(c, "cv");
  std::ostringstream results, roc_csv;
  write_eval_csv(results, report);
  roc_csv << "fpr,tpr\n";
  if (!report.oof_scores.empty()) {
    for (const auto& p : roc_and_auc(report.oof_scores, report.oof_labels).points) {
      roc_csv << csv::format_number(p.fpr, 9) << ',' << csv::format_number(p.tpr, 9) << '\n';
    }
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string());
  write_file(dir / "results.csv", results.str());
  write_file(dir / "roc.csv", roc_csv.str());
  write_file(dir / "eval.json", report.to_json().dump(2) + "\n");
  write_file(dir / "provenance.json", provenance(c, corpus.digest).dump(2) + "\n");
  for (const auto& f : report.flags) std::cerr << "flag: " << f << "\n";
  std::cout << "test F1 " << csv::format_number(report.summary.count("test_f1") ? report.mean("test_f1") : 0.0, 4)
            << ", test AUC " << csv::format_number(report.summary.count("test_auc") ? report.mean("test_auc") : 0.0, 4)
            << "\n";
  announce({dir / "results.csv", dir / "roc.csv", dir / "eval.json", dir / "provenance.json"});
  return 0;
}

ExperimentContext context_for(const RunConfig& c) {
  ExperimentContext ctx;
  ctx.pipeline = c.pipeline;
  ctx.k = c.k;
  ctx.seed = c.seed;
  return ctx;
}

// Ranking fitted once on the given cell, used by every cell of the run.
std::vector<std::string> frozen_columns(const RunConfig& c, const std::vector<AppRecord>& corpus, double fraction,
                                        std::uint32_t threshold, std::size_t subset_size) {
  const auto dataset = compose_subset(corpus, {fraction, {threshold, ambiguous(c)}, subset_size, c.seed});
  FeatureMatrix x;
  const auto ranked = rank_dataset(dataset, c.pipeline, {c.pipeline.ranking_method}, &x);
  std::vector<std::string> names;
  for (auto i : ranked.order) names.push_back(x.column_names[i]);
  return names;
}

int finish_report(const RunConfig& c, BenchReport report, const std::string& corpus_digest) {
  report.provenance = provenance(c, corpus_digest);
  for (const auto& f : report.flags) std::cerr << "flag: " << f << "\n";
  announce(emit_report(report, report_dir(c, report.experiment)));
  return 0;
}

int run_sweep(const RunConfig& c) {
  if (c.hash_sizes.empty()) throw UsageError("--sizes needs at least one value");
  const auto corpus = read_corpus(c);
  const auto dataset = dataset_for(c, corpus.records);
  return finish_report(c, hash_size_sweep(dataset, c.hash_sizes, c.sweep_model, context_for(c)), corpus.digest);
}

int run_curve(const RunConfig& c) {
  const auto corpus = read_corpus(c);
  const auto dataset = dataset_for(c, corpus.records);
  auto ctx = context_for(c);
  if (c.frozen_ranking) {
    ctx.frozen_ranking = frozen_columns(c, corpus.records, c.malware_fraction, c.threshold, c.subset_size);
  }
  const auto p = feature_column_names(c.pipeline.hash, c.pipeline.groups).size();
  const auto counts = c.feature_counts.empty() ? default_feature_counts(p) : c.feature_counts;
  return finish_report(c, feature_count_curve(dataset, counts, c.models, ctx), corpus.digest);
}

int run_grid(const RunConfig& c) {
  const auto corpus = read_corpus(c);
  BenchmarkGrid grid;
  grid.malware_fractions = c.fractions;
  grid.thresholds = c.thresholds;
  grid.subset_size = c.full_scale ? kFullScaleSubsetSize : c.subset_size;
  grid.models = c.models;
  grid.ambiguous = ambiguous(c);
  auto ctx = context_for(c);
  auto selection = c.selection;
  if (c.frozen_ranking) {
    const double f = *std::max_element(c.fractions.begin(), c.fractions.end());
    const auto t = *std::max_element(c.thresholds.begin(), c.thresholds.end());
    const auto names = frozen_columns(c, corpus.records, f, t, grid.subset_size);
    if (selection.mode == FeatureSelectionSpec::Mode::top_k) {
      selection = FeatureSelectionSpec::named({names.begin(), names.begin() + static_cast<std::ptrdiff_t>(std::min(selection.k, names.size()))});
    } else if (selection.mode == FeatureSelectionSpec::Mode::window) {
      if (selection.start < 1 || selection.start - 1 + selection.width > names.size()) {
        throw ContractError("feature window exceeds the frozen ranking");
      }
      const auto first = names.begin() + static_cast<std::ptrdiff_t>(selection.start - 1);
      selection = FeatureSelectionSpec::named({first, first + static_cast<std::ptrdiff_t>(selection.width)});
    }
    ctx.frozen_ranking = names;
  }
  return finish_report(c, grid_benchmark(corpus.records, grid, selection, ctx), corpus.digest);
}

int run_robustness(const RunConfig& c) {
  const auto corpus = read_corpus(c);
  RobustnessOptions options;
  options.thresholds = c.thresholds;
  options.malware_fraction = c.malware_fraction;
  options.subset_size = c.full_scale ? kFullScaleSubsetSize : c.subset_size;
  options.starts = c.window_starts;
  options.width = c.window_width;
  options.model = c.model;
  options.ambiguous = ambiguous(c);
  auto ctx = context_for(c);
  if (c.frozen_ranking) {
    const auto t = *std::max_element(c.thresholds.begin(), c.thresholds.end());
    ctx.frozen_ranking = frozen_columns(c, corpus.records, c.malware_fraction, t, options.subset_size);
  }
  return finish_report(c, robustness_windows(corpus.records, options, ctx), corpus.digest);
}

int run_report(const RunConfig& c) {
  if (c.from.empty()) throw UsageError("report needs --from <report.json>");
  std::ifstream in(c.from);
  if (!in) throw IoError("cannot open " + c.from);
  nlohmann::ordered_json doc;
  try {
    doc = nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(c.from + ": " + e.what());
  }
  const auto report = bench_report_from_json(doc);
  const fs::path dir = c.out.empty() ? fs::path(c.from).parent_path() : fs::path(c.out);
  announce(emit_report(report, dir));
  return 0;
}

// ---------------------------------------------------------------------------
// Option wiring

// Options apply on top of the config file, and only when given.
class Overrides {
 public:
  template <class T, class Apply>
  CLI::Option* option(CLI::App* app, const std::string& name, const std::string& help, Apply apply) {
    auto value = std::make_shared<T>();
    auto* opt = app->add_option(name, *value, help);
    entries_.push_back({opt, [value, apply](RunConfig& c) { apply(c, *value); }});
    return opt;
  }

  CLI::Option* flag(CLI::App* app, const std::string& name, const std::string& help,
                    std::function<void(RunConfig&)> apply) {
    auto* opt = app->add_flag(name, help);
    entries_.push_back({opt, std::move(apply)});
    return opt;
  }

  void apply(RunConfig& c) const {
    for (const auto& [opt, fn] : entries_) {
      if (opt->count() > 0) fn(c);
    }
  }

 private:
  std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&)>>> entries_;
};

struct Command {
  CLI::App* app = nullptr;
  std::function<int(const RunConfig&)> run;
  bool needs_corpus = true;
};

void add_common(CLI::App* app, Overrides& o, std::string& config_path, bool& dry_run) {
  app->add_option("--config", config_path, "JSON config file; command-line flags take precedence")
      ->check(CLI::ExistingFile);
  app->add_flag("--dry-run", dry_run, "Print the resolved configuration and exit");
  o.option<std::uint64_t>(app, "--seed", "Master seed", [](RunConfig& c, auto v) { c.seed = v; });
  o.option<std::size_t>(app, "--threads", "Worker threads (0 = all cores)", [](RunConfig& c, auto v) { c.threads = v; });
}

void add_out(CLI::App* app, Overrides& o, const std::string& help) {
  o.option<std::string>(app, "--out", help, [](RunConfig& c, auto v) { c.out = v; });
}

void add_corpus(CLI::App* app, Overrides& o) {
  o.option<std::string>(app, "--corpus", "Corpus file (.jsonl or .csv)", [](RunConfig& c, auto v) { c.corpus = v; });
}

void add_labels(CLI::App* app, Overrides& o) {
  o.option<std::uint32_t>(app, "--threshold", "AV detections needed to label an app malware",
                          [](RunConfig& c, auto v) { c.threshold = v; });
  o.flag(app, "--ambiguous-as-goodware", "Keep apps below the threshold as goodware instead of dropping them",
         [](RunConfig& c) { c.ambiguous_as_goodware = true; });
}

void add_subset(CLI::App* app, Overrides& o) {
  auto* fraction = o.option<double>(app, "--malware-fraction", "Malware share of the composed subset",
                                    [](RunConfig& c, auto v) { c.malware_fraction = v; });
  auto* size = o.option<std::size_t>(app, "--subset-size", "Rows in the composed subset",
                                     [](RunConfig& c, auto v) { c.subset_size = v; });
  auto* whole = o.flag(app, "--whole-corpus", "Use every labelled record instead of a composed subset",
                       [](RunConfig& c) { c.whole_corpus = true; });
  whole->excludes(fraction)->excludes(size);
}

void add_pipeline(CLI::App* app, Overrides& o) {
  o.option<std::size_t>(app, "--hashes", "Permission hash width", [](RunConfig& c, auto v) { c.pipeline.hash.n_hashes = v; });
  o.option<std::uint64_t>(app, "--hash-seed", "Permission hash seed", [](RunConfig& c, auto v) { c.pipeline.hash.seed = v; });
  o.flag(app, "--signed-hashing", "Accumulate hashed permissions with random signs",
         [](RunConfig& c) { c.pipeline.hash.signed_hashing = true; });
  o.flag(app, "--paper-leaky", "Build reputation tables over all rows, test folds included",
         [](RunConfig& c) { c.pipeline.paper_leaky = true; });
  o.option<double>(app, "--reputation-alpha", "Reputation smoothing pseudo-count",
                   [](RunConfig& c, auto v) { c.pipeline.reputation_alpha = v; });
  o.option<std::size_t>(app, "--bins", "Equal-frequency bins for discrete scores",
                        [](RunConfig& c, auto v) { c.pipeline.n_bins = v; });
  o.option<std::string>(app, "--ranking-method", "chi_squared, info_gain, gain_ratio, mdni or borda",
                        [](RunConfig& c, auto v) { c.pipeline.ranking_method = selection_method_from_string(v); });
  o.option<std::size_t>(app, "--ranking-trees", "Trees in the ranking forest",
                        [](RunConfig& c, auto v) { c.pipeline.ranking_forest.n_trees = v; });
  o.option<std::size_t>(app, "--trees", "Trees per forest model",
                        [](RunConfig& c, auto v) { c.pipeline.hyperparams.forest.n_trees = v; });
  o.option<std::size_t>(app, "--max-depth", "Forest depth limit",
                        [](RunConfig& c, auto v) { c.pipeline.hyperparams.forest.max_depth = v; });
  o.option<std::size_t>(app, "--mtry", "Features tried per split",
                        [](RunConfig& c, auto v) { c.pipeline.hyperparams.forest.mtry = v; });
  o.option<double>(app, "--learning-rate", "Logistic learning rate",
                   [](RunConfig& c, auto v) { c.pipeline.hyperparams.logistic.learning_rate = v; });
  o.option<double>(app, "--l2", "Logistic L2 strength", [](RunConfig& c, auto v) { c.pipeline.hyperparams.logistic.l2_lambda = v; });
  o.option<double>(app, "--svm-lambda", "SVM regulariser", [](RunConfig& c, auto v) { c.pipeline.hyperparams.svm.lambda = v; });
}

void add_folds(CLI::App* app, Overrides& o) {
  o.option<std::size_t>(app, "--k", "Cross-validation folds", [](RunConfig& c, auto v) { c.k = v; });
}

void add_selection(CLI::App* app, Overrides& o) {
  auto* top = o.option<std::size_t>(app, "--top", "Use the top-k ranked columns",
                                    [](RunConfig& c, auto v) { c.selection = FeatureSelectionSpec::top(v); });
  auto* window = o.option<std::vector<std::size_t>>(app, "--window", "Use ranks START..START+WIDTH-1",
                                                    [](RunConfig& c, auto v) {
                                                      c.selection = FeatureSelectionSpec::window(v.at(0), v.at(1));
                                                    });
  window->expected(2)->type_name("START WIDTH");
  auto* all = o.flag(app, "--all-features", "Use every column",
                     [](RunConfig& c) { c.selection = FeatureSelectionSpec::all_features(); });
  top->excludes(window)->excludes(all);
  window->excludes(all);
}

void add_models(CLI::App* app, Overrides& o) {
  o.option<std::vector<std::string>>(app, "--models", "Models to evaluate (logistic, svm, forest)",
                                     [](RunConfig& c, auto v) { c.models = models_from_names(v); })
      ->delimiter(',');
}

void add_frozen(CLI::App* app, Overrides& o) {
  o.flag(app, "--frozen-ranking", "Rank once on the reference cell instead of inside every fold",
         [](RunConfig& c) { c.frozen_ranking = true; });
}

}  // namespace

int dispatch(int argc, const char* const* argv) {
  CLI::App app{"Metadata-based Android malware triage: features, rankings, models and benchmark reports"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);
  Overrides o;
  std::string config_path;
  bool dry_run = false;
  std::vector<Command> commands;

  auto add = [&](const char* name, const char* help, std::function<int(const RunConfig&)> run, bool needs_corpus) {
    auto* sub = app.add_subcommand(name, help);
    add_common(sub, o, config_path, dry_run);
    commands.push_back({sub, std::move(run), needs_corpus});
    return sub;
  };

  auto* generate = add("generate", "Write a synthetic corpus", run_generate, false);
  add_out(generate, o, "Corpus path (.jsonl or .csv)");
  o.option<std::string>(generate, "--preset", "default, strong, permissions or null",
                        [](RunConfig& c, auto v) { c.preset = v; });
  o.option<std::size_t>(generate, "--n-apps", "Number of apps", [](RunConfig& c, auto v) { c.generator["n_apps"] = v; });

  auto* histogram = add("histogram", "Apps per AV detection count", run_histogram, true);
  add_corpus(histogram, o);
  add_out(histogram, o, "CSV path (stdout when omitted); an SVG is written next to it");

  auto* featurize = add("featurize", "Export the feature matrix as CSV", run_featurize, true);
  add_corpus(featurize, o);
  add_out(featurize, o, "CSV path (stdout when omitted)");
  add_labels(featurize, o);
  add_subset(featurize, o);
  add_pipeline(featurize, o);

  auto* rank = add("rank", "Score and rank every feature", run_rank, true);
  add_corpus(rank, o);
  add_out(rank, o, "CSV path (stdout when omitted); an SVG is written next to it");
  add_labels(rank, o);
  add_subset(rank, o);
  add_pipeline(rank, o);
  o.option<std::vector<std::string>>(rank, "--methods", "Scoring methods", [](RunConfig& c, auto v) {
     c.rank_methods.clear();
     for (const auto& name : v) c.rank_methods.push_back(selection_method_from_string(name));
   })->delimiter(',');

  auto* cv = add("cv", "Cross-validate one model on one dataset", run_cv, true);
  add_corpus(cv, o);
  add_out(cv, o, "Report root (default reports)");
  add_labels(cv, o);
  add_subset(cv, o);
  add_pipeline(cv, o);
  add_folds(cv, o);
  add_selection(cv, o);
  o.option<std::string>(cv, "--model", "logistic, svm or forest",
                        [](RunConfig& c, auto v) { c.model = model_kind_from_string(v); });
  o.option<std::string>(cv, "--tag", "Report directory name", [](RunConfig& c, auto v) { c.tag = v; });

  auto* sweep = add("sweep-hashes", "AUC of permission-hash features by hash width", run_sweep, true);
  add_corpus(sweep, o);
  add_out(sweep, o, "Report root (default reports)");
  add_labels(sweep, o);
  add_subset(sweep, o);
  add_pipeline(sweep, o);
  add_folds(sweep, o);
  o.option<std::vector<std::size_t>>(sweep, "--sizes", "Hash widths", [](RunConfig& c, auto v) { c.hash_sizes = v; })
      ->delimiter(',');
  o.option<std::string>(sweep, "--model", "Model used at every width",
                        [](RunConfig& c, auto v) { c.sweep_model = model_kind_from_string(v); });
  o.option<std::string>(sweep, "--tag", "Report directory name", [](RunConfig& c, auto v) { c.tag = v; });

  auto* curve = add("curve-features", "Test F1 against the number of top-ranked features", run_curve, true);
  add_corpus(curve, o);
  add_out(curve, o, "Report root (default reports)");
  add_labels(curve, o);
  add_subset(curve, o);
  add_pipeline(curve, o);
  add_folds(curve, o);
  add_models(curve, o);
  add_frozen(curve, o);
  o.option<std::vector<std::size_t>>(curve, "--counts", "Feature counts (default 1..30 and all)",
                                     [](RunConfig& c, auto v) { c.feature_counts = v; })
      ->delimiter(',');
  o.option<std::string>(curve, "--tag", "Report directory name", [](RunConfig& c, auto v) { c.tag = v; });

  auto* grid = add("benchmark-grid", "Every model on every (malware fraction, threshold) cell", run_grid, true);
  add_corpus(grid, o);
  add_out(grid, o, "Report root (default reports)");
  o.flag(grid, "--ambiguous-as-goodware", "Keep apps below the threshold as goodware",
         [](RunConfig& c) { c.ambiguous_as_goodware = true; });
  auto* grid_size = o.option<std::size_t>(grid, "--subset-size", "Rows per cell",
                                          [](RunConfig& c, auto v) { c.subset_size = v; });
  o.flag(grid, "--full-scale", "Use 50000 rows per cell", [](RunConfig& c) { c.full_scale = true; })->excludes(grid_size);
  o.option<std::vector<double>>(grid, "--fractions", "Malware fractions", [](RunConfig& c, auto v) { c.fractions = v; })
      ->delimiter(',');
  o.option<std::vector<std::uint32_t>>(grid, "--thresholds", "Detection thresholds",
                                       [](RunConfig& c, auto v) { c.thresholds = v; })
      ->delimiter(',');
  add_pipeline(grid, o);
  add_folds(grid, o);
  add_models(grid, o);
  add_selection(grid, o);
  add_frozen(grid, o);
  o.option<std::string>(grid, "--tag", "Report directory name", [](RunConfig& c, auto v) { c.tag = v; });

  auto* robust = add("robustness", "Forest F1 on sliding windows of the ranking", run_robustness, true);
  add_corpus(robust, o);
  add_out(robust, o, "Report root (default reports)");
  o.flag(robust, "--ambiguous-as-goodware", "Keep apps below the threshold as goodware",
         [](RunConfig& c) { c.ambiguous_as_goodware = true; });
  o.option<double>(robust, "--malware-fraction", "Malware share of every subset",
                   [](RunConfig& c, auto v) { c.malware_fraction = v; });
  auto* robust_size = o.option<std::size_t>(robust, "--subset-size", "Rows per subset",
                                            [](RunConfig& c, auto v) { c.subset_size = v; });
  o.flag(robust, "--full-scale", "Use 50000 rows per subset", [](RunConfig& c) { c.full_scale = true; })
      ->excludes(robust_size);
  o.option<std::vector<std::uint32_t>>(robust, "--thresholds", "Detection thresholds",
                                       [](RunConfig& c, auto v) { c.thresholds = v; })
      ->delimiter(',');
  o.option<std::vector<std::size_t>>(robust, "--starts", "First rank of every window",
                                     [](RunConfig& c, auto v) { c.window_starts = v; })
      ->delimiter(',');
  o.option<std::size_t>(robust, "--width", "Columns per window", [](RunConfig& c, auto v) { c.window_width = v; });
  o.option<std::string>(robust, "--model", "Model (default forest)",
                        [](RunConfig& c, auto v) { c.model = model_kind_from_string(v); });
  add_pipeline(robust, o);
  add_folds(robust, o);
  add_frozen(robust, o);
  o.option<std::string>(robust, "--tag", "Report directory name", [](RunConfig& c, auto v) { c.tag = v; });

  auto* report = add("report", "Re-render a saved report.json", run_report, false);
  o.option<std::string>(report, "--from", "report.json written by an experiment",
                        [](RunConfig& c, auto v) { c.from = v; });
  add_out(report, o, "Output directory (default: next to the input)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  const Command* chosen = nullptr;
  for (const auto& cmd : commands) {
    if (cmd.app->parsed()) chosen = &cmd;
  }
  if (!chosen) return 1;

  try {
    RunConfig config;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw IoError("cannot open " + config_path);
      nlohmann::json doc;
      try {
        doc = nlohmann::json::parse(in);
      } catch (const nlohmann::json::parse_error& e) {
        throw DataError(config_path + ": " + e.what());
      }
      config = run_config_from_json(doc);
    }
    o.apply(config);
    config.command = chosen->app->get_name();
    validate(config);
    // Config-file values have no CLI11 exclusion checks.
    if (config.whole_corpus && config.command != "benchmark-grid" && config.command != "robustness" &&
        config.frozen_ranking) {
      throw UsageError("--frozen-ranking needs a composed subset; drop whole_corpus");
    }
    if (dry_run) {
      std::cout << to_json(config).dump(2) << "\n";
      return 0;
    }
    set_max_threads(config.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : config.threads);
    return chosen->run(config);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\nRun with --help for usage.\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace metatriage
