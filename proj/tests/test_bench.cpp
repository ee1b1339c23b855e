#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "metatriage/bench.hpp"
#include "metatriage/error.hpp"

using namespace metatriage;
namespace fs = std::filesystem;

namespace {

ExperimentContext small_context(std::size_t n_hashes = 32) {
  ExperimentContext context;
  context.pipeline.hash.n_hashes = n_hashes;
  context.pipeline.ranking_forest.n_trees = 10;
  context.pipeline.hyperparams.forest.n_trees = 20;
  context.k = 3;
  context.seed = 1;
  return context;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("metatriage_bench_" + name);
  fs::remove_all(dir);
  return dir;
}

const std::vector<AppRecord>& default_corpus() {
  static const auto corpus = generate_synthetic(generator_preset("default"), 0);
  return corpus;
}

}  // namespace

TEST_CASE("hash sweep yields one point per width") {
  CHECK(default_hash_sizes() == std::vector<std::size_t>{32, 64, 128, 256, 512, 1024, 2048});
  auto corpus = generate_synthetic(fixture::small("permissions", 4000), 2);
  auto ds = compose_subset(corpus, {.malware_fraction = 0.5, .policy = {1}, .target_size = 300});
  auto report = hash_size_sweep(ds, default_hash_sizes(), ModelKind::logistic, small_context());
  CHECK(report.experiment == "hash-sweep");
  REQUIRE(report.rows.size() == 7);
  CHECK(report.roc.size() == 7);
  for (std::size_t i = 0; i < 7; ++i) CHECK(report.rows[i].parameter == default_hash_sizes()[i]);
}

TEST_CASE("a single hash bucket carries no permission signal") {
  auto corpus = generate_synthetic(generator_preset("permissions"), 3);
  auto ds = compose_subset(corpus, {.malware_fraction = 0.5, .policy = {1}, .target_size = 3000, .seed = 3});
  auto context = small_context();
  context.k = 5;
  auto report = hash_size_sweep(ds, {1}, ModelKind::logistic, context);
  REQUIRE(report.rows.size() == 1);
  CHECK(std::abs(report.rows[0].test.auc - 0.5) <= 0.05);
}

TEST_CASE("failing sweep points are marked and the sweep continues") {
  auto ds = compose_subset(default_corpus(), {.malware_fraction = 0.5, .policy = {1}, .target_size = 200});
  auto report = hash_size_sweep(ds, {0, 16}, ModelKind::logistic, small_context());
  REQUIRE(report.rows.size() == 2);
  CHECK(report.rows[0].infeasible);
  CHECK_FALSE(report.rows[0].note.empty());
  CHECK_FALSE(report.rows[1].infeasible);
}

TEST_CASE("default feature counts") {
  auto counts = default_feature_counts(536);
  CHECK(counts.size() == 31);
  CHECK(counts.front() == 1);
  CHECK(counts[29] == 30);
  CHECK(counts.back() == 536);
  CHECK(default_feature_counts(10).size() == 10);
}

TEST_CASE("feature curve at k = P matches using every feature") {
  auto ds = compose_subset(default_corpus(), {.malware_fraction = 0.5, .policy = {4}, .target_size = 200});
  auto context = small_context(8);
  const std::size_t p = feature_column_names(context.pipeline.hash).size();
  auto curve = feature_count_curve(ds, {p}, {ModelKind::logistic}, context);
  REQUIRE(curve.rows.size() == 1);
  auto all = cross_validate(ds, context.pipeline, ModelKind::logistic, context.k, context.seed);
  CHECK(curve.rows[0].test.f1 == doctest::Approx(all.mean("test_f1")).epsilon(1e-12));
  CHECK(curve.rows[0].test.auc == doctest::Approx(all.mean("test_auc")).epsilon(1e-12));
  CHECK_FALSE(curve.ranking.empty());
}

TEST_CASE("feature curve on the strong corpus plateaus by fifteen columns") {
  auto corpus = generate_synthetic(generator_preset("strong"), 1);
  auto ds = compose_subset(corpus, {.malware_fraction = 0.5, .policy = {4}, .target_size = 3000, .seed = 1});
  // Smaller subsets or forests make the curve too noisy for a 0.02 band.
  ExperimentContext context;
  context.pipeline.hash.n_hashes = 64;
  context.seed = 1;
  const std::size_t p = feature_column_names(context.pipeline.hash).size();
  auto curve = feature_count_curve(ds, default_feature_counts(p), {ModelKind::forest}, context);
  double best = 0.0, at1 = 0.0, at15 = 0.0;
  for (const auto& row : curve.rows) {
    best = std::max(best, row.test.f1);
    if (row.parameter == 1) at1 = row.test.f1;
    if (row.parameter == 15) at15 = row.test.f1;
  }
  CHECK(at1 > 0.8);
  CHECK(at15 >= best - 0.02);
}

TEST_CASE("window 3-17 leaves out the two best columns of each fold") {
  auto ds = compose_subset(default_corpus(), {.malware_fraction = 0.5, .policy = {4}, .target_size = 200});
  auto context = small_context();
  std::vector<std::vector<std::string>> top_two;
  auto observer = [&](const PreparedFold& fold) {
    REQUIRE(fold.ranking);
    top_two.push_back({fold.train.column_names[fold.ranking->order[0]],
                       fold.train.column_names[fold.ranking->order[1]]});
  };
  auto report = cross_validate(ds, context.pipeline, ModelKind::forest, 3, 1, FeatureSelectionSpec::window(3, 15),
                               observer);
  REQUIRE(top_two.size() == 3);
  for (std::size_t f = 0; f < 3; ++f) {
    const auto& cols = report.folds[f].selected_columns;
    CHECK(cols.size() == 15);
    for (const auto& name : top_two[f]) CHECK(std::find(cols.begin(), cols.end(), name) == cols.end());
  }
}

TEST_CASE("default grid gives 27 rows and three model blocks") {
  BenchmarkGrid grid;
  grid.subset_size = 120;
  auto report = grid_benchmark(default_corpus(), grid, FeatureSelectionSpec::top(5), small_context(8));
  CHECK(report.experiment == "grid");
  REQUIRE(report.rows.size() == 27);
  for (const auto& row : report.rows) {
    CHECK_FALSE(row.infeasible);
    CHECK(row.reference.count("test_f1") == 1);
  }
  const auto md = render_markdown(report);
  for (const char* model : {"logistic", "svm", "forest"}) CHECK(md.find(std::string("## ") + model) != std::string::npos);
}

TEST_CASE("infeasible grid cells are marked and the grid continues") {
  BenchmarkGrid grid;
  grid.malware_fractions = {0.5};
  grid.thresholds = {4, 60};
  grid.models = {ModelKind::logistic};
  grid.subset_size = 100;
  auto report = grid_benchmark(default_corpus(), grid, FeatureSelectionSpec::top(5), small_context(8));
  REQUIRE(report.rows.size() == 2);
  const auto bad = std::count_if(report.rows.begin(), report.rows.end(), [](auto& r) { return r.infeasible; });
  CHECK(bad == 1);
}

TEST_CASE("robustness covers every window per threshold") {
  RobustnessOptions options;
  options.subset_size = 150;
  auto report = robustness_windows(default_corpus(), options, small_context(8));
  CHECK(report.experiment == "robustness");
  REQUIRE(report.rows.size() == 21);
  CHECK(report.rows[0].variant == "window 1-15");
  CHECK(report.rows[6].variant == "window 13-27");
}

TEST_CASE("frozen rankings are flagged") {
  auto ds = compose_subset(default_corpus(), {.malware_fraction = 0.5, .policy = {4}, .target_size = 150});
  auto context = small_context(8);
  const auto ranked = ranked_columns(ds, context.pipeline, 30);
  REQUIRE(ranked.size() == 30);
  CHECK(ranked.front().score == 1.0);
  context.frozen_ranking = std::vector<std::string>{};
  for (const auto& c : ranked) context.frozen_ranking->push_back(c.name);
  auto curve = feature_count_curve(ds, {3}, {ModelKind::logistic}, context);
  CHECK(std::find_if(curve.flags.begin(), curve.flags.end(),
                     [](auto& f) { return f.find("frozen") != std::string::npos; }) != curve.flags.end());
}

TEST_CASE("empty report renders a header and a no-results note") {
  BenchReport empty;
  empty.experiment = "grid";
  std::ostringstream csv;
  write_results_csv(csv, empty);
  const auto text = csv.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 1);
  CHECK(text.rfind("experiment,", 0) == 0);
  CHECK(render_markdown(empty).find("No results.") != std::string::npos);
}

TEST_CASE("emitting twice gives identical files") {
  auto ds = compose_subset(default_corpus(), {.malware_fraction = 0.5, .policy = {4}, .target_size = 150});
  auto report = hash_size_sweep(ds, {8, 16}, ModelKind::logistic, small_context());
  report.provenance["seed"] = 1;
  const auto a = scratch("a"), b = scratch("b");
  auto files_a = emit_report(report, a);
  auto files_b = emit_report(report, b);
  REQUIRE(files_a.size() == files_b.size());
  CHECK(files_a.size() >= 5);
  for (std::size_t i = 0; i < files_a.size(); ++i) {
    CHECK(files_a[i].filename() == files_b[i].filename());
    CHECK(slurp(files_a[i]) == slurp(files_b[i]));
  }
  CHECK(fs::exists(a / "results.csv"));
  CHECK(fs::exists(a / "report.md"));
  CHECK(fs::exists(a / "provenance.json"));

  // report.json replays into the same report.
  auto back = bench_report_from_json(nlohmann::ordered_json::parse(slurp(a / "report.json")));
  CHECK(back.to_json().dump() == report.to_json().dump());
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("unwritable destinations raise and leave nothing behind") {
  const auto base = scratch("blocked");
  fs::create_directories(base);
  { std::ofstream(base / "file") << "x"; }
  BenchReport report;
  report.experiment = "grid";
  CHECK_THROWS_AS(emit_report(report, base / "file" / "sub"), IoError);
  CHECK(std::distance(fs::directory_iterator(base), fs::directory_iterator()) == 1);
  fs::remove_all(base);
}
