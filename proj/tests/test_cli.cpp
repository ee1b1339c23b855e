#include <doctest.h>

#include "cli_runner.hpp"
#include "metatriage/cli.hpp"
#include "metatriage/error.hpp"

using namespace metatriage;
using cli_runner::run;
using cli_runner::slurp;
namespace fs = std::filesystem;

namespace {

const fs::path& workdir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "metatriage_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

// A small corpus shared by the tests below.
const fs::path& corpus() {
  static const fs::path path = [] {
    auto p = workdir() / "corpus.jsonl";
    auto r = run({"generate", "--seed", "7", "--n-apps", "3000", "--out", p.string()}, workdir() / "gen");
    REQUIRE(r.exit_code == 0);
    return p;
  }();
  return path;
}

}  // namespace

TEST_CASE("generate is deterministic") {
  const auto a = workdir() / "a.jsonl", b = workdir() / "b.jsonl";
  CHECK(run({"generate", "--seed", "3", "--n-apps", "500", "--out", a.string()}, workdir() / "s").exit_code == 0);
  CHECK(run({"generate", "--seed", "3", "--n-apps", "500", "--out", b.string()}, workdir() / "s").exit_code == 0);
  CHECK(slurp(a) == slurp(b));
  CHECK_FALSE(slurp(a).empty());
}

TEST_CASE("generate reads a config file and flags override it") {
  const auto config = workdir() / "g.json";
  { std::ofstream(config) << R"({"preset": "null", "generator": {"n_apps": 200}})"; }
  const auto out = workdir() / "g.jsonl";
  auto r = run({"generate", "--config", config.string(), "--n-apps", "300", "--out", out.string()}, workdir() / "s");
  REQUIRE(r.exit_code == 0);
  const auto text = slurp(out);
  CHECK(std::count(text.begin(), text.end(), '\n') == 300);
}

TEST_CASE("cv writes its report files and is repeatable") {
  const auto out = workdir() / "reports";
  std::vector<std::string> args{"cv",        "--corpus", corpus().string(), "--subset-size", "300", "--k", "3",
                                "--hashes",  "32",       "--trees",         "20",            "--seed", "5",
                                "--out",     out.string(), "--tag",         "t"};
  auto first = run(args, workdir() / "s");
  REQUIRE(first.exit_code == 0);
  const auto dir = out / "cv" / "t";
  for (const char* f : {"results.csv", "roc.csv", "eval.json", "provenance.json"}) CHECK(fs::exists(dir / f));
  const auto results = slurp(dir / "results.csv"), provenance = slurp(dir / "provenance.json");

  args.push_back("--threads");
  args.push_back("8");
  REQUIRE(run(args, workdir() / "s").exit_code == 0);
  CHECK(slurp(dir / "results.csv") == results);
  CHECK(slurp(dir / "provenance.json") == provenance);

  auto doc = nlohmann::json::parse(provenance);
  CHECK(doc.at("version") == kToolVersion);
  CHECK(doc.contains("corpus_digest"));
  CHECK(doc.at("seeds").at("run") == 5);
  CHECK_FALSE(doc.at("config").contains("threads"));
}

TEST_CASE("exit codes") {
  CHECK(run({"--help"}, workdir() / "s").exit_code == 0);
  CHECK(run({"cv", "--help"}, workdir() / "s").exit_code == 0);

  auto unknown = run({"cv", "--bogus"}, workdir() / "s");
  CHECK(unknown.exit_code == 1);
  CHECK(unknown.err.find("--bogus") != std::string::npos);

  CHECK(run({}, workdir() / "s").exit_code == 1);
  CHECK(run({"cv", "--top", "5", "--all-features", "--corpus", corpus().string()}, workdir() / "s").exit_code == 1);
  CHECK(run({"cv", "--corpus", (workdir() / "missing.jsonl").string()}, workdir() / "s").exit_code == 2);
  CHECK(run({"cv", "--corpus", corpus().string(), "--subset-size", "300", "--threshold", "99"}, workdir() / "s")
            .exit_code == 2);
}

TEST_CASE("dry-run prints the resolved configuration without touching data") {
  const auto out = workdir() / "dry";
  auto r = run({"cv", "--corpus", (workdir() / "not-there.jsonl").string(), "--k", "4", "--out", out.string(),
                "--dry-run"},
               workdir() / "s");
  CHECK(r.exit_code == 0);
  auto doc = nlohmann::json::parse(r.out);
  CHECK(doc.at("command") == "cv");
  CHECK(doc.at("k") == 4);
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("report re-renders a saved experiment byte for byte") {
  const auto out = workdir() / "reports";
  auto r = run({"sweep-hashes", "--corpus", corpus().string(), "--subset-size", "300", "--k", "3", "--sizes",
                "8,16", "--out", out.string(), "--tag", "s"},
               workdir() / "s");
  REQUIRE(r.exit_code == 0);
  const auto dir = out / "hash-sweep" / "s";
  const auto again = workdir() / "rerender";
  REQUIRE(run({"report", "--from", (dir / "report.json").string(), "--out", again.string()}, workdir() / "s")
              .exit_code == 0);
  for (const char* f : {"results.csv", "report.md", "provenance.json"}) CHECK(slurp(again / f) == slurp(dir / f));
}

TEST_CASE("run configs round-trip and reject unknown keys") {
  RunConfig config;
  config.command = "benchmark-grid";
  config.seed = 11;
  config.selection = FeatureSelectionSpec::window(3, 15);
  config.thresholds = {2, 4};
  auto back = run_config_from_json(nlohmann::json::parse(to_json(config).dump()));
  CHECK(to_json(back) == to_json(config));
  CHECK_THROWS_AS(run_config_from_json(nlohmann::json{{"nope", 1}}), DataError);

  config.threads = 8;
  config.out = "x";
  config.tag = "y";
  auto recorded = provenance_config(config);
  CHECK_FALSE(recorded.contains("threads"));
  CHECK_FALSE(recorded.contains("out"));
  CHECK_FALSE(recorded.contains("tag"));
}
