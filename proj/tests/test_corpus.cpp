#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "fixtures.hpp"
#include "metatriage/corpus.hpp"
#include "metatriage/error.hpp"
#include "metatriage/featurize.hpp"
#include "oracles.hpp"

using namespace metatriage;

TEST_CASE("label_record follows the detection threshold") {
  DetectionLabelPolicy p1{1, AmbiguousHandling::exclude};
  DetectionLabelPolicy p2{2, AmbiguousHandling::exclude};
  DetectionLabelPolicy p4{4, AmbiguousHandling::exclude};
  CHECK(label_record(fixture::app("a", 0), p1) == Label::goodware);
  CHECK(label_record(fixture::app("a", 4), p4) == Label::malware);
  CHECK(label_record(fixture::app("a", 1), p2) == Label::ambiguous);
  CHECK(label_record(fixture::app("a", 3), p4) == Label::ambiguous);
}

TEST_CASE("ambiguous records are dropped or kept as goodware") {
  const auto corpus = fixture::with_counts({0, 1, 2, 5});
  auto dropped = label_corpus(corpus, {4, AmbiguousHandling::exclude});
  CHECK(dropped.size() == 2);
  CHECK(dropped.n_malware() == 1);
  auto kept = label_corpus(corpus, {4, AmbiguousHandling::goodware});
  CHECK(kept.size() == 4);
  CHECK(kept.n_malware() == 1);
}

TEST_CASE("records round-trip through JSON Lines and CSV") {
  auto corpus = generate_synthetic(fixture::small("default", 200), 3);
  SUBCASE("jsonl") {
    std::stringstream s;
    write_records(s, corpus);
    auto back = parse_records(s, RecordFormat::jsonlines);
    CHECK(back.errors.empty());
    CHECK(back.records == corpus);
  }
  SUBCASE("csv") {
    std::stringstream s;
    write_records_csv(s, corpus);
    auto back = parse_records(s, RecordFormat::csv);
    CHECK(back.errors.empty());
    CHECK(back.records == corpus);
  }
}

TEST_CASE("parsing an empty stream yields nothing") {
  std::stringstream s;
  auto result = parse_records(s, RecordFormat::jsonlines);
  CHECK(result.records.empty());
  CHECK(result.errors.empty());
}

TEST_CASE("malformed records are skipped with their line number") {
  std::stringstream good;
  write_records(good, {fixture::app("a", 0), fixture::app("b", 2)});
  std::string text = good.str();
  auto bad = to_json(fixture::app("c", 1));
  bad["size_bytes"] = -5;
  text += bad.dump() + "\n";
  text += "not json\n";
  std::stringstream in(text);
  auto result = parse_records(in, RecordFormat::jsonlines);
  REQUIRE(result.records.size() == 2);
  REQUIRE(result.errors.size() == 2);
  CHECK(result.errors[0].line == 3);
  CHECK(result.errors[1].line == 4);
}

TEST_CASE("too many bad records abort parsing") {
  std::stringstream in("x\ny\nz\n");
  CHECK_THROWS_AS(parse_records(in, RecordFormat::jsonlines, {.max_errors = 2}), DataError);
}

TEST_CASE("duplicate app_id is fatal") {
  std::stringstream s;
  write_records(s, {fixture::app("a", 0), fixture::app("a", 1)});
  CHECK_THROWS_AS(parse_records(s, RecordFormat::jsonlines), DataError);
}

TEST_CASE("compose_subset hits the requested fraction") {
  std::vector<std::uint64_t> counts(20, 0);
  for (int i = 0; i < 5; ++i) counts[i] = 3;
  const auto corpus = fixture::with_counts(counts);
  auto ds = compose_subset(corpus, {.malware_fraction = 0.25, .policy = {1}, .target_size = 8, .seed = 1});
  CHECK(ds.size() == 8);
  CHECK(ds.n_malware() == 2);
  CHECK_FALSE(ds.shrunk);

  auto again = compose_subset(corpus, {.malware_fraction = 0.25, .policy = {1}, .target_size = 8, .seed = 1});
  CHECK(again.records == ds.records);
}

TEST_CASE("compose_subset shrinks when malware runs short") {
  // 18 malware at threshold 4, plenty of goodware: 50% of 50 needs 25.
  std::vector<std::uint64_t> counts(100, 0);
  for (int i = 0; i < 18; ++i) counts[i] = 4;
  auto ds = compose_subset(fixture::with_counts(counts), {.malware_fraction = 0.5, .policy = {4}, .target_size = 50});
  CHECK(ds.shrunk);
  CHECK(ds.size() == 36);
  CHECK(ds.n_malware() == 18);
}

TEST_CASE("compose_subset names the missing class") {
  CHECK_THROWS_WITH_AS(compose_subset(fixture::with_counts({0, 0, 1}), {.policy = {4}, .target_size = 10}),
                       doctest::Contains("malware"), CompositionError);
  CHECK_THROWS_WITH_AS(compose_subset(fixture::with_counts({5, 5, 5}), {.policy = {1}, .target_size = 10}),
                       doctest::Contains("goodware"), CompositionError);
}

TEST_CASE("different seeds give different subsets") {
  auto corpus = generate_synthetic(fixture::small("default", 2000), 1);
  auto a = compose_subset(corpus, {.malware_fraction = 0.5, .policy = {1}, .target_size = 200, .seed = 1});
  auto b = compose_subset(corpus, {.malware_fraction = 0.5, .policy = {1}, .target_size = 200, .seed = 2});
  CHECK(a.records != b.records);
}

TEST_CASE("detection_histogram counts flagged records") {
  auto h = detection_histogram(fixture::with_counts({0, 1, 1, 3}));
  CHECK(h == std::map<std::uint64_t, std::size_t>{{1, 2}, {3, 1}});
  CHECK(detection_histogram({}).empty());

  auto corpus = generate_synthetic(fixture::small("default", 3000), 5);
  std::size_t total = 0;
  for (auto [count, freq] : detection_histogram(corpus)) total += freq;
  CHECK(total == static_cast<std::size_t>(
                     std::count_if(corpus.begin(), corpus.end(), [](auto& r) { return r.detection_count >= 1; })));
}

TEST_CASE("malware sets are nested across thresholds") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    auto corpus = generate_synthetic(fixture::small("default", 2000), seed);
    std::set<std::string> previous;
    bool first = true;
    for (std::uint32_t t : {1u, 2u, 4u}) {
      std::set<std::string> current;
      for (const auto& r : corpus) {
        if (label_record(r, {t}) == Label::malware) current.insert(r.app_id);
      }
      if (!first) CHECK(std::includes(previous.begin(), previous.end(), current.begin(), current.end()));
      previous = current;
      first = false;
    }
  }
}

TEST_CASE("generator is deterministic and honours its configuration") {
  auto config = fixture::small("default", 10000);
  auto a = generate_synthetic(config, 9);
  auto b = generate_synthetic(config, 9);
  CHECK(a == b);
  CHECK(corpus_digest(a) == corpus_digest(b));
  CHECK(corpus_digest(a) != corpus_digest(generate_synthetic(config, 10)));

  const double malware = static_cast<double>(
      std::count_if(a.begin(), a.end(), [](auto& r) { return r.detection_count >= 1; }));
  CHECK(std::abs(malware / a.size() - config.malware_fraction) <= 0.02);

  std::set<std::string> ids;
  for (const auto& r : a) ids.insert(r.app_id);
  CHECK(ids.size() == a.size());
}

TEST_CASE("detection counts of malware decay with the count") {
  auto corpus = generate_synthetic(fixture::small("default", 20000), 2);
  auto h = detection_histogram(corpus);
  // Compare the first few bins, where every count is large enough to be stable.
  for (std::uint64_t c = 1; c < 5; ++c) CHECK(h[c] >= h[c + 1]);
  CHECK(h.rbegin()->first <= 53);
}

TEST_CASE("infeasible generator configurations are rejected") {
  auto config = generator_preset("default");
  config.malware_developer_fraction = 0.0;
  CHECK_THROWS_AS(generate_synthetic(config, 0), GenerationError);
  config = generator_preset("default");
  config.n_apps = 0;
  CHECK_THROWS_AS(generate_synthetic(config, 0), GenerationError);
  CHECK_THROWS_AS(generator_preset("nope"), DataError);
  CHECK_THROWS_AS(generator_config_from_json(nlohmann::json{{"bogus", 1}}), DataError);
}

TEST_CASE("generator config overrides round-trip") {
  auto base = generator_preset("strong");
  auto config = generator_config_from_json(nlohmann::json{{"n_apps", 123}}, base);
  CHECK(config.n_apps == 123);
  CHECK(config.signal_strengths.reputation == base.signal_strengths.reputation);
  auto back = generator_config_from_json(nlohmann::json::parse(to_json(config).dump()));
  CHECK(to_json(back) == to_json(config));
}

namespace {

// AUC of developerRep on the second half when the table is built on the first.
double developer_rep_auc(const std::string& preset, std::uint64_t seed) {
  auto corpus = generate_synthetic(fixture::small(preset, 10000), seed);
  auto ds = label_corpus(corpus, {1});
  const std::size_t half = ds.size() / 2;
  auto table = build_reputation_table(std::span(ds.records).first(half), std::span(ds.labels).first(half),
                                      EntityKind::developer);
  std::vector<double> scores;
  std::vector<int> labels;
  for (std::size_t i = half; i < ds.size(); ++i) {
    scores.push_back(table.rate(ds.records[i].developer_id));
    labels.push_back(ds.labels[i]);
  }
  return oracle::pairwise_auc(scores, labels);
}

}  // namespace

TEST_CASE("planted reputation signal separates the classes") {
  CHECK(developer_rep_auc("strong", 4) >= 0.9);
}

TEST_CASE("null preset carries no reputation signal") {
  CHECK(std::abs(developer_rep_auc("null", 4) - 0.5) <= 0.03);
}
