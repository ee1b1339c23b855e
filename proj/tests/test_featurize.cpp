#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fixtures.hpp"
#include "metatriage/error.hpp"
#include "metatriage/featurize.hpp"
#include "metatriage/hash.hpp"

using namespace metatriage;

TEST_CASE("hash64 is stable and seed-dependent") {
  CHECK(hash64("android.permission.INTERNET", 0) == hash64("android.permission.INTERNET", 0));
  CHECK(hash64("android.permission.INTERNET", 0) != hash64("android.permission.INTERNET", 1));
  CHECK(hash64("a", 0) != hash64("b", 0));
  CHECK(to_hex(0xabcULL) == "0000000000000abc");
}

TEST_CASE("hash_permissions basics") {
  HashConfig config{.n_hashes = 32, .seed = 7};
  CHECK(hash_permissions({}, config) == std::vector<double>(32, 0.0));

  std::set<std::string> perms{"A", "B", "C", "D"};
  CHECK(hash_permissions(perms, config) == hash_permissions(perms, config));
  auto v = hash_permissions(perms, config);
  CHECK(std::accumulate(v.begin(), v.end(), 0.0) == doctest::Approx(4.0));

  CHECK(hash_permissions(perms, {.n_hashes = 1}) == std::vector<double>{4.0});
}

TEST_CASE("hash buckets are evenly loaded") {
  const std::size_t n = 512;
  Engine rng(11);
  std::set<std::string> vocab;
  while (vocab.size() < 10 * n) {
    std::string s = "perm.";
    for (int i = 0; i < 12; ++i) s += static_cast<char>('a' + uniform_index(rng, 26));
    vocab.insert(s);
  }
  auto load = hash_permissions(vocab, {.n_hashes = n});
  const double mean = static_cast<double>(vocab.size()) / n;
  CHECK(*std::max_element(load.begin(), load.end()) <= 3.0 * mean);
}

TEST_CASE("reputation rates") {
  std::vector<AppRecord> records;
  std::vector<int> labels;
  for (int i = 0; i < 3; ++i) {
    records.push_back(fixture::app("m" + std::to_string(i), 0, "mixed"));
    labels.push_back(i < 2 ? 1 : 0);
  }
  for (int i = 0; i < 100; ++i) {
    records.push_back(fixture::app("g" + std::to_string(i), 0, "clean"));
    labels.push_back(0);
  }
  auto table = build_reputation_table(records, labels, EntityKind::developer, 1.0);
  CHECK(table.rate("mixed") == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(table.rate("clean") == doctest::Approx(1.0 / 102.0).epsilon(1e-12));
  CHECK(table.global_prior() == doctest::Approx(3.0 / 105.0).epsilon(1e-12));
  CHECK(table.rate("unseen") == table.global_prior());
  CHECK(table.contributors().size() == records.size());
  CHECK_FALSE(table.empty_input());
}

TEST_CASE("balanced corpus gives a prior near one half") {
  std::vector<AppRecord> records;
  std::vector<int> labels;
  for (int i = 0; i < 50; ++i) {
    records.push_back(fixture::app("a" + std::to_string(i), 0, "d" + std::to_string(i)));
    labels.push_back(i % 2);
  }
  auto table = build_reputation_table(records, labels, EntityKind::developer, 1.0);
  CHECK(table.rate("nobody") == doctest::Approx(0.5));
}

TEST_CASE("empty input is flagged and falls back to one half") {
  auto table = build_reputation_table({}, {}, EntityKind::issuer, 1.0);
  CHECK(table.empty_input());
  CHECK(table.global_prior() == 0.5);
  CHECK(table.stats().empty());
}

TEST_CASE("reputation is monotone in the malware count") {
  double previous = 0.0;
  for (int m = 0; m <= 5; ++m) {
    std::vector<AppRecord> records;
    std::vector<int> labels;
    for (int i = 0; i < 5; ++i) {
      records.push_back(fixture::app("a" + std::to_string(i), 0));
      labels.push_back(i < m ? 1 : 0);
    }
    const double r = build_reputation_table(records, labels, EntityKind::developer).rate("dev");
    CHECK(r > 0.0);
    CHECK(r < 1.0);
    CHECK(r > previous);
    previous = r;
  }
}

TEST_CASE("feature layout widths and column names") {
  ReputationTable dev(EntityKind::developer, 1.0), iss(EntityKind::issuer, 1.0);
  dev.finalize();
  iss.finalize();
  std::vector<AppRecord> one{fixture::app("a", 0)};
  auto m32 = assemble_features(one, dev, iss, {.n_hashes = 32});
  CHECK(m32.n_cols() == 56);
  CHECK(m32.column_names.front() == "f0");
  CHECK(m32.column_names[31] == "f31");
  CHECK(m32.column_names[54] == kDeveloperRep);
  CHECK(m32.column_names[55] == kIssuerRep);
  CHECK(assemble_features(one, dev, iss, {.n_hashes = 512}).n_cols() == 536);
  CHECK(intrinsic_column_names().size() == kIntrinsicCount);
  CHECK(social_column_names().size() == kSocialCount);
  CHECK(m32.column_names == feature_column_names({.n_hashes = 32}));
}

TEST_CASE("unseen developer gets the global prior") {
  std::vector<AppRecord> train{fixture::app("a", 0, "d1"), fixture::app("b", 0, "d2")};
  std::vector<int> labels{1, 0};
  auto dev = build_reputation_table(train, labels, EntityKind::developer);
  auto iss = build_reputation_table(train, labels, EntityKind::issuer);
  std::vector<AppRecord> test{fixture::app("c", 0, "stranger")};
  auto m = assemble_features(test, dev, iss, {.n_hashes = 8});
  CHECK(m.at(0, m.column_index(kDeveloperRep)) == dev.global_prior());
  CHECK_THROWS_AS(m.column_index("nope"), ContractError);
}

TEST_CASE("assembled rows are permutation equivariant") {
  auto corpus = generate_synthetic(fixture::small("default", 300), 1);
  std::vector<int> labels;
  for (const auto& r : corpus) labels.push_back(r.detection_count > 0);
  auto dev = build_reputation_table(corpus, labels, EntityKind::developer);
  auto iss = build_reputation_table(corpus, labels, EntityKind::issuer);
  auto forward = assemble_features(corpus, dev, iss, {.n_hashes = 64});
  std::vector<AppRecord> reversed(corpus.rbegin(), corpus.rend());
  auto backward = assemble_features(reversed, dev, iss, {.n_hashes = 64});
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    auto a = forward.row(i);
    auto b = backward.row(corpus.size() - 1 - i);
    CHECK(std::equal(a.begin(), a.end(), b.begin()));
  }
  for (double v : forward.values) REQUIRE(std::isfinite(v));
}

TEST_CASE("equal-frequency binning") {
  std::vector<double> v{1, 2, 3, 4};
  CHECK(bin_column(v, 2).bins == std::vector<int>{0, 0, 1, 1});

  auto constant = bin_column(std::vector<double>{5, 5, 5}, 4);
  CHECK(constant.bins == std::vector<int>{0, 0, 0});
  CHECK(constant.degenerate);

  Engine rng(3);
  std::vector<double> uniform(1000);
  for (auto& x : uniform) x = uniform01(rng);
  auto b = bin_column(uniform, 10);
  std::vector<int> counts(10, 0);
  for (int id : b.bins) counts[static_cast<std::size_t>(id)]++;
  for (int c : counts) CHECK(std::abs(c - 100) <= 1);
}

TEST_CASE("tied values share a bin and edges reproduce bins") {
  std::vector<double> v{3, 1, 1, 1, 1, 2, 2, 5, 5, 9};
  auto b = bin_column(v, 5);
  for (std::size_t i = 0; i < v.size(); ++i) {
    for (std::size_t j = 0; j < v.size(); ++j) {
      if (v[i] == v[j]) CHECK(b.bins[i] == b.bins[j]);
      if (v[i] < v[j]) CHECK(b.bins[i] <= b.bins[j]);
    }
    CHECK(apply_bin_edges(b.edges, v[i]) == b.bins[i]);
    CHECK(b.bins[i] >= 0);
    CHECK(b.bins[i] < 5);
  }
}

TEST_CASE("standardisation is fitted on train only") {
  FeatureMatrix train{.column_names = {"a", "b"}, .values = {0, 7, 2, 7}, .n_rows = 2, .labels = {}};
  FeatureMatrix test{.column_names = {"a", "b"}, .values = {1, 8}, .n_rows = 1, .labels = {}};
  auto s = standardize_fit_apply(train, test);
  CHECK(s.train.at(0, 0) == doctest::Approx(-1.0));
  CHECK(s.train.at(1, 0) == doctest::Approx(1.0));
  CHECK(s.test.at(0, 0) == doctest::Approx(0.0));
  CHECK(s.train.at(0, 1) == 0.0);
  CHECK(s.test.at(0, 1) == 1.0);
  CHECK(s.params.stddev[1] == 1.0);
}

TEST_CASE("standardised train columns have zero mean and unit spread") {
  Engine rng(5);
  FeatureMatrix train;
  train.column_names = {"x", "y", "z"};
  train.n_rows = 200;
  for (std::size_t i = 0; i < 600; ++i) train.values.push_back(uniform01(rng) * 1000.0 + static_cast<double>(i % 3));
  auto s = standardize_fit_apply(train, train);
  for (std::size_t c = 0; c < 3; ++c) {
    auto col = s.train.column(c);
    double mean = std::accumulate(col.begin(), col.end(), 0.0) / col.size();
    double var = 0.0;
    for (double x : col) var += (x - mean) * (x - mean);
    CHECK(std::abs(mean) <= 1e-9);
    CHECK(std::abs(std::sqrt(var / col.size()) - 1.0) <= 1e-9);
  }
}

TEST_CASE("feature CSV has a header of column names") {
  FeatureMatrix m{.column_names = {"f0", "developerRep"}, .values = {1, 0.5}, .n_rows = 1, .labels = {1}};
  std::ostringstream out;
  write_feature_csv(out, m);
  CHECK(out.str().rfind("f0,developerRep", 0) == 0);
}
