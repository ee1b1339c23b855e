#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "metatriage/corpus.hpp"
#include "metatriage/rng.hpp"

namespace fixture {

inline metatriage::AppRecord app(const std::string& id, std::uint64_t detections, const std::string& developer = "dev",
                                 const std::string& issuer = "iss") {
  metatriage::AppRecord r;
  r.app_id = id;
  r.package_name = "com.example." + id;
  r.developer_id = developer;
  r.issuer_id = issuer;
  r.permissions = {"android.permission.INTERNET"};
  r.size_bytes = 1000;
  r.num_files = 10;
  r.num_images = 2;
  r.version_code = 1;
  r.age_in_market_days = 100;
  r.last_update_days = 10;
  r.last_signature_update_days = 20;
  r.time_for_creation_days = 5;
  r.cert_validity_days = 9000;
  r.num_downloads = 500;
  r.star_votes = {1, 2, 3, 4, 5};
  r.detection_count = detections;
  return r;
}

/// Corpus with the given detection counts, ids a0, a1, ...
inline std::vector<metatriage::AppRecord> with_counts(const std::vector<std::uint64_t>& counts) {
  std::vector<metatriage::AppRecord> out;
  for (std::size_t i = 0; i < counts.size(); ++i) out.push_back(app("a" + std::to_string(i), counts[i]));
  return out;
}

inline metatriage::GeneratorConfig small(const std::string& preset, std::size_t n_apps) {
  auto config = metatriage::generator_preset(preset);
  config.n_apps = n_apps;
  config.n_developers = n_apps / 20;
  return config;
}

inline std::vector<int> random_labels(metatriage::Engine& rng, std::size_t n) {
  std::vector<int> y(n);
  for (auto& v : y) v = static_cast<int>(metatriage::uniform_index(rng, 2));
  // Both classes present.
  y[0] = 0;
  y[1] = 1;
  return y;
}

}  // namespace fixture
