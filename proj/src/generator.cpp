#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "metatriage/corpus.hpp"
#include "metatriage/error.hpp"
#include "metatriage/rng.hpp"

namespace metatriage {

namespace {

// Popular framework permissions with their base rates; identical for both
// classes so they carry no label signal.
struct CommonPermission {
  const char* name;
  double rate;
};
constexpr CommonPermission kCommonPermissions[] = {
    {"android.permission.INTERNET", 0.9607},
    {"android.permission.ACCESS_NETWORK_STATE", 0.9115},
    {"android.permission.READ_EXTERNAL_STORAGE", 0.545},
    {"android.permission.WRITE_EXTERNAL_STORAGE", 0.5412},
    {"android.permission.READ_PHONE_STATE", 0.3981},
    {"android.permission.WAKE_LOCK", 0.35},
    {"android.permission.ACCESS_WIFI_STATE", 0.30},
    {"android.permission.VIBRATE", 0.25},
    {"android.permission.ACCESS_COARSE_LOCATION", 0.20},
    {"android.permission.ACCESS_FINE_LOCATION", 0.18},
    {"android.permission.GET_ACCOUNTS", 0.12},
    {"android.permission.CAMERA", 0.10},
};
constexpr std::size_t kNumCommon = std::size(kCommonPermissions);

class DiscreteSampler {
 public:
  explicit DiscreteSampler(const std::vector<double>& weights) : cumulative_(weights.size()) {
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      acc += weights[i];
      cumulative_[i] = acc;
    }
  }
  std::size_t operator()(Engine& rng) const {
    const double u = uniform01(rng) * cumulative_.back();
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()), cumulative_.size() - 1);
  }

 private:
  std::vector<double> cumulative_;
};

std::string numbered(const char* prefix, std::size_t value, int width) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, width, value);
  return buf;
}

std::uint64_t to_count(double value) {
  if (!(value > 0.0)) return 0;
  return static_cast<std::uint64_t>(std::llround(std::min(value, 9.0e15)));
}

void validate(const GeneratorConfig& c) {
  auto fail = [](const std::string& msg) { throw GenerationError("infeasible generator config: " + msg); };
  if (c.n_apps == 0) fail("n_apps must be positive");
  if (c.n_developers == 0 || c.n_issuers == 0) fail("n_developers and n_issuers must be positive");
  if (c.permission_vocabulary_size == 0) fail("permission_vocabulary_size must be positive");
  if (c.malware_developer_fraction < 0.0 || c.malware_developer_fraction > 1.0) {
    fail("malware_developer_fraction must lie in [0,1]");
  }
  if (c.malware_fraction < 0.0 || c.malware_fraction > 1.0) fail("malware_fraction must lie in [0,1]");
  if (c.malicious_developer_malware_rate < 0.0 || c.malicious_developer_malware_rate > 1.0) {
    fail("malicious_developer_malware_rate must lie in [0,1]");
  }
  if (c.self_signed_fraction < 0.0 || c.self_signed_fraction > 1.0) fail("self_signed_fraction must lie in [0,1]");
  if (c.extra_permissions_min > c.extra_permissions_max) fail("extra_permissions_min exceeds extra_permissions_max");
  if (c.engine_count_distribution.max_engines == 0) fail("max_engines must be positive");
  if (c.engine_count_distribution.exponent <= 0.0) fail("engine exponent must be positive");
  if (c.malware_fraction > 0.0 && c.malware_developer_fraction == 0.0) {
    fail("malware requested but malware_developer_fraction is 0");
  }
  const auto& s = c.signal_strengths;
  for (double v : {s.reputation, s.temporal, s.intrinsic, s.permissions, s.social}) {
    if (v < 0.0) fail("signal strengths must be non-negative");
  }
}

}  // namespace

std::vector<AppRecord> generate_synthetic(const GeneratorConfig& config, std::uint64_t seed) {
  validate(config);
  const auto& sig = config.signal_strengths;
  const double rep_strength = std::min(1.0, sig.reputation);
  const double perm_strength = std::min(1.0, sig.permissions);

  // Developers and issuers.
  Engine entity_rng(derive_seed(seed, 1));
  const std::size_t n_dev = config.n_developers;
  const std::size_t n_iss = config.n_issuers;
  std::vector<char> dev_malicious(n_dev, 0);
  {
    std::vector<std::size_t> order(n_dev);
    for (std::size_t i = 0; i < n_dev; ++i) order[i] = i;
    shuffle(std::span(order), entity_rng);
    auto n_mal = static_cast<std::size_t>(std::llround(config.malware_developer_fraction * static_cast<double>(n_dev)));
    if (config.malware_developer_fraction > 0.0) n_mal = std::max<std::size_t>(n_mal, 1);
    for (std::size_t i = 0; i < n_mal; ++i) dev_malicious[order[i]] = 1;
  }
  std::vector<char> iss_shady(n_iss, 0);
  std::vector<std::size_t> shady_issuers, clean_issuers;
  {
    std::vector<std::size_t> order(n_iss);
    for (std::size_t i = 0; i < n_iss; ++i) order[i] = i;
    shuffle(std::span(order), entity_rng);
    auto n_shady = static_cast<std::size_t>(std::llround(config.malware_developer_fraction * static_cast<double>(n_iss)));
    if (config.malware_developer_fraction > 0.0) n_shady = std::clamp<std::size_t>(n_shady, 1, n_iss);
    for (std::size_t i = 0; i < n_shady; ++i) iss_shady[order[i]] = 1;
    for (std::size_t i = 0; i < n_iss; ++i) (iss_shady[i] ? shady_issuers : clean_issuers).push_back(i);
  }
  std::vector<std::string> dev_names(n_dev), dev_issuer(n_dev);
  for (std::size_t d = 0; d < n_dev; ++d) {
    dev_names[d] = numbered("dev-", d, 5);
    if (bernoulli(entity_rng, config.self_signed_fraction)) {
      dev_issuer[d] = dev_names[d];
      continue;
    }
    const auto& own_pool = dev_malicious[d] ? shady_issuers : clean_issuers;
    std::size_t issuer;
    // Issuers serve a mix of developers, so they track the class less tightly.
    if (!own_pool.empty() && bernoulli(entity_rng, 0.3 * rep_strength)) {
      issuer = own_pool[uniform_index(entity_rng, own_pool.size())];
    } else {
      issuer = uniform_index(entity_rng, n_iss);
    }
    dev_issuer[d] = numbered("iss-", issuer, 4);
  }

  // App -> developer assignment with a heavy-tailed portfolio size.
  std::vector<double> dev_weight(n_dev);
  {
    std::vector<std::size_t> rank(n_dev);
    for (std::size_t i = 0; i < n_dev; ++i) rank[i] = i;
    shuffle(std::span(rank), entity_rng);
    for (std::size_t d = 0; d < n_dev; ++d) dev_weight[d] = std::pow(static_cast<double>(rank[d] + 1), -0.7);
  }
  const DiscreteSampler pick_developer(dev_weight);
  Engine assign_rng(derive_seed(seed, 2));
  std::vector<std::size_t> app_dev(config.n_apps);
  std::size_t apps_by_malicious = 0;
  for (auto& d : app_dev) {
    d = pick_developer(assign_rng);
    apps_by_malicious += dev_malicious[d] ? 1 : 0;
  }

  // Per-developer malware rates that keep the overall fraction on target.
  const double m = config.malware_fraction;
  const double share = static_cast<double>(apps_by_malicious) / static_cast<double>(config.n_apps);
  const double h = config.malicious_developer_malware_rate;
  double rate_malicious = m, rate_benign = m;
  if (m > 0.0) {
    if (share == 0.0) throw GenerationError("infeasible generator config: no app was assigned to a malicious developer");
    double benign_full = share < 1.0 ? (m - share * h) / (1.0 - share) : 0.0;
    double malicious_full = h;
    if (share >= 1.0) malicious_full = m;
    // A portfolio draw can leave the malicious share too large or too small for
    // the requested rate; move the rate to the nearest feasible value.
    if (benign_full < 0.0) {
      benign_full = 0.0;
      malicious_full = m / share;
    } else if (benign_full > 1.0) {
      benign_full = 1.0;
      malicious_full = (m - (1.0 - share)) / share;
    }
    rate_malicious = m + rep_strength * (malicious_full - m);
    rate_benign = m + rep_strength * (benign_full - m);
  }

  // Detection-count law for malicious apps.
  std::vector<double> engine_weights(config.engine_count_distribution.max_engines);
  for (std::size_t c = 0; c < engine_weights.size(); ++c) {
    engine_weights[c] = std::pow(static_cast<double>(c + 1), -config.engine_count_distribution.exponent);
  }
  const DiscreteSampler pick_engines(engine_weights);

  // Permission vocabulary: common framework permissions, then custom ones
  // split into a malware-leaning pool, a goodware-leaning pool and a neutral
  // remainder.
  std::vector<std::string> custom;
  const std::size_t n_common = std::min(kNumCommon, config.permission_vocabulary_size);
  for (std::size_t i = n_common; i < config.permission_vocabulary_size; ++i) {
    custom.push_back("com.vendor" + std::to_string(i % 97) + ".permission." + numbered("P", i, 5));
  }
  const std::size_t pool_size = custom.size() / 4;
  const std::size_t mal_pool_begin = 0, good_pool_begin = pool_size;

  Engine app_rng(derive_seed(seed, 3));
  std::vector<AppRecord> apps;
  apps.reserve(config.n_apps);
  for (std::size_t i = 0; i < config.n_apps; ++i) {
    AppRecord r;
    const std::size_t d = app_dev[i];
    r.app_id = numbered("app-", i, 7);
    r.package_name = "com." + dev_names[d].substr(4) + ".app" + std::to_string(i);
    r.developer_id = dev_names[d];
    r.issuer_id = dev_issuer[d];

    const bool is_malware = bernoulli(app_rng, dev_malicious[d] ? rate_malicious : rate_benign);
    r.detection_count = is_malware ? pick_engines(app_rng) + 1 : 0;
    // Apps flagged by many engines look more typically malicious.
    const double intensity =
        is_malware ? std::min(1.0, 0.55 + 0.15 * std::log2(static_cast<double>(r.detection_count))) : 0.0;

    // Temporal group: one shared latent factor makes the columns redundant.
    const double latent = standard_normal(app_rng);
    auto lognormal = [&](double mu, double sigma, double shift) {
      const double z = 0.6 * latent + 0.8 * standard_normal(app_rng);
      return std::exp(mu + sigma * z + shift);
    };
    const double st = sig.temporal * intensity;
    r.age_in_market_days = to_count(lognormal(6.0, 0.9, -1.4 * st));
    r.last_signature_update_days = to_count(lognormal(5.5, 0.9, -1.2 * st));
    r.time_for_creation_days = to_count(lognormal(3.5, 1.0, 1.0 * st));
    r.last_update_days = to_count(lognormal(4.5, 1.0, -0.9 * st));
    // Malware often ships with the 30-year debug-keystore certificate: a spike
    // inside the goodware range that no monotone score can isolate.
    if (is_malware && bernoulli(app_rng, 0.5 * st)) {
      r.cert_validity_days = 10950 + uniform_index(app_rng, 2);
    } else {
      r.cert_validity_days = to_count(lognormal(9.0, 0.4, 0.0));
    }

    const double si = sig.intrinsic * intensity;
    auto noisy = [&](double mu, double sigma, double shift) {
      return std::exp(mu + sigma * standard_normal(app_rng) + shift);
    };
    r.size_bytes = to_count(noisy(15.0, 1.2, -0.6 * si));
    r.num_files = std::max<std::uint64_t>(1, to_count(noisy(4.5, 0.8, -0.5 * si)));
    r.num_images = std::min(r.num_files, to_count(noisy(3.5, 1.0, -0.4 * si)));
    r.version_code = std::max<std::uint64_t>(1, to_count(noisy(2.5, 1.2, -0.8 * si)));
    r.num_downloads = to_count(noisy(5.0, 2.0, 0.0));

    // Social group.
    const double ss = sig.social * intensity;
    const std::uint64_t votes =
        std::min<std::uint64_t>(2000, to_count(static_cast<double>(r.num_downloads) * noisy(-3.0, 0.6, -0.7 * ss)));
    std::array<double, 5> star_p{0.08, 0.05, 0.10, 0.25, 0.52};
    star_p[0] += 0.35 * ss;
    star_p[4] = std::max(0.05, star_p[4] - 0.25 * ss);
    const DiscreteSampler pick_star({star_p.begin(), star_p.end()});
    for (std::uint64_t v = 0; v < votes; ++v) ++r.star_votes[pick_star(app_rng)];

    // Permissions.
    for (std::size_t c = 0; c < n_common; ++c) {
      if (bernoulli(app_rng, kCommonPermissions[c].rate)) r.permissions.insert(kCommonPermissions[c].name);
    }
    if (!custom.empty()) {
      const std::size_t span = config.extra_permissions_max - config.extra_permissions_min + 1;
      const std::size_t extras =
          std::min(custom.size(), config.extra_permissions_min + static_cast<std::size_t>(uniform_index(app_rng, span)));
      const double lean = perm_strength * (is_malware ? intensity : 0.7);
      const std::size_t pool_begin = is_malware ? mal_pool_begin : good_pool_begin;
      std::size_t added = 0;
      while (added < extras) {
        const std::size_t idx = (pool_size > 0 && bernoulli(app_rng, lean))
                                    ? pool_begin + uniform_index(app_rng, pool_size)
                                    : uniform_index(app_rng, custom.size());
        if (r.permissions.insert(custom[idx]).second) ++added;
      }
    }
    apps.push_back(std::move(r));
  }
  return apps;
}

GeneratorConfig generator_preset(const std::string& name) {
  GeneratorConfig c;
  if (name == "default") return c;
  if (name == "strong") {
    c.signal_strengths = {.reputation = 1.0, .temporal = 1.0, .intrinsic = 0.5, .permissions = 0.5, .social = 0.5};
    c.malicious_developer_malware_rate = 0.95;
    return c;
  }
  if (name == "permissions") {
    c.signal_strengths = {.reputation = 0.0, .temporal = 0.0, .intrinsic = 0.0, .permissions = 1.0, .social = 0.0};
    return c;
  }
  if (name == "null") {
    c.signal_strengths = {.reputation = 0.0, .temporal = 0.0, .intrinsic = 0.0, .permissions = 0.0, .social = 0.0};
    return c;
  }
  throw DataError("unknown generator preset '" + name + "'");
}

std::vector<std::string> generator_preset_names() { return {"default", "strong", "permissions", "null"}; }

GeneratorConfig generator_config_from_json(const nlohmann::json& doc, GeneratorConfig c) {
  if (!doc.is_object()) throw DataError("generator config must be a JSON object");
  auto read = [&](const nlohmann::json& obj, const char* key, auto& field) {
    if (const auto it = obj.find(key); it != obj.end()) {
      try {
        it->get_to(field);
      } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("generator config field '") + key + "': " + e.what());
      }
    }
  };
  static const char* kKnown[] = {"n_apps",
                                 "n_developers",
                                 "n_issuers",
                                 "malware_developer_fraction",
                                 "malware_fraction",
                                 "malicious_developer_malware_rate",
                                 "self_signed_fraction",
                                 "permission_vocabulary_size",
                                 "extra_permissions_min",
                                 "extra_permissions_max",
                                 "signal_strengths",
                                 "engine_count_distribution"};
  for (const auto& item : doc.items()) {
    if (std::find_if(std::begin(kKnown), std::end(kKnown), [&](const char* k) { return item.key() == k; }) ==
        std::end(kKnown)) {
      throw DataError("unknown generator config field '" + item.key() + "'");
    }
  }
  read(doc, "n_apps", c.n_apps);
  read(doc, "n_developers", c.n_developers);
  read(doc, "n_issuers", c.n_issuers);
  read(doc, "malware_developer_fraction", c.malware_developer_fraction);
  read(doc, "malware_fraction", c.malware_fraction);
  read(doc, "malicious_developer_malware_rate", c.malicious_developer_malware_rate);
  read(doc, "self_signed_fraction", c.self_signed_fraction);
  read(doc, "permission_vocabulary_size", c.permission_vocabulary_size);
  read(doc, "extra_permissions_min", c.extra_permissions_min);
  read(doc, "extra_permissions_max", c.extra_permissions_max);
  if (const auto it = doc.find("signal_strengths"); it != doc.end()) {
    read(*it, "reputation", c.signal_strengths.reputation);
    read(*it, "temporal", c.signal_strengths.temporal);
    read(*it, "intrinsic", c.signal_strengths.intrinsic);
    read(*it, "permissions", c.signal_strengths.permissions);
    read(*it, "social", c.signal_strengths.social);
  }
  if (const auto it = doc.find("engine_count_distribution"); it != doc.end()) {
    read(*it, "exponent", c.engine_count_distribution.exponent);
    read(*it, "max_engines", c.engine_count_distribution.max_engines);
  }
  return c;
}

nlohmann::ordered_json to_json(const GeneratorConfig& c) {
  nlohmann::ordered_json j;
  j["n_apps"] = c.n_apps;
  j["n_developers"] = c.n_developers;
  j["n_issuers"] = c.n_issuers;
  j["malware_developer_fraction"] = c.malware_developer_fraction;
  j["malware_fraction"] = c.malware_fraction;
  j["malicious_developer_malware_rate"] = c.malicious_developer_malware_rate;
  j["self_signed_fraction"] = c.self_signed_fraction;
  j["permission_vocabulary_size"] = c.permission_vocabulary_size;
  j["extra_permissions_min"] = c.extra_permissions_min;
  j["extra_permissions_max"] = c.extra_permissions_max;
  j["signal_strengths"] = {{"reputation", c.signal_strengths.reputation},
                           {"temporal", c.signal_strengths.temporal},
                           {"intrinsic", c.signal_strengths.intrinsic},
                           {"permissions", c.signal_strengths.permissions},
                           {"social", c.signal_strengths.social}};
  j["engine_count_distribution"] = {{"exponent", c.engine_count_distribution.exponent},
                                    {"max_engines", c.engine_count_distribution.max_engines}};
  return j;
}

}  // namespace metatriage
