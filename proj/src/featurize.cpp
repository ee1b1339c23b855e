#include "metatriage/featurize.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "metatriage/csv.hpp"
#include "metatriage/error.hpp"
#include "metatriage/hash.hpp"
#include "metatriage/parallel.hpp"

namespace metatriage {

std::vector<double> hash_permissions(const std::set<std::string>& permissions, const HashConfig& config) {
  if (config.n_hashes == 0) throw ContractError("n_hashes must be positive");
  std::vector<double> out(config.n_hashes, 0.0);
  for (const auto& p : permissions) {
    const std::uint64_t h = hash64(p, config.seed);
    const double sign = (config.signed_hashing && (h >> 63)) ? -1.0 : 1.0;
    out[h % config.n_hashes] += sign;
  }
  return out;
}

const char* to_string(EntityKind kind) { return kind == EntityKind::developer ? "developer" : "issuer"; }

ReputationTable::ReputationTable(EntityKind kind, double alpha) : kind_(kind), alpha_(alpha) {
  if (!(alpha >= 0.0)) throw ContractError("reputation smoothing alpha must be non-negative");
}

void ReputationTable::add(const std::string& entity, const std::string& app_id, bool malware) {
  auto& s = stats_[entity];
  ++s.total;
  if (malware) ++s.malware;
  contributors_.push_back(app_id);
}

void ReputationTable::finalize() {
  std::uint64_t malware = 0, total = 0;
  for (const auto& [_, s] : stats_) {
    malware += s.malware;
    total += s.total;
  }
  empty_input_ = total == 0;
  const double denom = static_cast<double>(total) + 2.0 * alpha_;
  global_prior_ = (empty_input_ || denom == 0.0) ? 0.5 : (static_cast<double>(malware) + alpha_) / denom;
}

double ReputationTable::rate(const std::string& entity) const {
  const auto it = stats_.find(entity);
  if (it == stats_.end()) return global_prior_;
  const auto& s = it->second;
  return (static_cast<double>(s.malware) + alpha_) / (static_cast<double>(s.total) + 2.0 * alpha_);
}

nlohmann::ordered_json ReputationTable::to_json() const {
  nlohmann::ordered_json j;
  j["entity_kind"] = to_string(kind_);
  j["smoothing_alpha"] = alpha_;
  j["global_prior"] = global_prior_;
  j["empty_input"] = empty_input_;
  auto& entities = j["stats"];
  entities = nlohmann::ordered_json::object();
  for (const auto& [id, s] : stats_) {
    entities[id] = {{"malware_count", s.malware}, {"total_count", s.total}, {"rate", rate(id)}};
  }
  return j;
}

ReputationTable build_reputation_table(std::span<const AppRecord> records, std::span<const int> labels,
                                       EntityKind kind, double alpha) {
  if (records.size() != labels.size()) throw ContractError("records and labels differ in length");
  ReputationTable table(kind, alpha);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    table.add(kind == EntityKind::developer ? r.developer_id : r.issuer_id, r.app_id, labels[i] == 1);
  }
  table.finalize();
  return table;
}

// ---------------------------------------------------------------------------

std::vector<double> FeatureMatrix::column(std::size_t c) const {
  std::vector<double> out(n_rows);
  for (std::size_t r = 0; r < n_rows; ++r) out[r] = at(r, c);
  return out;
}

FeatureMatrix FeatureMatrix::select_columns(std::span<const std::size_t> columns) const {
  FeatureMatrix out;
  out.n_rows = n_rows;
  out.labels = labels;
  for (auto c : columns) {
    if (c >= n_cols()) throw ContractError("column index out of range");
    out.column_names.push_back(column_names[c]);
  }
  out.values.resize(n_rows * columns.size());
  for (std::size_t r = 0; r < n_rows; ++r) {
    for (std::size_t k = 0; k < columns.size(); ++k) out.values[r * columns.size() + k] = at(r, columns[k]);
  }
  return out;
}

FeatureMatrix FeatureMatrix::select_rows(std::span<const std::size_t> rows) const {
  FeatureMatrix out;
  out.column_names = column_names;
  out.n_rows = rows.size();
  out.values.reserve(rows.size() * n_cols());
  for (auto r : rows) {
    if (r >= n_rows) throw ContractError("row index out of range");
    const auto src = row(r);
    out.values.insert(out.values.end(), src.begin(), src.end());
    if (!labels.empty()) out.labels.push_back(labels[r]);
  }
  return out;
}

std::size_t FeatureMatrix::column_index(const std::string& name) const {
  const auto it = std::find(column_names.begin(), column_names.end(), name);
  if (it == column_names.end()) throw ContractError("no feature column named '" + name + "'");
  return static_cast<std::size_t>(it - column_names.begin());
}

const std::vector<std::string>& intrinsic_column_names() {
  static const std::vector<std::string> names = {
      "size",        "numFiles",        "numImages",         "versionCode",         "ageInMarket",
      "lastUpdate",  "lastSignatureUpdate", "timeForCreation", "certVal",            "numDownloads",
      "numPerm",     "filesPerMb",      "imagesPerFile",     "permsPerFile",        "selfSigned",
  };
  return names;
}

const std::vector<std::string>& social_column_names() {
  static const std::vector<std::string> names = {
      "oneStarRatingCount", "twoStarRatingCount", "threeStarRatingCount", "fourStarRatingCount",
      "fiveStarRatingCount", "totalVotes",        "meanStar",
  };
  return names;
}

std::vector<std::string> feature_column_names(const HashConfig& hash_config, const FeatureGroups& groups) {
  std::vector<std::string> names;
  if (groups.hashes) {
    for (std::size_t i = 0; i < hash_config.n_hashes; ++i) names.push_back("f" + std::to_string(i));
  }
  if (groups.intrinsic) names.insert(names.end(), intrinsic_column_names().begin(), intrinsic_column_names().end());
  if (groups.social) names.insert(names.end(), social_column_names().begin(), social_column_names().end());
  if (groups.reputation) {
    names.push_back(kDeveloperRep);
    names.push_back(kIssuerRep);
  }
  return names;
}

namespace {

void write_intrinsic(const AppRecord& r, double* out) {
  const auto d = [](std::uint64_t v) { return static_cast<double>(v); };
  const double size_mb = d(r.size_bytes) / (1024.0 * 1024.0);
  const double perms = d(r.permissions.size());
  out[0] = d(r.size_bytes);
  out[1] = d(r.num_files);
  out[2] = d(r.num_images);
  out[3] = d(r.version_code);
  out[4] = d(r.age_in_market_days);
  out[5] = d(r.last_update_days);
  out[6] = d(r.last_signature_update_days);
  out[7] = d(r.time_for_creation_days);
  out[8] = d(r.cert_validity_days);
  out[9] = d(r.num_downloads);
  out[10] = perms;
  out[11] = size_mb > 0.0 ? d(r.num_files) / size_mb : 0.0;
  out[12] = r.num_files > 0 ? d(r.num_images) / d(r.num_files) : 0.0;
  out[13] = r.num_files > 0 ? perms / d(r.num_files) : 0.0;
  out[14] = r.self_signed() ? 1.0 : 0.0;
}

void write_social(const AppRecord& r, double* out) {
  for (std::size_t i = 0; i < 5; ++i) out[i] = static_cast<double>(r.star_votes[i]);
  out[5] = static_cast<double>(r.total_votes());
  out[6] = r.mean_star();
}

}  // namespace

FeatureMatrix assemble_features(std::span<const AppRecord> records, const ReputationTable& developer_table,
                                const ReputationTable& issuer_table, const HashConfig& hash_config,
                                const FeatureGroups& groups) {
  FeatureMatrix m;
  m.column_names = feature_column_names(hash_config, groups);
  m.n_rows = records.size();
  const std::size_t width = m.column_names.size();
  m.values.assign(m.n_rows * width, 0.0);

  constexpr std::size_t kChunk = 256;
  const std::size_t n_chunks = (records.size() + kChunk - 1) / kChunk;
  parallel_for(n_chunks, [&](std::size_t chunk) {
    const std::size_t end = std::min(records.size(), (chunk + 1) * kChunk);
    for (std::size_t i = chunk * kChunk; i < end; ++i) {
      const auto& r = records[i];
      double* out = m.values.data() + i * width;
      if (groups.hashes) {
        const auto hashed = hash_permissions(r.permissions, hash_config);
        std::copy(hashed.begin(), hashed.end(), out);
        out += hashed.size();
      }
      if (groups.intrinsic) {
        write_intrinsic(r, out);
        out += kIntrinsicCount;
      }
      if (groups.social) {
        write_social(r, out);
        out += kSocialCount;
      }
      if (groups.reputation) {
        out[0] = developer_table.rate(r.developer_id);
        out[1] = issuer_table.rate(r.issuer_id);
      }
    }
  });
  return m;
}

void write_feature_csv(std::ostream& out, const FeatureMatrix& matrix) {
  for (std::size_t c = 0; c < matrix.n_cols(); ++c) out << (c ? "," : "") << csv::escape(matrix.column_names[c]);
  if (!matrix.labels.empty()) out << ",label";
  out << '\n';
  for (std::size_t r = 0; r < matrix.n_rows; ++r) {
    for (std::size_t c = 0; c < matrix.n_cols(); ++c) out << (c ? "," : "") << csv::format_number(matrix.at(r, c), 9);
    if (!matrix.labels.empty()) out << ',' << matrix.labels[r];
    out << '\n';
  }
}

// ---------------------------------------------------------------------------

Binning bin_column(std::span<const double> values, std::size_t n_bins) {
  if (n_bins < 2) throw ContractError("bin_column needs at least 2 bins");
  Binning result;
  const std::size_t n = values.size();
  result.bins.assign(n, 0);
  if (n == 0) {
    result.degenerate = true;
    return result;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

  // A run of equal values takes the bin of its first rank.
  std::vector<double> bin_max(n_bins, 0.0);
  std::vector<char> bin_used(n_bins, 0);
  std::size_t rank = 0;
  while (rank < n) {
    std::size_t end = rank;
    while (end < n && values[order[end]] == values[order[rank]]) ++end;
    const auto bin = static_cast<int>((rank * n_bins) / n);
    for (std::size_t k = rank; k < end; ++k) result.bins[order[k]] = bin;
    bin_max[bin] = values[order[rank]];
    bin_used[bin] = 1;
    rank = end;
  }
  // Edges: every bin's upper value, carried forward across empty bins.
  double last = values[order.front()];
  for (std::size_t b = 0; b + 1 < n_bins; ++b) {
    if (bin_used[b]) last = bin_max[b];
    result.edges.push_back(last);
  }
  result.degenerate = std::count(bin_used.begin(), bin_used.end(), 1) <= 1;
  return result;
}

int apply_bin_edges(std::span<const double> edges, double value) {
  const auto it = std::lower_bound(edges.begin(), edges.end(), value);
  return static_cast<int>(it - edges.begin());
}

void Standardization::apply(FeatureMatrix& matrix) const {
  if (mean.size() != matrix.n_cols()) throw ContractError("standardization width mismatch");
  const std::size_t w = matrix.n_cols();
  for (std::size_t r = 0; r < matrix.n_rows; ++r) {
    double* row = matrix.values.data() + r * w;
    for (std::size_t c = 0; c < w; ++c) row[c] = (row[c] - mean[c]) / stddev[c];
  }
}

Standardization fit_standardization(const FeatureMatrix& train) {
  if (train.n_rows == 0) throw ContractError("cannot fit standardization on an empty matrix");
  const std::size_t w = train.n_cols();
  Standardization s;
  s.mean.assign(w, 0.0);
  s.stddev.assign(w, 0.0);
  for (std::size_t r = 0; r < train.n_rows; ++r) {
    for (std::size_t c = 0; c < w; ++c) s.mean[c] += train.at(r, c);
  }
  for (auto& m : s.mean) m /= static_cast<double>(train.n_rows);
  for (std::size_t r = 0; r < train.n_rows; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const double d = train.at(r, c) - s.mean[c];
      s.stddev[c] += d * d;
    }
  }
  for (std::size_t c = 0; c < w; ++c) {
    const double sd = std::sqrt(s.stddev[c] / static_cast<double>(train.n_rows));
    s.stddev[c] = (sd > 1e-12 * std::max(1.0, std::abs(s.mean[c]))) ? sd : 1.0;
  }
  return s;
}

StandardizedPair standardize_fit_apply(const FeatureMatrix& train, const FeatureMatrix& test) {
  StandardizedPair out{train, test, fit_standardization(train)};
  out.params.apply(out.train);
  out.params.apply(out.test);
  return out;
}

}  // namespace metatriage
