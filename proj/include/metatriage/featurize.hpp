#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "metatriage/corpus.hpp"

namespace metatriage {

struct HashConfig {
  std::size_t n_hashes = 512;
  std::uint64_t seed = 0;
  /// Signed accumulation (+1/-1 from an independent hash bit). Off by default:
  /// permissions are binary indicators.
  bool signed_hashing = false;
};

/// Each permission adds +1 (or +-1 when signed) at hash64(p, seed) mod n_hashes.
std::vector<double> hash_permissions(const std::set<std::string>& permissions, const HashConfig& config);

// ---------------------------------------------------------------------------
// Reputation

enum class EntityKind { developer, issuer };

const char* to_string(EntityKind kind);

struct EntityStats {
  std::uint64_t malware = 0;
  std::uint64_t total = 0;
};

/// Smoothed per-entity malware rate, (malware + alpha) / (total + 2 alpha).
class ReputationTable {
 public:
  ReputationTable() = default;
  ReputationTable(EntityKind kind, double alpha);

  EntityKind kind() const { return kind_; }
  double alpha() const { return alpha_; }
  double global_prior() const { return global_prior_; }
  /// True when built from no records (prior falls back to 0.5).
  bool empty_input() const { return empty_input_; }
  const std::map<std::string, EntityStats>& stats() const { return stats_; }
  /// app_ids of every record that contributed to the counts.
  const std::vector<std::string>& contributors() const { return contributors_; }

  /// Smoothed rate of a known entity; global_prior for unseen ones.
  double rate(const std::string& entity) const;

  void add(const std::string& entity, const std::string& app_id, bool malware);
  void finalize();

  nlohmann::ordered_json to_json() const;

 private:
  EntityKind kind_ = EntityKind::developer;
  double alpha_ = 1.0;
  double global_prior_ = 0.5;
  bool empty_input_ = true;
  std::map<std::string, EntityStats> stats_;
  std::vector<std::string> contributors_;
};

ReputationTable build_reputation_table(std::span<const AppRecord> records, std::span<const int> labels,
                                       EntityKind kind, double alpha = 1.0);

// ---------------------------------------------------------------------------
// Feature matrix

/// Dense row-major matrix with named columns and optional binary labels.
struct FeatureMatrix {
  std::vector<std::string> column_names;
  std::vector<double> values;
  std::size_t n_rows = 0;
  std::vector<int> labels;

  std::size_t n_cols() const { return column_names.size(); }
  double at(std::size_t row, std::size_t col) const { return values[row * n_cols() + col]; }
  double& at(std::size_t row, std::size_t col) { return values[row * n_cols() + col]; }
  std::span<const double> row(std::size_t r) const { return {values.data() + r * n_cols(), n_cols()}; }
  std::vector<double> column(std::size_t c) const;

  FeatureMatrix select_columns(std::span<const std::size_t> columns) const;
  FeatureMatrix select_rows(std::span<const std::size_t> rows) const;
  /// Index of a column by name; throws ContractError when absent.
  std::size_t column_index(const std::string& name) const;
};

/// Which column groups assemble_features emits.
struct FeatureGroups {
  bool hashes = true;
  bool intrinsic = true;
  bool social = true;
  bool reputation = true;
};

inline constexpr std::size_t kIntrinsicCount = 15;
inline constexpr std::size_t kSocialCount = 7;

const std::vector<std::string>& intrinsic_column_names();
const std::vector<std::string>& social_column_names();
inline const std::string kDeveloperRep = "developerRep";
inline const std::string kIssuerRep = "issuerRep";

/// Layout: [f0..f{n-1}, 15 intrinsic, 7 social, developerRep, issuerRep]
/// (groups switched off are skipped). Row i depends only on record i and the
/// frozen tables.
FeatureMatrix assemble_features(std::span<const AppRecord> records, const ReputationTable& developer_table,
                                const ReputationTable& issuer_table, const HashConfig& hash_config,
                                const FeatureGroups& groups = {});

std::vector<std::string> feature_column_names(const HashConfig& hash_config, const FeatureGroups& groups = {});

void write_feature_csv(std::ostream& out, const FeatureMatrix& matrix);

// ---------------------------------------------------------------------------
// Binning and standardisation

struct Binning {
  std::vector<int> bins;
  /// Upper (inclusive) edge of every bin but the last.
  std::vector<double> edges;
  bool degenerate = false;
};

/// Equal-frequency bins over the stable sort order; equal values always share
/// a bin. A constant column maps to bin 0 and is flagged degenerate.
Binning bin_column(std::span<const double> values, std::size_t n_bins);

/// Bin id of an out-of-sample value under previously fitted edges.
int apply_bin_edges(std::span<const double> edges, double value);

struct Standardization {
  std::vector<double> mean;
  std::vector<double> stddev;  // 1 for zero-variance columns

  void apply(FeatureMatrix& matrix) const;
};

Standardization fit_standardization(const FeatureMatrix& train);

struct StandardizedPair {
  FeatureMatrix train;
  FeatureMatrix test;
  Standardization params;
};

/// Parameters fitted on train only and applied to both matrices.
StandardizedPair standardize_fit_apply(const FeatureMatrix& train, const FeatureMatrix& test);

}  // namespace metatriage
