#pragma once

// App-metadata schema, ingestion, AV-count labelling, subset composition and
// the synthetic corpus generator.

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

namespace metatriage {

/// Raw metadata of one application. Temporal fields are day counts relative
/// to the corpus snapshot date.
struct AppRecord {
  std::string app_id;
  std::string package_name;
  std::string developer_id;
  std::string issuer_id;
  std::set<std::string> permissions;
  std::uint64_t size_bytes = 0;
  std::uint64_t num_files = 0;
  std::uint64_t num_images = 0;
  std::uint64_t version_code = 0;
  std::uint64_t age_in_market_days = 0;
  std::uint64_t last_update_days = 0;
  std::uint64_t last_signature_update_days = 0;
  std::uint64_t time_for_creation_days = 0;
  std::uint64_t cert_validity_days = 0;
  std::uint64_t num_downloads = 0;
  std::array<std::uint64_t, 5> star_votes{};  // 1..5 star counts
  std::uint64_t detection_count = 0;

  std::uint64_t total_votes() const;
  /// Mean star rating in [1,5]; 0 when the app has no votes.
  double mean_star() const;
  bool self_signed() const { return issuer_id == developer_id; }

  bool operator==(const AppRecord&) const = default;
};

nlohmann::ordered_json to_json(const AppRecord& record);

enum class Label { goodware, malware, ambiguous };

const char* to_string(Label label);

enum class AmbiguousHandling { exclude, goodware };

struct DetectionLabelPolicy {
  std::uint32_t threshold = 1;
  AmbiguousHandling ambiguous_handling = AmbiguousHandling::exclude;
};

/// malware iff detection_count >= threshold, goodware iff detection_count == 0,
/// ambiguous otherwise.
Label label_record(const AppRecord& record, const DetectionLabelPolicy& policy);

// ---------------------------------------------------------------------------
// Ingestion

enum class RecordFormat { jsonlines, csv };

struct RecordError {
  std::size_t line = 0;  // 1-based line number in the input
  std::string message;
};

struct ParseResult {
  std::vector<AppRecord> records;
  std::vector<RecordError> errors;
  std::size_t unknown_fields = 0;
};

struct ParseOptions {
  /// Record-level errors tolerated before parsing aborts with a DataError.
  std::size_t max_errors = 100;
};

/// Reads one record per line (JSON Lines) or row (CSV with header). Malformed
/// records are skipped and reported; duplicate app_id is fatal.
ParseResult parse_records(std::istream& input, RecordFormat format, const ParseOptions& options = {});

ParseResult load_records(const std::string& path, const ParseOptions& options = {});

/// JSON Lines serialisation, one object per record, field order fixed.
void write_records(std::ostream& out, const std::vector<AppRecord>& records);

/// CSV serialisation with a header row; permissions and star_votes are
/// ';'-separated within their fields.
void write_records_csv(std::ostream& out, const std::vector<AppRecord>& records);

RecordFormat format_from_path(const std::string& path);

// ---------------------------------------------------------------------------
// Composition

struct CompositionRecipe {
  double malware_fraction = 0.5;
  DetectionLabelPolicy policy;
  std::size_t target_size = 5000;
  std::uint64_t seed = 0;
};

/// Records plus binary labels (1 = malware) under a labelling policy.
struct LabeledDataset {
  std::vector<AppRecord> records;
  std::vector<int> labels;

  // Composition bookkeeping.
  std::size_t requested_size = 0;
  double requested_fraction = 0.0;
  bool shrunk = false;
  std::size_t n_malware() const;
  std::size_t size() const { return records.size(); }
};

/// Labels every admissible record of the corpus (ambiguous records are
/// dropped or treated as goodware according to the policy).
LabeledDataset label_corpus(const std::vector<AppRecord>& corpus, const DetectionLabelPolicy& policy);

/// Seeded sample without replacement at the requested malware fraction. When
/// one class is short the total shrinks so the fraction is preserved and the
/// dataset is flagged as shrunk.
LabeledDataset compose_subset(const std::vector<AppRecord>& corpus, const CompositionRecipe& recipe);

/// detection_count -> frequency over records with at least one detection.
std::map<std::uint64_t, std::size_t> detection_histogram(const std::vector<AppRecord>& corpus);

// ---------------------------------------------------------------------------
// Synthetic generator

/// Strength of the planted correlation between each feature group and the
/// malware label; 0 makes the group independent of the label.
struct SignalStrengths {
  double reputation = 1.0;
  double temporal = 0.8;
  double intrinsic = 0.3;
  double permissions = 0.5;
  double social = 0.3;
};

struct EngineCountDistribution {
  double exponent = 1.6;          // P(count = c) proportional to c^-exponent
  std::uint32_t max_engines = 53;
};

struct GeneratorConfig {
  std::size_t n_apps = 40000;
  std::size_t n_developers = 1000;
  std::size_t n_issuers = 60;
  double malware_developer_fraction = 0.5;
  double malware_fraction = 0.5;
  /// Malware rate of malicious developers at full reputation strength.
  double malicious_developer_malware_rate = 0.9;
  double self_signed_fraction = 0.5;
  std::size_t permission_vocabulary_size = 3000;
  std::size_t extra_permissions_min = 2;
  std::size_t extra_permissions_max = 12;
  SignalStrengths signal_strengths;
  EngineCountDistribution engine_count_distribution;
};

/// Named starting points: "default", "strong" (every group planted strongly),
/// "permissions" (only permissions carry signal) and "null" (no signal).
GeneratorConfig generator_preset(const std::string& name);
std::vector<std::string> generator_preset_names();

/// Fields present in doc override base; unknown fields are rejected.
GeneratorConfig generator_config_from_json(const nlohmann::json& doc, GeneratorConfig base = {});
nlohmann::ordered_json to_json(const GeneratorConfig& config);

/// Deterministic in (config, seed). Throws GenerationError on infeasible
/// configurations.
std::vector<AppRecord> generate_synthetic(const GeneratorConfig& config, std::uint64_t seed);

/// Digest of a corpus' canonical JSON Lines serialisation.
std::string corpus_digest(const std::vector<AppRecord>& corpus);

}  // namespace metatriage
