#include "metatriage/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include "metatriage/csv.hpp"
#include "metatriage/error.hpp"
#include "metatriage/hash.hpp"
#include "metatriage/rng.hpp"

namespace metatriage {

namespace {

using Json = nlohmann::json;

struct RecordInvalid {
  std::string message;
};

constexpr std::array<const char*, 17> kFieldNames = {
    "app_id",
    "package_name",
    "developer_id",
    "issuer_id",
    "permissions",
    "size_bytes",
    "num_files",
    "num_images",
    "version_code",
    "age_in_market_days",
    "last_update_days",
    "last_signature_update_days",
    "time_for_creation_days",
    "cert_validity_days",
    "num_downloads",
    "star_votes",
    "detection_count",
};

// Binds the integer-valued fields to their names in one place.
template <typename Record, typename Fn>
void for_each_count_field(Record& r, Fn&& fn) {
  fn("size_bytes", r.size_bytes);
  fn("num_files", r.num_files);
  fn("num_images", r.num_images);
  fn("version_code", r.version_code);
  fn("age_in_market_days", r.age_in_market_days);
  fn("last_update_days", r.last_update_days);
  fn("last_signature_update_days", r.last_signature_update_days);
  fn("time_for_creation_days", r.time_for_creation_days);
  fn("cert_validity_days", r.cert_validity_days);
  fn("num_downloads", r.num_downloads);
  fn("detection_count", r.detection_count);
}

bool is_known_field(std::string_view name) {
  return std::find(kFieldNames.begin(), kFieldNames.end(), name) != kFieldNames.end();
}

std::uint64_t json_count(const Json& obj, const char* name) {
  const auto it = obj.find(name);
  if (it == obj.end()) throw RecordInvalid{std::string("missing field '") + name + "'"};
  if (it->is_number_unsigned()) return it->get<std::uint64_t>();
  if (it->is_number_integer()) {
    const auto v = it->get<std::int64_t>();
    if (v < 0) throw RecordInvalid{std::string("field '") + name + "' must be non-negative"};
    return static_cast<std::uint64_t>(v);
  }
  throw RecordInvalid{std::string("field '") + name + "' must be a non-negative integer"};
}

std::string json_string(const Json& obj, const char* name) {
  const auto it = obj.find(name);
  if (it == obj.end()) throw RecordInvalid{std::string("missing field '") + name + "'"};
  if (!it->is_string()) throw RecordInvalid{std::string("field '") + name + "' must be a string"};
  return it->get<std::string>();
}

AppRecord record_from_json(const Json& obj, std::size_t& unknown_fields) {
  if (!obj.is_object()) throw RecordInvalid{"line is not a JSON object"};
  AppRecord r;
  r.app_id = json_string(obj, "app_id");
  if (r.app_id.empty()) throw RecordInvalid{"app_id must be non-empty"};
  r.package_name = json_string(obj, "package_name");
  r.developer_id = json_string(obj, "developer_id");
  r.issuer_id = json_string(obj, "issuer_id");

  const auto perms = obj.find("permissions");
  if (perms == obj.end()) throw RecordInvalid{"missing field 'permissions'"};
  if (!perms->is_array()) throw RecordInvalid{"field 'permissions' must be an array"};
  for (const auto& p : *perms) {
    if (!p.is_string()) throw RecordInvalid{"permissions must be strings"};
    r.permissions.insert(p.get<std::string>());
  }

  for_each_count_field(r, [&](const char* name, std::uint64_t& field) { field = json_count(obj, name); });

  const auto stars = obj.find("star_votes");
  if (stars == obj.end()) throw RecordInvalid{"missing field 'star_votes'"};
  if (!stars->is_array() || stars->size() != 5) throw RecordInvalid{"star_votes must hold five counts"};
  for (std::size_t i = 0; i < 5; ++i) {
    const auto& v = (*stars)[i];
    if (v.is_number_unsigned()) {
      r.star_votes[i] = v.get<std::uint64_t>();
    } else if (v.is_number_integer() && v.get<std::int64_t>() >= 0) {
      r.star_votes[i] = static_cast<std::uint64_t>(v.get<std::int64_t>());
    } else {
      throw RecordInvalid{"star_votes must be non-negative integers"};
    }
  }

  for (const auto& item : obj.items()) {
    if (!is_known_field(item.key())) ++unknown_fields;
  }
  return r;
}

std::uint64_t parse_count_text(std::string_view text, const char* name) {
  if (!text.empty() && text.front() == '-') throw RecordInvalid{std::string("field '") + name + "' must be non-negative"};
  std::uint64_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
    throw RecordInvalid{std::string("field '") + name + "' is not a non-negative integer"};
  }
  return value;
}

std::vector<std::string> split_semicolons(const std::string& text) {
  std::vector<std::string> parts;
  if (text.empty()) return parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(';', start);
    parts.push_back(text.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return parts;
}

class CsvRowReader {
 public:
  explicit CsvRowReader(const std::vector<std::string>& header) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (is_known_field(header[i])) {
        column_[header[i]] = i;
      } else {
        ++unknown_columns_;
      }
    }
    for (const char* name : kFieldNames) {
      if (!column_.count(name)) throw DataError(std::string("CSV header lacks required column '") + name + "'");
    }
    width_ = header.size();
  }

  std::size_t unknown_columns() const { return unknown_columns_; }

  AppRecord read(const std::vector<std::string>& row) const {
    if (row.size() != width_) {
      throw RecordInvalid{"expected " + std::to_string(width_) + " fields, found " + std::to_string(row.size())};
    }
    auto cell = [&](const char* name) -> const std::string& { return row[column_.at(name)]; };
    AppRecord r;
    r.app_id = cell("app_id");
    if (r.app_id.empty()) throw RecordInvalid{"app_id must be non-empty"};
    r.package_name = cell("package_name");
    r.developer_id = cell("developer_id");
    r.issuer_id = cell("issuer_id");
    for (auto& p : split_semicolons(cell("permissions"))) {
      if (!p.empty()) r.permissions.insert(std::move(p));
    }
    for_each_count_field(r, [&](const char* name, std::uint64_t& field) { field = parse_count_text(cell(name), name); });
    const auto stars = split_semicolons(cell("star_votes"));
    if (stars.size() != 5) throw RecordInvalid{"star_votes must hold five ';'-separated counts"};
    for (std::size_t i = 0; i < 5; ++i) r.star_votes[i] = parse_count_text(stars[i], "star_votes");
    return r;
  }

 private:
  std::map<std::string, std::size_t, std::less<>> column_;
  std::size_t width_ = 0;
  std::size_t unknown_columns_ = 0;
};

std::string join_semicolons(const auto& items) {
  std::string out;
  bool first = true;
  for (const auto& item : items) {
    if (!first) out += ';';
    first = false;
    if constexpr (std::is_arithmetic_v<std::decay_t<decltype(item)>>) {
      out += std::to_string(item);
    } else {
      out += item;
    }
  }
  return out;
}

}  // namespace

std::uint64_t AppRecord::total_votes() const {
  return std::accumulate(star_votes.begin(), star_votes.end(), std::uint64_t{0});
}

double AppRecord::mean_star() const {
  const auto total = total_votes();
  if (total == 0) return 0.0;
  double weighted = 0.0;
  for (std::size_t i = 0; i < 5; ++i) weighted += static_cast<double>(i + 1) * static_cast<double>(star_votes[i]);
  return weighted / static_cast<double>(total);
}

nlohmann::ordered_json to_json(const AppRecord& r) {
  nlohmann::ordered_json j;
  j["app_id"] = r.app_id;
  j["package_name"] = r.package_name;
  j["developer_id"] = r.developer_id;
  j["issuer_id"] = r.issuer_id;
  j["permissions"] = r.permissions;
  j["size_bytes"] = r.size_bytes;
  j["num_files"] = r.num_files;
  j["num_images"] = r.num_images;
  j["version_code"] = r.version_code;
  j["age_in_market_days"] = r.age_in_market_days;
  j["last_update_days"] = r.last_update_days;
  j["last_signature_update_days"] = r.last_signature_update_days;
  j["time_for_creation_days"] = r.time_for_creation_days;
  j["cert_validity_days"] = r.cert_validity_days;
  j["num_downloads"] = r.num_downloads;
  j["star_votes"] = r.star_votes;
  j["detection_count"] = r.detection_count;
  return j;
}

const char* to_string(Label label) {
  switch (label) {
    case Label::goodware: return "goodware";
    case Label::malware: return "malware";
    case Label::ambiguous: return "ambiguous";
  }
  return "?";
}

Label label_record(const AppRecord& record, const DetectionLabelPolicy& policy) {
  if (record.detection_count == 0) return Label::goodware;
  if (record.detection_count >= policy.threshold) return Label::malware;
  return Label::ambiguous;
}

ParseResult parse_records(std::istream& input, RecordFormat format, const ParseOptions& options) {
  ParseResult result;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;

  auto record_error = [&](std::size_t at, std::string message) {
    result.errors.push_back({at, std::move(message)});
    if (result.errors.size() > options.max_errors) {
      throw DataError("too many malformed records (" + std::to_string(result.errors.size()) +
                      "); last at line " + std::to_string(at) + ": " + result.errors.back().message);
    }
  };
  auto accept = [&](AppRecord&& r) {
    if (!seen.insert(r.app_id).second) throw DataError("duplicate app_id '" + r.app_id + "'");
    result.records.push_back(std::move(r));
  };

  if (format == RecordFormat::jsonlines) {
    while (std::getline(input, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      Json obj;
      try {
        obj = Json::parse(line);
      } catch (const Json::parse_error& e) {
        record_error(line_no, std::string("invalid JSON: ") + e.what());
        continue;
      }
      try {
        accept(record_from_json(obj, result.unknown_fields));
      } catch (const RecordInvalid& e) {
        record_error(line_no, e.message);
      }
    }
    return result;
  }

  std::vector<std::string> fields;
  std::optional<CsvRowReader> reader;
  while (std::getline(input, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (!csv::split_line(line, fields)) {
      if (!reader) throw DataError("unterminated quote in CSV header");
      record_error(line_no, "unterminated quote");
      continue;
    }
    if (!reader) {
      reader.emplace(fields);
      continue;
    }
    try {
      accept(reader->read(fields));
      result.unknown_fields += reader->unknown_columns();
    } catch (const RecordInvalid& e) {
      record_error(line_no, e.message);
    }
  }
  return result;
}

RecordFormat format_from_path(const std::string& path) {
  auto ends_with = [&](std::string_view suffix) {
    return path.size() >= suffix.size() && path.compare(path.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  return ends_with(".csv") ? RecordFormat::csv : RecordFormat::jsonlines;
}

ParseResult load_records(const std::string& path, const ParseOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus '" + path + "'");
  return parse_records(in, format_from_path(path), options);
}

void write_records(std::ostream& out, const std::vector<AppRecord>& records) {
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

void write_records_csv(std::ostream& out, const std::vector<AppRecord>& records) {
  for (std::size_t i = 0; i < kFieldNames.size(); ++i) out << (i ? "," : "") << kFieldNames[i];
  out << '\n';
  for (const auto& r : records) {
    out << csv::escape(r.app_id) << ',' << csv::escape(r.package_name) << ',' << csv::escape(r.developer_id) << ','
        << csv::escape(r.issuer_id) << ',' << csv::escape(join_semicolons(r.permissions)) << ',' << r.size_bytes << ','
        << r.num_files << ',' << r.num_images << ',' << r.version_code << ',' << r.age_in_market_days << ','
        << r.last_update_days << ',' << r.last_signature_update_days << ',' << r.time_for_creation_days << ','
        << r.cert_validity_days << ',' << r.num_downloads << ',' << join_semicolons(r.star_votes) << ','
        << r.detection_count << '\n';
  }
}

std::size_t LabeledDataset::n_malware() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

LabeledDataset label_corpus(const std::vector<AppRecord>& corpus, const DetectionLabelPolicy& policy) {
  LabeledDataset ds;
  for (const auto& r : corpus) {
    const Label label = label_record(r, policy);
    if (label == Label::ambiguous && policy.ambiguous_handling == AmbiguousHandling::exclude) continue;
    ds.records.push_back(r);
    ds.labels.push_back(label == Label::malware ? 1 : 0);
  }
  ds.requested_size = ds.records.size();
  ds.requested_fraction = ds.records.empty() ? 0.0 : static_cast<double>(ds.n_malware()) / ds.records.size();
  return ds;
}

LabeledDataset compose_subset(const std::vector<AppRecord>& corpus, const CompositionRecipe& recipe) {
  if (!(recipe.malware_fraction > 0.0 && recipe.malware_fraction < 1.0)) {
    throw CompositionError("malware_fraction must lie in (0,1)");
  }
  if (recipe.target_size < 2) throw CompositionError("target_size must be at least 2");
  if (recipe.policy.threshold == 0) throw CompositionError("detection threshold must be positive");

  std::vector<std::size_t> malware, goodware;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    switch (label_record(corpus[i], recipe.policy)) {
      case Label::malware: malware.push_back(i); break;
      case Label::goodware: goodware.push_back(i); break;
      case Label::ambiguous:
        if (recipe.policy.ambiguous_handling == AmbiguousHandling::goodware) goodware.push_back(i);
        break;
    }
  }
  if (malware.empty()) {
    throw CompositionError("no malware available at threshold " + std::to_string(recipe.policy.threshold));
  }
  if (goodware.empty()) throw CompositionError("no goodware available");

  const double f = recipe.malware_fraction;
  std::size_t total = recipe.target_size;
  auto n_mal_for = [&](std::size_t t) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(f * static_cast<double>(t))));
  };
  bool shrunk = false;
  if (n_mal_for(total) > malware.size()) {
    total = static_cast<std::size_t>(std::floor(static_cast<double>(malware.size()) / f));
    shrunk = true;
  }
  if (total - std::min(total, n_mal_for(total)) > goodware.size()) {
    total = static_cast<std::size_t>(std::floor(static_cast<double>(goodware.size()) / (1.0 - f)));
    shrunk = true;
  }
  // Rounding may still overshoot by one in either class.
  while (total > 0 && (n_mal_for(total) > malware.size() || total - n_mal_for(total) > goodware.size())) --total;
  const std::size_t n_mal = n_mal_for(total);
  if (total <= n_mal) throw CompositionError("subset too small to contain goodware");
  const std::size_t n_good = total - n_mal;

  Engine rng(derive_seed(recipe.seed, 0x636f6d706f7365ULL));
  shuffle(std::span(malware), rng);
  shuffle(std::span(goodware), rng);
  malware.resize(n_mal);
  goodware.resize(n_good);

  // Interleave by corpus order so record order is reproducible and neutral.
  std::vector<std::pair<std::size_t, int>> picked;
  picked.reserve(total);
  for (auto i : malware) picked.emplace_back(i, 1);
  for (auto i : goodware) picked.emplace_back(i, 0);
  std::sort(picked.begin(), picked.end());

  LabeledDataset ds;
  ds.records.reserve(total);
  ds.labels.reserve(total);
  for (const auto& [i, y] : picked) {
    ds.records.push_back(corpus[i]);
    ds.labels.push_back(y);
  }
  ds.requested_size = recipe.target_size;
  ds.requested_fraction = f;
  ds.shrunk = shrunk;
  return ds;
}

std::map<std::uint64_t, std::size_t> detection_histogram(const std::vector<AppRecord>& corpus) {
  std::map<std::uint64_t, std::size_t> hist;
  for (const auto& r : corpus) {
    if (r.detection_count >= 1) ++hist[r.detection_count];
  }
  return hist;
}

std::string corpus_digest(const std::vector<AppRecord>& corpus) {
  std::uint64_t h = 0;
  for (const auto& r : corpus) h = hash64(to_json(r).dump(), h);
  return to_hex(h);
}

}  // namespace metatriage
