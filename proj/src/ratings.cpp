#include "evicon/ratings.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "evicon/error.hpp"
#include "evicon/rng.hpp"

namespace evicon::ratings {

std::array<Demographics, kDemographicCells> all_demographics() {
  std::array<Demographics, kDemographicCells> out;
  std::size_t i = 0;
  for (AgeLevel a : {AgeLevel::teenager, AgeLevel::adult, AgeLevel::elder}) {
    for (Occupation o : {Occupation::technology, Occupation::business, Occupation::other}) out[i++] = {a, o};
  }
  return out;
}

std::string to_string(AgeLevel a) {
  switch (a) {
    case AgeLevel::teenager: return "teenager";
    case AgeLevel::adult: return "adult";
    case AgeLevel::elder: return "elder";
  }
  return "adult";
}

std::string to_string(Occupation o) {
  switch (o) {
    case Occupation::technology: return "technology";
    case Occupation::business: return "business";
    case Occupation::other: return "other";
  }
  return "other";
}

std::string to_string(const Demographics& d) { return to_string(d.age_level) + "/" + to_string(d.occupation); }

AgeLevel parse_age_level(const std::string& s) {
  if (s == "teenager") return AgeLevel::teenager;
  if (s == "adult") return AgeLevel::adult;
  if (s == "elder") return AgeLevel::elder;
  throw Error("invalid_demographics", "unknown age level '" + s + "'");
}

Occupation parse_occupation(const std::string& s) {
  if (s == "technology") return Occupation::technology;
  if (s == "business") return Occupation::business;
  if (s == "other") return Occupation::other;
  throw Error("invalid_demographics", "unknown occupation '" + s + "'");
}

AgeLevel age_level_from_years(int years) {
  if (years > 50) return AgeLevel::elder;
  if (years < 20) return AgeLevel::teenager;
  return AgeLevel::adult;
}

nlohmann::json to_json(const Demographics& d) {
  return {{"age_level", to_string(d.age_level)}, {"occupation", to_string(d.occupation)}};
}

Demographics demographics_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("age_level") || !j.contains("occupation") ||
      !j["age_level"].is_string() || !j["occupation"].is_string()) {
    throw Error("invalid_demographics", "demographics need string 'age_level' and 'occupation'");
  }
  return {parse_age_level(j["age_level"].get<std::string>()), parse_occupation(j["occupation"].get<std::string>())};
}

namespace {

bool in_range(int v) { return v >= kMinLevel && v <= kMaxLevel; }

constexpr std::array<std::string_view, kLevels> kLabels = {"Very Bad", "Bad", "Neutral", "Good", "Very Good"};

}  // namespace

void validate(const RatingRecord& r) {
  if (!in_range(r.semantic_distance) || !in_range(r.familiarity) || !in_range(r.tag_familiarity)) {
    throw Error("invalid_record", "rating outside 1..5 for icon '" + r.icon_id + "'");
  }
}

std::string_view RatingLevel::label() const {
  if (!in_range(value)) throw Error("invalid_level", "level outside 1..5");
  return kLabels[static_cast<std::size_t>(value - 1)];
}

RatingLevel RatingLevel::from_label(std::string_view label) {
  for (std::size_t i = 0; i < kLabels.size(); ++i) {
    if (kLabels[i] == label) return {static_cast<int>(i) + 1};
  }
  throw Error("invalid_level", "unknown level label '" + std::string(label) + "'");
}

namespace {

nlohmann::json optional_json(const std::optional<int>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

std::optional<int> optional_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  if (!j[key].is_number_integer()) throw Error("malformed_submission", std::string(key) + " must be an integer");
  return j[key].get<int>();
}

}  // namespace

nlohmann::json to_json(const WorkerSubmission& s) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : s.records) {
    records.push_back({{"tag", r.tag},
                       {"icon_id", r.icon_id},
                       {"semantic_distance", optional_json(r.semantic_distance)},
                       {"familiarity", optional_json(r.familiarity)},
                       {"tag_familiarity", optional_json(r.tag_familiarity)},
                       {"sanity_repeat", r.sanity_repeat}});
  }
  return {{"worker_id", s.worker_id},
          {"reported_age", s.reported_age},
          {"demographics", to_json(s.demographics)},
          {"records", std::move(records)}};
}

WorkerSubmission submission_from_json(const nlohmann::json& j) {
  try {
    WorkerSubmission s;
    s.worker_id = j.at("worker_id").get<std::string>();
    s.reported_age = j.at("reported_age").get<int>();
    s.demographics = demographics_from_json(j.at("demographics"));
    for (const auto& r : j.at("records")) {
      SubmittedRating rec;
      rec.tag = r.at("tag").get<std::string>();
      rec.icon_id = r.at("icon_id").get<std::string>();
      rec.semantic_distance = optional_from(r, "semantic_distance");
      rec.familiarity = optional_from(r, "familiarity");
      rec.tag_familiarity = optional_from(r, "tag_familiarity");
      rec.sanity_repeat = r.value("sanity_repeat", false);
      s.records.push_back(std::move(rec));
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error("malformed_submission", e.what());
  }
}

ValidationResult validate_worker(const WorkerSubmission& submission) {
  // Structural checks first: these are parse errors, not rejections.
  std::map<std::string, std::vector<const SubmittedRating*>> blocks;
  for (const auto& r : submission.records) {
    for (const auto& v : {r.semantic_distance, r.familiarity, r.tag_familiarity}) {
      if (v && !in_range(*v)) {
        throw Error("malformed_submission", "worker " + submission.worker_id + ": rating outside 1..5");
      }
    }
    blocks[r.tag].push_back(&r);
  }
  if (blocks.empty()) throw Error("malformed_submission", "worker " + submission.worker_id + ": no records");

  std::vector<std::pair<const SubmittedRating*, const SubmittedRating*>> sanity_pairs;
  for (const auto& [tag, block] : blocks) {
    const SubmittedRating* repeat = nullptr;
    for (const auto* r : block) {
      if (!r->sanity_repeat) continue;
      if (repeat) throw Error("malformed_submission", "tag block '" + tag + "' has more than one sanity repeat");
      repeat = r;
    }
    if (!repeat) throw Error("malformed_submission", "tag block '" + tag + "' has no sanity repeat");
    const auto original = std::find_if(block.begin(), block.end(), [&](const SubmittedRating* r) {
      return !r->sanity_repeat && r->icon_id == repeat->icon_id;
    });
    if (original == block.end()) {
      throw Error("malformed_submission", "sanity repeat of '" + repeat->icon_id + "' has no original");
    }
    sanity_pairs.emplace_back(*original, repeat);
  }

  if (submission.reported_age < kMinimumAge) return Rejection{std::string(kReasonAge)};

  for (const auto& r : submission.records) {
    if (!r.semantic_distance || !r.familiarity || !r.tag_familiarity) {
      return Rejection{std::string(kReasonUnrated)};
    }
  }

  for (const auto& [a, b] : sanity_pairs) {
    if (std::abs(*a->semantic_distance - *b->semantic_distance) > kSanityTolerance ||
        std::abs(*a->familiarity - *b->familiarity) > kSanityTolerance) {
      return Rejection{std::string(kReasonContradictory)};
    }
  }

  const int first = *submission.records.front().semantic_distance;
  const bool uniform = std::all_of(submission.records.begin(), submission.records.end(),
                                   [&](const SubmittedRating& r) {
                                     return *r.semantic_distance == first && *r.familiarity == first;
                                   });
  if (uniform) return Rejection{std::string(kReasonUniform)};

  std::vector<RatingRecord> accepted;
  for (const auto& r : submission.records) {
    if (r.sanity_repeat) continue;
    accepted.push_back({submission.worker_id, submission.demographics, r.tag, r.icon_id, *r.semantic_distance,
                        *r.familiarity, *r.tag_familiarity});
  }
  return accepted;
}

RatingLevel aggregate_mode(const std::vector<int>& ratings) {
  if (ratings.empty()) throw Error("invalid_argument", "aggregate_mode: empty rating list");
  std::array<std::size_t, kLevels> counts{};
  for (int r : ratings) {
    if (!in_range(r)) throw Error("invalid_argument", "aggregate_mode: rating outside 1..5");
    ++counts[static_cast<std::size_t>(r - 1)];
  }
  // max_element returns the first maximum, i.e. the lowest tied level.
  const auto best = std::max_element(counts.begin(), counts.end());
  return {static_cast<int>(best - counts.begin()) + 1};
}

RatingDistribution rating_distribution(const std::vector<RatingRecord>& records, const std::string& tag) {
  RatingDistribution d;
  for (const auto& r : records) {
    if (r.tag != tag) continue;
    validate(r);
    d.semantic_distance[static_cast<std::size_t>(r.semantic_distance - 1)] += 1.0;
    d.familiarity[static_cast<std::size_t>(r.familiarity - 1)] += 1.0;
    d.tag_familiarity[static_cast<std::size_t>(r.tag_familiarity - 1)] += 1.0;
    ++d.count;
  }
  if (d.count == 0) throw Error("unknown_tag", "no ratings for tag '" + tag + "'");
  for (auto* v : {&d.semantic_distance, &d.familiarity, &d.tag_familiarity}) {
    for (double& x : *v) x /= static_cast<double>(d.count);
  }
  return d;
}

TagSplit split_tags(std::vector<std::string> tags, std::size_t unseen_count, std::uint64_t seed) {
  if (unseen_count >= tags.size()) {
    throw Error("invalid_argument", "split_tags: unseen_count must be smaller than the tag count");
  }
  Rng rng(seed);
  rng.shuffle(tags);
  TagSplit out;
  out.unseen.assign(tags.begin(), tags.begin() + static_cast<std::ptrdiff_t>(unseen_count));
  out.seen.assign(tags.begin() + static_cast<std::ptrdiff_t>(unseen_count), tags.end());
  return out;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else if (c != '\r') {
      fields.back() += c;
    }
  }
  if (quoted) throw Error("invalid_csv", "line " + std::to_string(line_no) + ": unterminated quote");
  return fields;
}

int parse_level(const std::string& s, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error("invalid_csv", "line " + std::to_string(line_no) + ": '" + s + "' is not an integer");
}

}  // namespace

void write_csv(std::ostream& out, const std::vector<RatingRecord>& records) {
  out << kCsvHeader << '\n';
  for (const auto& r : records) {
    out << csv_field(r.worker_id) << ',' << to_string(r.demographics.age_level) << ','
        << to_string(r.demographics.occupation) << ',' << csv_field(r.tag) << ',' << csv_field(r.icon_id) << ','
        << r.semantic_distance << ',' << r.familiarity << ',' << r.tag_familiarity << '\n';
  }
}

void write_csv(const std::filesystem::path& path, const std::vector<RatingRecord>& records) {
  std::ofstream out(path);
  if (!out) throw Error("io_error", "cannot write " + path.string());
  write_csv(out, records);
}

std::vector<RatingRecord> read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error("invalid_csv", "missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader) throw Error("invalid_csv", "unexpected header: " + line);
  std::vector<RatingRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line, line_no);
    if (f.size() != 8) throw Error("invalid_csv", "line " + std::to_string(line_no) + ": expected 8 fields");
    RatingRecord r{f[0],
                   {parse_age_level(f[1]), parse_occupation(f[2])},
                   f[3],
                   f[4],
                   parse_level(f[5], line_no),
                   parse_level(f[6], line_no),
                   parse_level(f[7], line_no)};
    validate(r);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<RatingRecord> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("io_error", "cannot open " + path.string());
  return read_csv(in);
}

}  // namespace evicon::ratings
