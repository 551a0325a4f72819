#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

namespace evicon::ratings {

enum class AgeLevel { teenager, adult, elder };
enum class Occupation { technology, business, other };

struct Demographics {
  AgeLevel age_level = AgeLevel::adult;
  Occupation occupation = Occupation::other;

  friend bool operator==(const Demographics&, const Demographics&) = default;
};

inline constexpr std::size_t kDemographicCells = 9;

/// All nine cells, age-major: (teenager, technology), (teenager, business), ...
std::array<Demographics, kDemographicCells> all_demographics();

std::string to_string(AgeLevel a);
std::string to_string(Occupation o);
/// "elder/other" style key used in JSON maps.
std::string to_string(const Demographics& d);
AgeLevel parse_age_level(const std::string& s);
Occupation parse_occupation(const std::string& s);
/// elder: > 50 years, teenager: < 20 years, adult otherwise.
AgeLevel age_level_from_years(int years);

nlohmann::json to_json(const Demographics& d);
Demographics demographics_from_json(const nlohmann::json& j);

inline constexpr int kMinLevel = 1;
inline constexpr int kMaxLevel = 5;
inline constexpr std::size_t kLevels = 5;

struct RatingRecord {
  std::string worker_id;
  Demographics demographics;
  std::string tag;
  std::string icon_id;
  int semantic_distance = 3;
  int familiarity = 3;
  int tag_familiarity = 3;

  friend bool operator==(const RatingRecord&, const RatingRecord&) = default;
};

/// Throws evicon::Error("invalid_record") if a rating falls outside 1..5.
void validate(const RatingRecord& r);

/// Five-level display vocabulary: 1 -> "Very Bad" ... 5 -> "Very Good".
struct RatingLevel {
  int value = 3;

  std::string_view label() const;
  static RatingLevel from_label(std::string_view label);
};

/// One answer as submitted; missing values mean the worker skipped the icon.
struct SubmittedRating {
  std::string tag;
  std::string icon_id;
  std::optional<int> semantic_distance;
  std::optional<int> familiarity;
  std::optional<int> tag_familiarity;
  bool sanity_repeat = false;  // the inserted duplicate of another icon in the block
};

struct WorkerSubmission {
  std::string worker_id;
  int reported_age = 0;
  Demographics demographics;
  std::vector<SubmittedRating> records;
};

nlohmann::json to_json(const WorkerSubmission& s);
WorkerSubmission submission_from_json(const nlohmann::json& j);

struct Rejection {
  std::string reason;
};

inline constexpr std::string_view kReasonAge = "age below 5";
inline constexpr std::string_view kReasonUnrated = "unrated icon";
inline constexpr std::string_view kReasonContradictory = "contradictory sanity check";
inline constexpr std::string_view kReasonUniform = "uniform ratings";

inline constexpr int kMinimumAge = 5;
inline constexpr int kSanityTolerance = 1;  // max level difference within a sanity pair

using ValidationResult = std::variant<std::vector<RatingRecord>, Rejection>;

/// Applies the outlier rules and returns the accepted records with sanity
/// duplicates removed. Structural problems (a block without exactly one
/// sanity repeat, a repeat with no original, out-of-range values) throw
/// evicon::Error("malformed_submission") instead of rejecting.
ValidationResult validate_worker(const WorkerSubmission& submission);

/// Most frequent value; ties go to the lower level.
RatingLevel aggregate_mode(const std::vector<int>& ratings);

struct RatingDistribution {
  std::array<double, kLevels> semantic_distance{};
  std::array<double, kLevels> familiarity{};
  std::array<double, kLevels> tag_familiarity{};
  std::size_t count = 0;
};

RatingDistribution rating_distribution(const std::vector<RatingRecord>& records, const std::string& tag);

struct TagSplit {
  std::vector<std::string> seen;
  std::vector<std::string> unseen;
};

TagSplit split_tags(std::vector<std::string> tags, std::size_t unseen_count, std::uint64_t seed);

inline constexpr std::string_view kCsvHeader =
    "worker_id,age_level,occupation,tag,icon_id,semantic_distance,familiarity,tag_familiarity";

void write_csv(std::ostream& out, const std::vector<RatingRecord>& records);
void write_csv(const std::filesystem::path& path, const std::vector<RatingRecord>& records);
std::vector<RatingRecord> read_csv(std::istream& in);
std::vector<RatingRecord> read_csv(const std::filesystem::path& path);

}  // namespace evicon::ratings
