#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "evicon/icon_model.hpp"
#include "evicon/ratings.hpp"

namespace evicon::syngen {

/// Base glyph families; tags beyond this list combine two glyphs side by side.
enum class Glyph { circle, cross, arrow, bars, zigzag, grid, triangle, frame, xmark, star, house, wave, brackets, target };

inline constexpr std::size_t kBaseGlyphs = 14;

struct TagPrototype {
  std::string tag;
  std::vector<Glyph> glyphs;   // one glyph, or two drawn side by side
  double jitter_scale = 0.05;  // vertex noise std-dev at full deformation
};

/// `count` distinct prototypes with deterministic tag names.
std::vector<TagPrototype> make_prototypes(std::size_t count);

/// Undeformed strokes of a prototype.
std::vector<icon::Stroke> prototype_strokes(const TagPrototype& p);

struct SyntheticIcon {
  icon::VectorIcon icon;
  double deformation = 0.0;  // jitter magnitude in [0,1]
};

struct IconGenConfig {
  std::size_t per_tag = 60;
  double jitter = 1.0;  // multiplier on every deformation; 0 yields exact prototypes
  std::uint64_t seed = 0;
};

/// Per icon a deformation u ~ U(0,1) drives rotation (up to 15 degrees),
/// scale (0.8..1.2) and vertex noise. Each tag uses its own derived seed.
std::vector<SyntheticIcon> generate_icons(const std::vector<TagPrototype>& prototypes, const IconGenConfig& config);

struct RatingOracle {
  double alpha_sd = 4.0;
  double alpha_fam = 3.5;
  double noise = 0.05;
  /// Per-tag familiarity anchor in [0, 0.45]: how unfamiliar the concept is.
  std::map<std::string, double> tag_anchor;

  static RatingOracle for_prototypes(const std::vector<TagPrototype>& prototypes, std::uint64_t seed);

  /// Demographic shifts, scaled by the deformation u.
  double sd_bias(const ratings::Demographics& d, double u) const;
  double fam_bias(const ratings::Demographics& d, double u) const;

  int semantic_distance(const std::string& tag, double u, const ratings::Demographics& d, double noise_draw) const;
  int familiarity(const std::string& tag, double u, const ratings::Demographics& d, double noise_draw) const;
  int tag_familiarity(const std::string& tag, double noise_draw) const;
};

struct RatingGenConfig {
  std::size_t workers = 100;
  std::size_t blocks_per_worker = 5;
  std::size_t icons_per_block = 4;  // plus one sanity repeat
  double spam_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct SyntheticRatings {
  std::vector<ratings::WorkerSubmission> submissions;
  std::vector<std::string> spam_workers;      // planted, sorted
  std::vector<ratings::RatingRecord> records; // every non-repeat record of every submission
};

SyntheticRatings generate_ratings(const std::vector<SyntheticIcon>& icons, const RatingOracle& oracle,
                                  const RatingGenConfig& config);

}  // namespace evicon::syngen
