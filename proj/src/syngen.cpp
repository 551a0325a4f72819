#include "evicon/syngen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "evicon/error.hpp"
#include "evicon/rng.hpp"

namespace evicon::syngen {

namespace {

using icon::Point;
using icon::Stroke;

constexpr double kStrokeWidth = 0.06;
constexpr const char* kGlyphNames[kBaseGlyphs] = {"circle", "cross",    "arrow",    "bars",    "zigzag",
                                                  "grid",   "triangle", "frame",    "xmark",   "star",
                                                  "house",  "wave",     "brackets", "target"};

Stroke line(std::vector<Point> pts) { return {std::move(pts), kStrokeWidth}; }

std::vector<Stroke> glyph_strokes(Glyph g) {
  const double pi = std::numbers::pi;
  switch (g) {
    case Glyph::circle: {
      std::vector<Point> ring;
      for (int i = 0; i <= 12; ++i) {
        const double a = 2.0 * pi * i / 12.0;
        ring.push_back({0.5 + 0.3 * std::cos(a), 0.5 + 0.3 * std::sin(a)});
      }
      return {line(ring)};
    }
    case Glyph::cross:
      return {line({{0.5, 0.2}, {0.5, 0.8}}), line({{0.2, 0.5}, {0.8, 0.5}})};
    case Glyph::arrow:
      return {line({{0.2, 0.5}, {0.8, 0.5}}), line({{0.6, 0.3}, {0.8, 0.5}, {0.6, 0.7}})};
    case Glyph::bars:
      return {line({{0.3, 0.8}, {0.3, 0.55}}), line({{0.5, 0.8}, {0.5, 0.35}}), line({{0.7, 0.8}, {0.7, 0.2}})};
    case Glyph::zigzag:
      return {line({{0.2, 0.35}, {0.35, 0.65}, {0.5, 0.35}, {0.65, 0.65}, {0.8, 0.35}})};
    case Glyph::grid:
      return {line({{0.4, 0.2}, {0.4, 0.8}}), line({{0.6, 0.2}, {0.6, 0.8}}), line({{0.2, 0.4}, {0.8, 0.4}}),
              line({{0.2, 0.6}, {0.8, 0.6}})};
    case Glyph::triangle:
      return {line({{0.5, 0.2}, {0.8, 0.78}, {0.2, 0.78}, {0.5, 0.2}})};
    case Glyph::frame:
      return {line({{0.25, 0.25}, {0.75, 0.25}, {0.75, 0.75}, {0.25, 0.75}, {0.25, 0.25}})};
    case Glyph::xmark:
      return {line({{0.25, 0.25}, {0.75, 0.75}}), line({{0.75, 0.25}, {0.25, 0.75}})};
    case Glyph::star: {
      std::vector<Point> pts;
      for (int i = 0; i <= 5; ++i) {
        const double a = -pi / 2.0 + 2.0 * pi * ((2 * i) % 5) / 5.0;
        pts.push_back({0.5 + 0.3 * std::cos(a), 0.52 + 0.3 * std::sin(a)});
      }
      return {line(pts)};
    }
    case Glyph::house:
      return {line({{0.3, 0.5}, {0.3, 0.8}, {0.7, 0.8}, {0.7, 0.5}}), line({{0.2, 0.55}, {0.5, 0.25}, {0.8, 0.55}})};
    case Glyph::wave: {
      std::vector<Point> pts;
      for (int i = 0; i <= 12; ++i) {
        const double t = i / 12.0;
        pts.push_back({0.2 + 0.6 * t, 0.5 + 0.15 * std::sin(2.0 * pi * 1.5 * t)});
      }
      return {line(pts)};
    }
    case Glyph::brackets:
      return {line({{0.4, 0.2}, {0.25, 0.2}, {0.25, 0.8}, {0.4, 0.8}}),
              line({{0.6, 0.2}, {0.75, 0.2}, {0.75, 0.8}, {0.6, 0.8}})};
    case Glyph::target:
      return {line({{0.2, 0.2}, {0.8, 0.2}, {0.8, 0.8}, {0.2, 0.8}, {0.2, 0.2}}),
              line({{0.42, 0.42}, {0.58, 0.42}, {0.58, 0.58}, {0.42, 0.58}, {0.42, 0.42}})};
  }
  return {};
}

Point transform(Point p, double angle, double scale) {
  const double x = p.x - 0.5;
  const double y = p.y - 0.5;
  return {0.5 + scale * (x * std::cos(angle) - y * std::sin(angle)),
          0.5 + scale * (x * std::sin(angle) + y * std::cos(angle))};
}

}  // namespace

std::vector<TagPrototype> make_prototypes(std::size_t count) {
  std::vector<TagPrototype> out;
  for (std::size_t i = 0; i < count; ++i) {
    TagPrototype p;
    if (i < kBaseGlyphs) {
      p.glyphs = {static_cast<Glyph>(i)};
      p.tag = kGlyphNames[i];
    } else {
      // Pair glyphs (a, b) with a < b, enumerated in order.
      std::size_t rank = i - kBaseGlyphs;
      std::size_t a = 0, b = 1;
      while (rank > 0) {
        if (++b == kBaseGlyphs) {
          ++a;
          b = a + 1;
          if (b == kBaseGlyphs) throw Error("invalid_argument", "make_prototypes: too many tags requested");
        }
        --rank;
      }
      p.glyphs = {static_cast<Glyph>(a), static_cast<Glyph>(b)};
      p.tag = std::string(kGlyphNames[a]) + "-" + kGlyphNames[b];
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<Stroke> prototype_strokes(const TagPrototype& p) {
  if (p.glyphs.size() == 1) return glyph_strokes(p.glyphs.front());
  std::vector<Stroke> out;
  for (std::size_t g = 0; g < p.glyphs.size(); ++g) {
    const double x0 = static_cast<double>(g) * 0.5;
    for (Stroke s : glyph_strokes(p.glyphs[g])) {
      for (Point& pt : s.points) pt = {x0 + 0.5 * pt.x, 0.25 + 0.5 * pt.y};
      s.width = kStrokeWidth / 1.5;
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::vector<SyntheticIcon> generate_icons(const std::vector<TagPrototype>& prototypes, const IconGenConfig& config) {
  if (prototypes.size() < 2) throw Error("invalid_argument", "generate_icons: need at least 2 prototypes");
  std::vector<SyntheticIcon> out;
  out.reserve(prototypes.size() * config.per_tag);
  for (std::size_t t = 0; t < prototypes.size(); ++t) {
    const auto& proto = prototypes[t];
    const auto base = prototype_strokes(proto);
    Rng rng(derive_seed(config.seed, t));
    for (std::size_t i = 0; i < config.per_tag; ++i) {
      const double u = rng.uniform() * std::clamp(config.jitter, 0.0, 1.0);
      const double angle = (rng.uniform() < 0.5 ? -1.0 : 1.0) * u * 15.0 * std::numbers::pi / 180.0;
      const double scale = 1.0 + (rng.uniform() < 0.5 ? -1.0 : 1.0) * u * 0.2;
      std::vector<Stroke> strokes;
      for (const Stroke& s : base) {
        Stroke out_stroke{{}, s.width};
        for (const Point& p : s.points) {
          Point q = transform(p, angle, scale);
          q.x = std::clamp(q.x + u * proto.jitter_scale * rng.normal(), 0.02, 0.98);
          q.y = std::clamp(q.y + u * proto.jitter_scale * rng.normal(), 0.02, 0.98);
          out_stroke.points.push_back(q);
        }
        strokes.push_back(std::move(out_stroke));
      }
      char id[32];
      std::snprintf(id, sizeof id, "-%03zu", i);
      out.push_back({icon::make_icon(proto.tag + id, {proto.tag}, std::move(strokes)), u});
    }
  }
  return out;
}

RatingOracle RatingOracle::for_prototypes(const std::vector<TagPrototype>& prototypes, std::uint64_t seed) {
  RatingOracle oracle;
  Rng rng(derive_seed(seed, 99));
  for (const auto& p : prototypes) oracle.tag_anchor[p.tag] = rng.uniform(0.0, 0.45);
  return oracle;
}

double RatingOracle::sd_bias(const ratings::Demographics& d, double u) const {
  return d.occupation == ratings::Occupation::technology ? 0.3 * u : 0.0;
}

double RatingOracle::fam_bias(const ratings::Demographics& d, double u) const {
  switch (d.age_level) {
    case ratings::AgeLevel::elder: return -1.0 * u;
    case ratings::AgeLevel::teenager: return 0.5 * u;
    case ratings::AgeLevel::adult: return 0.0;
  }
  return 0.0;
}

namespace {

int clamp_level(double v) { return static_cast<int>(std::clamp(std::lround(v), 1L, 5L)); }

}  // namespace

int RatingOracle::semantic_distance(const std::string&, double u, const ratings::Demographics& d,
                                    double noise_draw) const {
  return clamp_level(5.0 - alpha_sd * u + sd_bias(d, u) + noise * noise_draw);
}

int RatingOracle::familiarity(const std::string& tag, double u, const ratings::Demographics& d,
                              double noise_draw) const {
  const auto it = tag_anchor.find(tag);
  const double anchor = it == tag_anchor.end() ? 0.0 : it->second;
  return clamp_level(5.0 - anchor - alpha_fam * u + fam_bias(d, u) + noise * noise_draw);
}

int RatingOracle::tag_familiarity(const std::string& tag, double noise_draw) const {
  const auto it = tag_anchor.find(tag);
  const double anchor = it == tag_anchor.end() ? 0.0 : it->second;
  return clamp_level(4.5 - 2.0 * anchor + noise * noise_draw);
}

SyntheticRatings generate_ratings(const std::vector<SyntheticIcon>& icons, const RatingOracle& oracle,
                                  const RatingGenConfig& config) {
  if (icons.empty()) throw Error("invalid_argument", "generate_ratings: no icons");
  std::map<std::string, std::vector<const SyntheticIcon*>> by_tag;
  for (const auto& ic : icons) by_tag[ic.icon.tags.front()].push_back(&ic);
  std::vector<std::string> tags;
  for (const auto& [tag, _] : by_tag) tags.push_back(tag);

  Rng rng(derive_seed(config.seed, 7));
  const auto spam_count = static_cast<std::size_t>(
      std::llround(std::clamp(config.spam_fraction, 0.0, 1.0) * static_cast<double>(config.workers)));
  std::vector<std::size_t> worker_order(config.workers);
  for (std::size_t i = 0; i < worker_order.size(); ++i) worker_order[i] = i;
  rng.shuffle(worker_order);
  std::vector<int> spam_kind(config.workers, 0);  // 0 clean, 1 uniform, 2 contradictory
  for (std::size_t s = 0; s < spam_count; ++s) spam_kind[worker_order[s]] = s % 2 == 0 ? 1 : 2;

  const auto cells = ratings::all_demographics();
  SyntheticRatings out;
  for (std::size_t w = 0; w < config.workers; ++w) {
    Rng wr(derive_seed(config.seed, 1000 + w));
    ratings::WorkerSubmission sub;
    char id[32];
    std::snprintf(id, sizeof id, "w%04zu", w);
    sub.worker_id = id;
    sub.demographics = cells[w % cells.size()];
    switch (sub.demographics.age_level) {
      case ratings::AgeLevel::teenager: sub.reported_age = 12 + static_cast<int>(wr.index(8)); break;
      case ratings::AgeLevel::adult: sub.reported_age = 20 + static_cast<int>(wr.index(31)); break;
      case ratings::AgeLevel::elder: sub.reported_age = 51 + static_cast<int>(wr.index(25)); break;
    }

    std::vector<std::string> worker_tags = tags;
    wr.shuffle(worker_tags);
    worker_tags.resize(std::min(config.blocks_per_worker, worker_tags.size()));
    const int uniform_value = 1 + static_cast<int>(wr.index(5));

    for (const auto& tag : worker_tags) {
      std::vector<const SyntheticIcon*> pool = by_tag[tag];
      wr.shuffle(pool);
      pool.resize(std::min(config.icons_per_block, pool.size()));
      const int tag_fam = oracle.tag_familiarity(tag, wr.normal());
      std::vector<ratings::SubmittedRating> block;
      for (const auto* ic : pool) {
        ratings::SubmittedRating r;
        r.tag = tag;
        r.icon_id = ic->icon.id;
        r.semantic_distance = oracle.semantic_distance(tag, ic->deformation, sub.demographics, wr.normal());
        r.familiarity = oracle.familiarity(tag, ic->deformation, sub.demographics, wr.normal());
        r.tag_familiarity = tag_fam;
        block.push_back(r);
      }
      // Sanity repeat of one icon, inserted at a random position.
      const std::size_t original = wr.index(block.size());
      ratings::SubmittedRating repeat = block[original];
      repeat.sanity_repeat = true;
      const double u = pool[original]->deformation;
      repeat.semantic_distance = oracle.semantic_distance(tag, u, sub.demographics, wr.normal());
      repeat.familiarity = oracle.familiarity(tag, u, sub.demographics, wr.normal());
      if (spam_kind[w] == 2) {
        repeat.semantic_distance = *block[original].semantic_distance <= 3 ? 5 : 1;
        repeat.familiarity = *block[original].familiarity <= 3 ? 5 : 1;
      }
      block.insert(block.begin() + static_cast<std::ptrdiff_t>(wr.index(block.size() + 1)), repeat);
      if (spam_kind[w] == 1) {
        for (auto& r : block) r.semantic_distance = r.familiarity = r.tag_familiarity = uniform_value;
      }
      sub.records.insert(sub.records.end(), block.begin(), block.end());
    }

    for (const auto& r : sub.records) {
      if (r.sanity_repeat) continue;
      out.records.push_back({sub.worker_id, sub.demographics, r.tag, r.icon_id, *r.semantic_distance, *r.familiarity,
                             *r.tag_familiarity});
    }
    if (spam_kind[w] != 0) out.spam_workers.push_back(sub.worker_id);
    out.submissions.push_back(std::move(sub));
  }
  std::sort(out.spam_workers.begin(), out.spam_workers.end());
  return out;
}

}  // namespace evicon::syngen
