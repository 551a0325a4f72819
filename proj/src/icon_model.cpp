#include "evicon/icon_model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <tuple>

#include "evicon/error.hpp"

namespace evicon::icon {

GrayscaleImage::GrayscaleImage(std::size_t width, std::size_t height, double fill)
    : width_(width), height_(height), pixels_(width * height, fill) {}

GrayscaleImage::GrayscaleImage(std::size_t width, std::size_t height, std::vector<double> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
  if (pixels_.size() != width_ * height_) {
    throw Error("invalid_image", "pixel count does not match width*height");
  }
  for (double p : pixels_) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error("invalid_image", "pixel intensity outside [0,1]");
  }
}

GrayscaleImage GrayscaleImage::flipped_horizontally() const {
  GrayscaleImage out(width_, height_);
  for (std::size_t r = 0; r < height_; ++r) {
    for (std::size_t c = 0; c < width_; ++c) out.at(r, width_ - 1 - c) = at(r, c);
  }
  return out;
}

std::string normalize_tag(const std::string& tag) {
  auto begin = std::find_if_not(tag.begin(), tag.end(), [](unsigned char ch) { return std::isspace(ch); });
  auto end = std::find_if_not(tag.rbegin(), tag.rend(), [](unsigned char ch) { return std::isspace(ch); }).base();
  std::string out = begin < end ? std::string(begin, end) : std::string();
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return out;
}

void validate(const VectorIcon& icon) {
  if (icon.tags.empty()) throw Error("invalid_icon", "icon '" + icon.id + "' has no tags");
  for (const auto& tag : icon.tags) {
    if (normalize_tag(tag).empty()) throw Error("invalid_icon", "icon '" + icon.id + "' has an empty tag");
  }
  for (std::size_t s = 0; s < icon.strokes.size(); ++s) {
    const Stroke& stroke = icon.strokes[s];
    const std::string where = "icon '" + icon.id + "' stroke " + std::to_string(s);
    if (stroke.points.size() < 2) throw Error("invalid_icon", where + " has fewer than 2 points");
    if (!(stroke.width > 0.0 && stroke.width <= 0.5)) {
      throw Error("invalid_icon", where + " width outside (0, 0.5]");
    }
    for (std::size_t i = 0; i < stroke.points.size(); ++i) {
      const Point p = stroke.points[i];
      if (!(p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0)) {
        throw Error("invalid_icon", where + " has a point outside the unit square");
      }
      if (i > 0 && p == stroke.points[i - 1]) {
        throw Error("invalid_icon", where + " has consecutive duplicate points");
      }
    }
  }
}

VectorIcon make_icon(std::string id, std::vector<std::string> tags, std::vector<Stroke> strokes) {
  VectorIcon icon{std::move(id), {}, {}};
  for (const auto& tag : tags) icon.tags.push_back(normalize_tag(tag));
  for (auto& stroke : strokes) {
    Stroke cleaned{{}, stroke.width};
    for (const Point& p : stroke.points) {
      if (cleaned.points.empty() || !(cleaned.points.back() == p)) cleaned.points.push_back(p);
    }
    icon.strokes.push_back(std::move(cleaned));
  }
  validate(icon);
  return icon;
}

double point_segment_distance(Point p, Point a, Point b) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp(((p.x - a.x) * dx + (p.y - a.y) * dy) / len2, 0.0, 1.0);
  const double ex = p.x - (a.x + t * dx);
  const double ey = p.y - (a.y + t * dy);
  return std::sqrt(ex * ex + ey * ey);
}

GrayscaleImage rasterize(const VectorIcon& icon, std::size_t resolution) {
  if (resolution < 4) throw Error("invalid_argument", "rasterize: resolution must be >= 4");
  const std::size_t grid = 2 * resolution;  // subsamples per side
  const double denom = 4.0 * static_cast<double>(resolution);
  // Subsample j sits at (2j+1)/(4R).
  auto coord = [denom](std::size_t j) { return static_cast<double>(2 * j + 1) / denom; };
  auto lower_index = [&](double v) -> std::size_t {
    const double j = std::floor((v * denom - 1.0) / 2.0);
    return j <= 0.0 ? 0 : std::min(grid - 1, static_cast<std::size_t>(j));
  };
  auto upper_index = [&](double v) -> std::size_t {
    const double j = std::ceil((v * denom - 1.0) / 2.0);
    return j <= 0.0 ? 0 : std::min(grid - 1, static_cast<std::size_t>(j));
  };

  std::vector<unsigned char> covered(grid * grid, 0);
  for (const Stroke& stroke : icon.strokes) {
    const double half = stroke.width / 2.0;
    for (std::size_t s = 0; s + 1 < stroke.points.size(); ++s) {
      const Point a = stroke.points[s];
      const Point b = stroke.points[s + 1];
      const std::size_t j0 = lower_index(std::min(a.x, b.x) - half);
      const std::size_t j1 = upper_index(std::max(a.x, b.x) + half);
      const std::size_t i0 = lower_index(std::min(a.y, b.y) - half);
      const std::size_t i1 = upper_index(std::max(a.y, b.y) + half);
      for (std::size_t i = i0; i <= i1; ++i) {
        for (std::size_t j = j0; j <= j1; ++j) {
          unsigned char& cell = covered[i * grid + j];
          if (!cell && point_segment_distance({coord(j), coord(i)}, a, b) <= half) cell = 1;
        }
      }
    }
  }

  GrayscaleImage out(resolution, resolution);
  for (std::size_t r = 0; r < resolution; ++r) {
    for (std::size_t c = 0; c < resolution; ++c) {
      const int hits = covered[(2 * r) * grid + 2 * c] + covered[(2 * r) * grid + 2 * c + 1] +
                       covered[(2 * r + 1) * grid + 2 * c] + covered[(2 * r + 1) * grid + 2 * c + 1];
      out.at(r, c) = hits / 4.0;
    }
  }
  return out;
}

namespace {

// weights[o][s]: overlap of output cell o with source pixel s, where the
// source pixel spans [offset+s, offset+s+1) and the output cell spans
// [o*cell, (o+1)*cell).
std::vector<std::vector<double>> overlap_weights(std::size_t out_size, std::size_t src_size,
                                                 double offset, double cell) {
  std::vector<std::vector<double>> w(out_size, std::vector<double>(src_size, 0.0));
  for (std::size_t o = 0; o < out_size; ++o) {
    const double lo = static_cast<double>(o) * cell;
    const double hi = static_cast<double>(o + 1) * cell;
    for (std::size_t s = 0; s < src_size; ++s) {
      const double slo = offset + static_cast<double>(s);
      const double shi = slo + 1.0;
      w[o][s] = std::max(0.0, std::min(hi, shi) - std::max(lo, slo));
    }
  }
  return w;
}

}  // namespace

GrayscaleImage normalize_image(const GrayscaleImage& img, std::size_t size) {
  if (size == 0 || img.width() == 0 || img.height() == 0) {
    throw Error("invalid_argument", "normalize_image: degenerate image or size");
  }
  std::size_t r0 = img.height(), r1 = 0, c0 = img.width(), c1 = 0;
  for (std::size_t r = 0; r < img.height(); ++r) {
    for (std::size_t c = 0; c < img.width(); ++c) {
      if (img.at(r, c) > 0.0) {
        r0 = std::min(r0, r);
        r1 = std::max(r1, r);
        c0 = std::min(c0, c);
        c1 = std::max(c1, c);
      }
    }
  }
  GrayscaleImage out(size, size);
  if (r0 > r1) return out;

  const std::size_t w = c1 - c0 + 1;
  const std::size_t h = r1 - r0 + 1;
  const std::size_t side = std::max(w, h);
  const double cell = static_cast<double>(side) / static_cast<double>(size);
  const auto wx = overlap_weights(size, w, (static_cast<double>(side) - w) / 2.0, cell);
  const auto wy = overlap_weights(size, h, (static_cast<double>(side) - h) / 2.0, cell);
  const double area = cell * cell;

  // Separable: first collapse columns, then rows.
  std::vector<double> tmp(h * size, 0.0);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t o = 0; o < size; ++o) {
      double acc = 0.0;
      for (std::size_t c = 0; c < w; ++c) acc += wx[o][c] * img.at(r0 + r, c0 + c);
      tmp[r * size + o] = acc;
    }
  }
  for (std::size_t o = 0; o < size; ++o) {
    for (std::size_t oc = 0; oc < size; ++oc) {
      double acc = 0.0;
      for (std::size_t r = 0; r < h; ++r) acc += wy[o][r] * tmp[r * size + oc];
      out.at(o, oc) = std::clamp(acc / area, 0.0, 1.0);
    }
  }
  return out;
}

GrayscaleImage canonical_raster(const VectorIcon& icon, std::size_t size) {
  return normalize_image(rasterize(icon, 2 * size), size);
}

std::vector<Point> resample_stroke(const Stroke& stroke, std::size_t count) {
  std::vector<Point> out;
  if (stroke.points.empty() || count == 0) return out;
  std::vector<double> cumulative{0.0};
  for (std::size_t i = 1; i < stroke.points.size(); ++i) {
    const double dx = stroke.points[i].x - stroke.points[i - 1].x;
    const double dy = stroke.points[i].y - stroke.points[i - 1].y;
    cumulative.push_back(cumulative.back() + std::sqrt(dx * dx + dy * dy));
  }
  const double total = cumulative.back();
  if (count == 1 || total <= 0.0) {
    out.assign(count, stroke.points.front());
    return out;
  }
  std::size_t seg = 0;
  for (std::size_t k = 0; k < count; ++k) {
    const double target = total * static_cast<double>(k) / static_cast<double>(count - 1);
    while (seg + 2 < cumulative.size() && cumulative[seg + 1] < target) ++seg;
    const double len = cumulative[seg + 1] - cumulative[seg];
    const double t = len > 0.0 ? std::clamp((target - cumulative[seg]) / len, 0.0, 1.0) : 0.0;
    const Point a = stroke.points[seg];
    const Point b = stroke.points[seg + 1];
    out.push_back({a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)});
  }
  return out;
}

double chamfer_distance(const Stroke& a, const Stroke& b, std::size_t samples) {
  const auto pa = resample_stroke(a, samples);
  const auto pb = resample_stroke(b, samples);
  auto directed = [](const std::vector<Point>& from, const std::vector<Point>& to) {
    double sum = 0.0;
    for (const Point& p : from) {
      double best = INFINITY;
      for (const Point& q : to) best = std::min(best, std::hypot(p.x - q.x, p.y - q.y));
      sum += best;
    }
    return sum / static_cast<double>(from.size());
  };
  return 0.5 * (directed(pa, pb) + directed(pb, pa));
}

EditSuggestion diff_strokes(const VectorIcon& current, const VectorIcon& reference, double threshold) {
  struct Candidate {
    double distance;
    std::size_t cur;
    std::size_t ref;
  };
  std::vector<Candidate> candidates;
  for (std::size_t i = 0; i < current.strokes.size(); ++i) {
    for (std::size_t j = 0; j < reference.strokes.size(); ++j) {
      const double d = chamfer_distance(current.strokes[i], reference.strokes[j]);
      if (d <= threshold) candidates.push_back({d, i, j});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    return std::tie(a.distance, a.cur, a.ref) < std::tie(b.distance, b.cur, b.ref);
  });

  std::vector<bool> cur_matched(current.strokes.size(), false);
  std::vector<bool> ref_matched(reference.strokes.size(), false);
  for (const auto& c : candidates) {
    if (cur_matched[c.cur] || ref_matched[c.ref]) continue;
    cur_matched[c.cur] = true;
    ref_matched[c.ref] = true;
  }

  EditSuggestion out;
  for (std::size_t j = 0; j < reference.strokes.size(); ++j) {
    if (!ref_matched[j]) out.add.push_back(reference.strokes[j]);
  }
  for (std::size_t i = 0; i < current.strokes.size(); ++i) {
    if (!cur_matched[i]) out.remove.push_back(i);
  }
  return out;
}

}  // namespace evicon::icon
