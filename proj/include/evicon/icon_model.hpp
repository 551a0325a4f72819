#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace evicon::icon {

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

/// Polyline stroke in unit-square coordinates.
struct Stroke {
  std::vector<Point> points;
  double width = 0.05;

  friend bool operator==(const Stroke&, const Stroke&) = default;
};

struct VectorIcon {
  std::string id;
  std::vector<std::string> tags;
  std::vector<Stroke> strokes;

  friend bool operator==(const VectorIcon&, const VectorIcon&) = default;
};

/// Row-major grayscale raster, intensities in [0,1].
class GrayscaleImage {
 public:
  GrayscaleImage() = default;
  GrayscaleImage(std::size_t width, std::size_t height, double fill = 0.0);
  GrayscaleImage(std::size_t width, std::size_t height, std::vector<double> pixels);

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t size() const noexcept { return pixels_.size(); }

  double at(std::size_t row, std::size_t col) const { return pixels_[row * width_ + col]; }
  double& at(std::size_t row, std::size_t col) { return pixels_[row * width_ + col]; }

  const std::vector<double>& pixels() const noexcept { return pixels_; }

  GrayscaleImage flipped_horizontally() const;

  friend bool operator==(const GrayscaleImage&, const GrayscaleImage&) = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<double> pixels_;
};

/// In-place revision hint: strokes to add (taken from the reference) and
/// indices of current strokes to remove.
struct EditSuggestion {
  std::vector<Stroke> add;
  std::vector<std::size_t> remove;

  bool empty() const noexcept { return add.empty() && remove.empty(); }
};

inline constexpr double kDefaultChamferThreshold = 0.05;
inline constexpr std::size_t kChamferSamples = 16;
inline constexpr std::size_t kCanonicalResolution = 28;

/// Throws evicon::Error("invalid_icon") if the icon breaks a geometry or tag
/// invariant. Tags are lower-cased and trimmed by `make_icon`, not here.
void validate(const VectorIcon& icon);

/// Trims and lower-cases tags, drops consecutive duplicate points, then
/// validates.
VectorIcon make_icon(std::string id, std::vector<std::string> tags, std::vector<Stroke> strokes);

std::string normalize_tag(const std::string& tag);

double point_segment_distance(Point p, Point a, Point b);

/// Coverage raster: each pixel averages a 2x2 grid of subsamples, a subsample
/// being covered iff it lies within width/2 of some stroke segment.
GrayscaleImage rasterize(const VectorIcon& icon, std::size_t resolution);

/// Tight-crops to the nonzero bounding box, pads to a centered square and
/// area-averages down (or up) to size x size.
GrayscaleImage normalize_image(const GrayscaleImage& img, std::size_t size);

/// Rasterize at 2x and normalize to the canonical 28x28 model input.
GrayscaleImage canonical_raster(const VectorIcon& icon,
                                std::size_t size = kCanonicalResolution);

/// `count` points evenly spaced by arc length along the stroke.
std::vector<Point> resample_stroke(const Stroke& stroke, std::size_t count);

double chamfer_distance(const Stroke& a, const Stroke& b, std::size_t samples = kChamferSamples);

EditSuggestion diff_strokes(const VectorIcon& current, const VectorIcon& reference,
                            double threshold = kDefaultChamferThreshold);

}  // namespace evicon::icon
