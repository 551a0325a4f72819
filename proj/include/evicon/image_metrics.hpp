#pragma once

#include <cstddef>
#include <limits>
#include <vector>

#include "evicon/embedding.hpp"
#include "evicon/icon_model.hpp"

namespace evicon::embed {

inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;
inline constexpr std::size_t kSsimWindow = 8;

/// 10*log10(1/MSE) for [0,1] rasters; +infinity for identical images.
double psnr(const icon::GrayscaleImage& a, const icon::GrayscaleImage& b);

/// Mean SSIM over all 8x8 windows (stride 1, uniform weights, L = 1).
/// Images smaller than the window are treated as one window.
double ssim(const icon::GrayscaleImage& a, const icon::GrayscaleImage& b);

struct ClosestExample {
  std::size_t index = 0;
  double similarity = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
};

/// Dataset raster closest to `query` in the embedding space, with pixel-level
/// PSNR/SSIM against it.
ClosestExample closest_example(const EmbeddingModel& model, const icon::GrayscaleImage& query,
                               const std::vector<icon::GrayscaleImage>& dataset);

}  // namespace evicon::embed
