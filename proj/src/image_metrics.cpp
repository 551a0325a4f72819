#include "evicon/image_metrics.hpp"

#include <algorithm>
#include <cmath>

#include "evicon/error.hpp"

namespace evicon::embed {

namespace {

void check_same_shape(const icon::GrayscaleImage& a, const icon::GrayscaleImage& b) {
  if (a.width() != b.width() || a.height() != b.height() || a.size() == 0) {
    throw Error("dimension_mismatch", "image metrics need two non-empty images of equal size");
  }
}

}  // namespace

double psnr(const icon::GrayscaleImage& a, const icon::GrayscaleImage& b) {
  check_same_shape(a, b);
  double sse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.pixels()[i] - b.pixels()[i];
    sse += d * d;
  }
  const double mse = sse / static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double ssim(const icon::GrayscaleImage& a, const icon::GrayscaleImage& b) {
  check_same_shape(a, b);
  const double c1 = (kSsimK1 * 1.0) * (kSsimK1 * 1.0);
  const double c2 = (kSsimK2 * 1.0) * (kSsimK2 * 1.0);
  const std::size_t wh = std::min(kSsimWindow, a.height());
  const std::size_t ww = std::min(kSsimWindow, a.width());
  const double count = static_cast<double>(wh * ww);
  double total = 0.0;
  std::size_t windows = 0;
  for (std::size_t r0 = 0; r0 + wh <= a.height(); ++r0) {
    for (std::size_t c0 = 0; c0 + ww <= a.width(); ++c0) {
      double sa = 0.0, sb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
      for (std::size_t r = r0; r < r0 + wh; ++r) {
        for (std::size_t c = c0; c < c0 + ww; ++c) {
          const double x = a.at(r, c);
          const double y = b.at(r, c);
          sa += x;
          sb += y;
          saa += x * x;
          sbb += y * y;
          sab += x * y;
        }
      }
      const double mu_a = sa / count;
      const double mu_b = sb / count;
      const double var_a = saa / count - mu_a * mu_a;
      const double var_b = sbb / count - mu_b * mu_b;
      const double cov = sab / count - mu_a * mu_b;
      total += ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
               ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
      ++windows;
    }
  }
  return total / static_cast<double>(windows);
}

ClosestExample closest_example(const EmbeddingModel& model, const icon::GrayscaleImage& query,
                               const std::vector<icon::GrayscaleImage>& dataset) {
  if (dataset.empty()) throw Error("invalid_argument", "closest_example: empty dataset");
  const Embedding q = encode_image(model, query);
  std::vector<Embedding> corpus;
  corpus.reserve(dataset.size());
  for (const auto& img : dataset) corpus.push_back(encode_image(model, img));
  const Neighbor best = nearest_neighbors(q, corpus, 1).front();
  return {best.index, best.similarity, psnr(query, dataset[best.index]), ssim(query, dataset[best.index])};
}

}  // namespace evicon::embed
