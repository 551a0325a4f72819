#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "evicon/icon_model.hpp"
#include "json.hpp"

namespace evicon::curation {

inline constexpr double kDefaultVarianceTarget = 0.9;
inline constexpr std::size_t kDefaultClusters = 10;
inline constexpr std::size_t kDefaultPerCluster = 20;
inline constexpr std::size_t kMaxLloydIterations = 300;

/// Indices of the first occurrence of every bit-identical image, in input order.
std::vector<std::size_t> dedup(const std::vector<icon::GrayscaleImage>& images);

struct PcaModel {
  Eigen::VectorXd mean;
  Eigen::MatrixXd components;          // d x p, orthonormal rows
  Eigen::VectorXd explained_variance;  // d, non-increasing
  double total_variance = 0.0;
  double variance_target = kDefaultVarianceTarget;

  std::size_t dims() const noexcept { return static_cast<std::size_t>(components.rows()); }
  double explained_ratio() const;
};

/// Rows of `samples` are observations. Keeps the smallest number of leading
/// components whose cumulative variance reaches `variance_target`.
PcaModel fit_pca(const Eigen::MatrixXd& samples, double variance_target = kDefaultVarianceTarget);
PcaModel fit_pca(const std::vector<icon::GrayscaleImage>& images,
                 double variance_target = kDefaultVarianceTarget);

Eigen::VectorXd project(const PcaModel& pca, const Eigen::VectorXd& sample);
Eigen::VectorXd project(const PcaModel& pca, const icon::GrayscaleImage& image);
Eigen::MatrixXd project_all(const PcaModel& pca, const Eigen::MatrixXd& samples);
Eigen::VectorXd reconstruct(const PcaModel& pca, const Eigen::VectorXd& features);

/// Stacks images as rows (pixels flattened row-major).
Eigen::MatrixXd image_matrix(const std::vector<icon::GrayscaleImage>& images);

struct Clustering {
  std::size_t k = 0;
  Eigen::MatrixXd centroids;            // k x dim
  std::vector<std::size_t> assignment;  // point -> cluster id
  double wcss = 0.0;
  std::size_t iterations = 0;
  std::vector<double> wcss_history;  // after every assignment step
};

/// Lloyd's algorithm with k-means++ seeding.
Clustering kmeans(const Eigen::MatrixXd& features, std::size_t k, std::uint64_t seed,
                  std::size_t max_iterations = kMaxLloydIterations);

/// Picks the k with the largest second difference of the wcss curve
/// (wcss[0] corresponds to k_min). Ties go to the smaller k. Curves with
/// fewer than three points fall back to k_min.
std::size_t elbow_from_wcss(const std::vector<double>& wcss, std::size_t k_min);

struct ElbowResult {
  std::size_t k = 0;
  std::vector<double> wcss;  // index i <-> k_min + i
};

ElbowResult elbow_k(const Eigen::MatrixXd& features, std::size_t k_min, std::size_t k_max,
                    std::uint64_t seed);

/// Uniform sample without replacement of `per_cluster` members from every
/// cluster; smaller clusters contribute all members. Output is grouped by
/// cluster id.
std::vector<std::size_t> sample_representatives(const Clustering& clustering, std::size_t per_cluster,
                                                std::uint64_t seed);

struct CurationConfig {
  double variance_target = kDefaultVarianceTarget;
  std::size_t k = kDefaultClusters;  // 0 selects k by the elbow rule
  std::size_t elbow_max_k = 15;
  std::size_t per_cluster = kDefaultPerCluster;
  bool per_tag = true;  // group by first tag; false curates the whole set at once
  std::size_t resolution = icon::kCanonicalResolution;
  std::uint64_t seed = 0;
};

struct CurationGroup {
  std::string tag;  // empty in global mode
  std::size_t input_count = 0;
  std::size_t unique_count = 0;
  std::size_t dims = 0;
  double explained_ratio = 0.0;
  std::size_t k = 0;
  std::vector<std::size_t> cluster_sizes;
  std::vector<std::string> selected;
};

struct CurationManifest {
  CurationConfig config;
  std::vector<CurationGroup> groups;

  std::vector<std::string> selected() const;
  nlohmann::json to_json() const;
};

CurationManifest curate(const std::vector<icon::VectorIcon>& icons, const CurationConfig& config);

}  // namespace evicon::curation
