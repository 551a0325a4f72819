#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "evicon/embedding.hpp"
#include "json.hpp"

namespace evicon::distinct {

using embed::Embedding;

/// Sum of squared Euclidean distances from `target` to every member of
/// `others` (the target itself must not be in `others`). 0 for an empty set.
double phi_vd(const std::vector<Embedding>& others, const Embedding& target);

/// phi_vd of set[target] against the rest of the set.
double phi_vd_in_set(const std::vector<Embedding>& set, std::size_t target);

/// raw / (4 (size - 1)); 4 is the largest squared distance between unit vectors.
double normalize_phi_vd(double raw, std::size_t set_size);

struct ScoreWeights {
  double w_sd = 1.0 / 3.0;
  double w_fam = 1.0 / 3.0;
  double w_vd = 1.0 / 3.0;

  /// Throws evicon::Error("invalid_weights") for negative or all-zero weights.
  void validate() const;
};

/// w_sd * phi_sd + w_fam * phi_fam + w_vd * phi_vd.
double usability_score(const ScoreWeights& w, double phi_sd, double phi_fam, double phi_vd_normalized);

struct ScoreTerms {
  double phi_sd = 0.0;
  double phi_fam = 0.0;
  double phi_vd = 0.0;  // normalized
};

/// Index of the highest-scoring candidate; ties go to the lowest index.
std::size_t best_candidate(const ScoreWeights& w, const std::vector<ScoreTerms>& candidates);

Eigen::MatrixXd mutual_distance_matrix(const std::vector<Embedding>& embeddings);

double cosine_distance(const Embedding& a, const Embedding& b);

enum class ProjectionMethod { pca2d, neighbor_embed };

std::string to_string(ProjectionMethod m);
ProjectionMethod parse_projection_method(const std::string& s);

inline constexpr std::size_t kNeighborCount = 5;
inline constexpr std::size_t kLayoutSteps = 200;

struct Projection2D {
  ProjectionMethod method = ProjectionMethod::pca2d;
  std::vector<std::array<double, 2>> coordinates;
  std::uint64_t seed = 0;
};

/// pca2d: coordinates on the two leading principal axes. neighbor_embed:
/// k-NN graph layout with spring attraction along edges and repulsion from
/// sampled non-neighbors, started from the pca2d layout.
Projection2D project_2d(const std::vector<Embedding>& embeddings, ProjectionMethod method, std::uint64_t seed);

inline constexpr double kDefaultWarningThreshold = 0.3;

struct GraphNode {
  std::string id;
  double x = 0.0;
  double y = 0.0;
};

struct GraphEdge {
  std::size_t a = 0;
  std::size_t b = 0;
  double distance = 0.0;  // cosine distance in the embedding space
  bool warning = false;
};

struct DistinguishabilityGraph {
  std::vector<GraphNode> nodes;
  std::vector<GraphEdge> edges;

  /// {"nodes": [{"id","x","y"}], "edges": [{"a","b","distance","warning"}]},
  /// edge endpoints given as node ids.
  nlohmann::json to_json() const;
};

/// Complete graph; an edge is flagged iff its cosine distance < threshold.
DistinguishabilityGraph build_graph(const std::vector<std::string>& ids, const std::vector<Embedding>& embeddings,
                                    const Projection2D& projection, double threshold = kDefaultWarningThreshold);

}  // namespace evicon::distinct
