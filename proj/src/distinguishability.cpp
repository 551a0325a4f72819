#include "evicon/distinguishability.hpp"

#include <algorithm>
#include <cmath>

#include "evicon/error.hpp"
#include "evicon/rng.hpp"

namespace evicon::distinct {

double phi_vd(const std::vector<Embedding>& others, const Embedding& target) {
  double sum = 0.0;
  for (const auto& e : others) {
    if (e.size() != target.size()) throw Error("dimension_mismatch", "phi_vd: embedding size mismatch");
    sum += (target - e).squaredNorm();
  }
  return sum;
}

double phi_vd_in_set(const std::vector<Embedding>& set, std::size_t target) {
  if (target >= set.size()) throw Error("invalid_argument", "phi_vd_in_set: target out of range");
  std::vector<Embedding> others;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (i != target) others.push_back(set[i]);
  }
  return phi_vd(others, set[target]);
}

double normalize_phi_vd(double raw, std::size_t set_size) {
  if (set_size < 2) throw Error("invalid_argument", "normalize_phi_vd: set size must be >= 2");
  return std::clamp(raw / (4.0 * static_cast<double>(set_size - 1)), 0.0, 1.0);
}

void ScoreWeights::validate() const {
  if (!(w_sd >= 0.0 && w_fam >= 0.0 && w_vd >= 0.0)) throw Error("invalid_weights", "score weights must be non-negative");
  if (w_sd + w_fam + w_vd <= 0.0) throw Error("invalid_weights", "score weights must not all be zero");
}

double usability_score(const ScoreWeights& w, double phi_sd, double phi_fam, double phi_vd_normalized) {
  w.validate();
  return w.w_sd * phi_sd + w.w_fam * phi_fam + w.w_vd * phi_vd_normalized;
}

std::size_t best_candidate(const ScoreWeights& w, const std::vector<ScoreTerms>& candidates) {
  if (candidates.empty()) throw Error("invalid_argument", "best_candidate: no candidates");
  std::size_t best = 0;
  double best_score = -INFINITY;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double s = usability_score(w, candidates[i].phi_sd, candidates[i].phi_fam, candidates[i].phi_vd);
    if (s > best_score) {
      best_score = s;
      best = i;
    }
  }
  return best;
}

Eigen::MatrixXd mutual_distance_matrix(const std::vector<Embedding>& embeddings) {
  const auto n = static_cast<Eigen::Index>(embeddings.size());
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const auto& a = embeddings[static_cast<std::size_t>(i)];
      const auto& b = embeddings[static_cast<std::size_t>(j)];
      if (a.size() != b.size()) throw Error("dimension_mismatch", "mutual_distance_matrix: size mismatch");
      d(i, j) = d(j, i) = (a - b).norm();
    }
  }
  return d;
}

double cosine_distance(const Embedding& a, const Embedding& b) { return 1.0 - embed::cosine_similarity(a, b); }

std::string to_string(ProjectionMethod m) { return m == ProjectionMethod::pca2d ? "pca2d" : "neighbor-embed"; }

ProjectionMethod parse_projection_method(const std::string& s) {
  if (s == "pca2d") return ProjectionMethod::pca2d;
  if (s == "neighbor-embed") return ProjectionMethod::neighbor_embed;
  throw Error("invalid_argument", "unknown projection method '" + s + "'");
}

namespace {

std::vector<std::array<double, 2>> pca_layout(const std::vector<Embedding>& embeddings) {
  const auto n = static_cast<Eigen::Index>(embeddings.size());
  const Eigen::Index dim = embeddings.front().size();
  Eigen::MatrixXd x(n, dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (embeddings[static_cast<std::size_t>(i)].size() != dim) throw Error("dimension_mismatch", "project_2d: size mismatch");
    x.row(i) = embeddings[static_cast<std::size_t>(i)].transpose();
  }
  const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(centered.transpose() * centered);
  std::vector<std::array<double, 2>> out(static_cast<std::size_t>(n), {0.0, 0.0});
  for (Eigen::Index axis = 0; axis < std::min<Eigen::Index>(2, dim); ++axis) {
    Eigen::VectorXd v = solver.eigenvectors().col(dim - 1 - axis);
    Eigen::Index arg;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    const Eigen::VectorXd coord = centered * v;
    for (Eigen::Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)][static_cast<std::size_t>(axis)] = coord(i);
  }
  return out;
}

std::vector<std::array<double, 2>> neighbor_layout(const std::vector<Embedding>& embeddings, std::uint64_t seed) {
  const std::size_t n = embeddings.size();
  const Eigen::MatrixXd dist = mutual_distance_matrix(embeddings);
  const std::size_t k = std::min(kNeighborCount, n - 1);

  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::vector<std::vector<bool>> adjacent(n, std::vector<bool>(n, false));
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> order;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) order.push_back(j);
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a)) <
             dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(b));
    });
    for (std::size_t r = 0; r < k; ++r) {
      const std::size_t j = order[r];
      if (!adjacent[i][j]) {
        adjacent[i][j] = adjacent[j][i] = true;
        edges.emplace_back(std::min(i, j), std::max(i, j));
      }
    }
  }

  // Start from the PCA layout rescaled to a span of ~10 units plus a little
  // seeded noise so coincident points can separate.
  auto y = pca_layout(embeddings);
  double extent = 0.0;
  for (const auto& p : y) extent = std::max({extent, std::abs(p[0]), std::abs(p[1])});
  const double scale = extent > 0.0 ? 5.0 / extent : 1.0;
  Rng rng(seed);
  for (auto& p : y) {
    p[0] = p[0] * scale + 1e-3 * rng.normal();
    p[1] = p[1] * scale + 1e-3 * rng.normal();
  }

  const std::size_t negatives = 5;
  auto clip = [](double g) { return std::clamp(g, -4.0, 4.0); };
  for (std::size_t step = 0; step < kLayoutSteps; ++step) {
    const double lr = 1.0 - static_cast<double>(step) / static_cast<double>(kLayoutSteps);
    for (const auto& [i, j] : edges) {
      const double dx = y[i][0] - y[j][0];
      const double dy = y[i][1] - y[j][1];
      const double d2 = dx * dx + dy * dy;
      const double coeff = -2.0 / (1.0 + d2);
      const double gx = clip(coeff * dx), gy = clip(coeff * dy);
      y[i][0] += lr * gx;
      y[i][1] += lr * gy;
      y[j][0] -= lr * gx;
      y[j][1] -= lr * gy;
      for (std::size_t s = 0; s < negatives && n > 2; ++s) {
        const std::size_t m = rng.index(n);
        if (m == i || adjacent[i][m]) continue;
        const double ex = y[i][0] - y[m][0];
        const double ey = y[i][1] - y[m][1];
        const double e2 = ex * ex + ey * ey;
        const double rep = 2.0 / ((1e-3 + e2) * (1.0 + e2));
        y[i][0] += lr * clip(rep * ex);
        y[i][1] += lr * clip(rep * ey);
      }
    }
  }
  return y;
}

}  // namespace

Projection2D project_2d(const std::vector<Embedding>& embeddings, ProjectionMethod method, std::uint64_t seed) {
  if (embeddings.size() < 2) throw Error("invalid_argument", "project_2d: need at least 2 embeddings");
  Projection2D p;
  p.method = method;
  p.seed = seed;
  p.coordinates = method == ProjectionMethod::pca2d ? pca_layout(embeddings) : neighbor_layout(embeddings, seed);
  return p;
}

nlohmann::json DistinguishabilityGraph::to_json() const {
  nlohmann::json n = nlohmann::json::array();
  for (const auto& node : nodes) n.push_back({{"id", node.id}, {"x", node.x}, {"y", node.y}});
  nlohmann::json e = nlohmann::json::array();
  for (const auto& edge : edges) {
    e.push_back({{"a", nodes[edge.a].id}, {"b", nodes[edge.b].id}, {"distance", edge.distance}, {"warning", edge.warning}});
  }
  return {{"nodes", std::move(n)}, {"edges", std::move(e)}};
}

DistinguishabilityGraph build_graph(const std::vector<std::string>& ids, const std::vector<Embedding>& embeddings,
                                    const Projection2D& projection, double threshold) {
  if (ids.empty()) throw Error("invalid_argument", "build_graph: need at least one icon");
  if (ids.size() != embeddings.size()) throw Error("invalid_argument", "build_graph: ids/embeddings size mismatch");
  if (ids.size() > 1 && projection.coordinates.size() != ids.size()) {
    throw Error("invalid_argument", "build_graph: projection does not match the icon set");
  }
  DistinguishabilityGraph g;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto xy = i < projection.coordinates.size() ? projection.coordinates[i] : std::array<double, 2>{0.0, 0.0};
    g.nodes.push_back({ids[i], xy[0], xy[1]});
  }
  for (std::size_t a = 0; a < ids.size(); ++a) {
    for (std::size_t b = a + 1; b < ids.size(); ++b) {
      const double d = cosine_distance(embeddings[a], embeddings[b]);
      g.edges.push_back({a, b, d, d < threshold});
    }
  }
  return g;
}

}  // namespace evicon::distinct
