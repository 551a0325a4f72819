#include "evicon/curation.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <unordered_map>

#include "evicon/error.hpp"
#include "evicon/rng.hpp"

namespace evicon::curation {

namespace {

std::size_t hash_pixels(const std::vector<double>& pixels) {
  std::size_t h = 1469598103934665603ULL;
  for (double p : pixels) {
    h ^= std::hash<double>{}(p);
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

std::vector<std::size_t> dedup(const std::vector<icon::GrayscaleImage>& images) {
  std::vector<std::size_t> kept;
  if (images.empty()) return kept;
  const std::size_t w = images.front().width();
  const std::size_t h = images.front().height();
  std::unordered_multimap<std::size_t, std::size_t> seen;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].width() != w || images[i].height() != h) {
      throw Error("dimension_mismatch", "dedup: image " + std::to_string(i) + " is " +
                                            std::to_string(images[i].width()) + "x" +
                                            std::to_string(images[i].height()) + ", expected " +
                                            std::to_string(w) + "x" + std::to_string(h));
    }
    const std::size_t key = hash_pixels(images[i].pixels());
    auto [lo, hi] = seen.equal_range(key);
    const bool duplicate = std::any_of(lo, hi, [&](const auto& entry) {
      return images[entry.second].pixels() == images[i].pixels();
    });
    if (!duplicate) {
      seen.emplace(key, i);
      kept.push_back(i);
    }
  }
  return kept;
}

double PcaModel::explained_ratio() const {
  return total_variance > 0.0 ? explained_variance.sum() / total_variance : 0.0;
}

Eigen::MatrixXd image_matrix(const std::vector<icon::GrayscaleImage>& images) {
  if (images.empty()) return {};
  const std::size_t p = images.front().size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(images.size()), static_cast<Eigen::Index>(p));
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].size() != p) {
      throw Error("dimension_mismatch", "image " + std::to_string(i) + " has a different pixel count");
    }
    for (std::size_t j = 0; j < p; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = images[i].pixels()[j];
  }
  return m;
}

PcaModel fit_pca(const Eigen::MatrixXd& samples, double variance_target) {
  if (samples.rows() < 2) throw Error("invalid_argument", "fit_pca: need at least 2 samples");
  if (!(variance_target > 0.0 && variance_target <= 1.0)) {
    throw Error("invalid_argument", "fit_pca: variance_target must be in (0, 1]");
  }
  const Eigen::Index n = samples.rows();
  const Eigen::Index p = samples.cols();
  PcaModel model;
  model.variance_target = variance_target;
  model.mean = samples.colwise().mean().transpose();
  const Eigen::MatrixXd centered = samples.rowwise() - model.mean.transpose();
  const double scale = 1.0 / static_cast<double>(n - 1);

  // Eigenpairs sorted by descending eigenvalue; columns of `vectors` are
  // unit principal axes in pixel space.
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
  if (n - 1 < p) {
    // Fewer samples than dimensions: decompose the n x n Gram matrix and lift.
    const Eigen::MatrixXd gram = centered * centered.transpose() * scale;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
    const Eigen::VectorXd ev = solver.eigenvalues().reverse();
    const Eigen::MatrixXd u = solver.eigenvectors().rowwise().reverse();
    const double tol = std::max(ev(0), 0.0) * 1e-12;
    Eigen::Index keep = 0;
    while (keep < ev.size() && ev(keep) > tol) ++keep;
    values = ev.head(keep);
    vectors.resize(p, keep);
    for (Eigen::Index c = 0; c < keep; ++c) {
      vectors.col(c) = centered.transpose() * u.col(c) / std::sqrt(values(c) / scale);
    }
  } else {
    const Eigen::MatrixXd cov = centered.transpose() * centered * scale;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    values = solver.eigenvalues().reverse().cwiseMax(0.0);
    vectors = solver.eigenvectors().rowwise().reverse();
  }

  model.total_variance = centered.squaredNorm() * scale;
  if (!(model.total_variance > 1e-12) || values.size() == 0) {
    throw Error("degenerate_dataset", "degenerate dataset");
  }

  const double needed = variance_target * model.total_variance * (1.0 - 1e-12);
  Eigen::Index d = 0;
  double cumulative = 0.0;
  while (d < values.size() && cumulative < needed) cumulative += values(d++);

  model.explained_variance = values.head(d);
  model.components.resize(d, p);
  for (Eigen::Index c = 0; c < d; ++c) {
    Eigen::VectorXd axis = vectors.col(c);
    Eigen::Index arg;
    axis.cwiseAbs().maxCoeff(&arg);
    if (axis(arg) < 0.0) axis = -axis;
    model.components.row(c) = axis.transpose();
  }
  return model;
}

PcaModel fit_pca(const std::vector<icon::GrayscaleImage>& images, double variance_target) {
  return fit_pca(image_matrix(images), variance_target);
}

Eigen::VectorXd project(const PcaModel& pca, const Eigen::VectorXd& sample) {
  if (sample.size() != pca.mean.size()) {
    throw Error("dimension_mismatch", "project: sample has " + std::to_string(sample.size()) +
                                          " values, model expects " + std::to_string(pca.mean.size()));
  }
  return pca.components * (sample - pca.mean);
}

Eigen::VectorXd project(const PcaModel& pca, const icon::GrayscaleImage& image) {
  const auto& px = image.pixels();
  return project(pca, Eigen::Map<const Eigen::VectorXd>(px.data(), static_cast<Eigen::Index>(px.size())));
}

Eigen::MatrixXd project_all(const PcaModel& pca, const Eigen::MatrixXd& samples) {
  if (samples.cols() != pca.mean.size()) throw Error("dimension_mismatch", "project_all: width mismatch");
  return (samples.rowwise() - pca.mean.transpose()) * pca.components.transpose();
}

Eigen::VectorXd reconstruct(const PcaModel& pca, const Eigen::VectorXd& features) {
  return pca.mean + pca.components.transpose() * features;
}

namespace {

double assign_points(const Eigen::MatrixXd& x, const Eigen::MatrixXd& centroids,
                     std::vector<std::size_t>& assignment) {
  double wcss = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    std::size_t best = 0;
    double best_d = INFINITY;
    for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
      const double d = (x.row(i) - centroids.row(c)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = static_cast<std::size_t>(c);
      }
    }
    assignment[static_cast<std::size_t>(i)] = best;
    wcss += best_d;
  }
  return wcss;
}

double total_wcss(const Eigen::MatrixXd& x, const Eigen::MatrixXd& centroids,
                  const std::vector<std::size_t>& assignment) {
  double wcss = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    wcss += (x.row(i) - centroids.row(static_cast<Eigen::Index>(assignment[static_cast<std::size_t>(i)]))).squaredNorm();
  }
  return wcss;
}

Eigen::MatrixXd seed_plus_plus(const Eigen::MatrixXd& x, std::size_t k, Rng& rng) {
  const auto n = static_cast<std::size_t>(x.rows());
  Eigen::MatrixXd centroids(static_cast<Eigen::Index>(k), x.cols());
  std::vector<bool> chosen(n, false);
  std::size_t first = rng.index(n);
  chosen[first] = true;
  centroids.row(0) = x.row(static_cast<Eigen::Index>(first));
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = (x.row(static_cast<Eigen::Index>(i)) - centroids.row(0)).squaredNorm();

  for (std::size_t c = 1; c < k; ++c) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::size_t pick = n;
    if (total > 0.0) {
      double r = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        pick = i;
        r -= d2[i];
        if (r < 0.0) break;
      }
    } else {
      for (std::size_t i = 0; i < n && pick == n; ++i) {
        if (!chosen[i]) pick = i;
      }
      if (pick == n) pick = 0;
    }
    chosen[pick] = true;
    centroids.row(static_cast<Eigen::Index>(c)) = x.row(static_cast<Eigen::Index>(pick));
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (x.row(static_cast<Eigen::Index>(i)) - centroids.row(static_cast<Eigen::Index>(c))).squaredNorm());
    }
  }
  return centroids;
}

}  // namespace

Clustering kmeans(const Eigen::MatrixXd& features, std::size_t k, std::uint64_t seed,
                  std::size_t max_iterations) {
  const auto n = static_cast<std::size_t>(features.rows());
  if (k == 0) throw Error("invalid_argument", "kmeans: k must be >= 1");
  if (k > n) {
    throw Error("invalid_argument", "kmeans: k=" + std::to_string(k) + " exceeds point count " + std::to_string(n));
  }
  Rng rng(seed);
  Clustering out;
  out.k = k;
  out.centroids = seed_plus_plus(features, k, rng);
  out.assignment.assign(n, 0);
  out.wcss = assign_points(features, out.centroids, out.assignment);
  out.wcss_history.push_back(out.wcss);

  std::vector<std::size_t> next(n, 0);
  while (out.iterations < max_iterations) {
    ++out.iterations;
    // Update step.
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), features.cols());
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums.row(static_cast<Eigen::Index>(out.assignment[i])) += features.row(static_cast<Eigen::Index>(i));
      ++counts[out.assignment[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) out.centroids.row(static_cast<Eigen::Index>(c)) = sums.row(static_cast<Eigen::Index>(c)) / static_cast<double>(counts[c]);
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) continue;
      // Re-seed an empty cluster at the point farthest from its own centroid.
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[out.assignment[i]] <= 1) continue;
        const double d = (features.row(static_cast<Eigen::Index>(i)) -
                          out.centroids.row(static_cast<Eigen::Index>(out.assignment[i]))).squaredNorm();
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      if (far_d < 0.0) continue;
      --counts[out.assignment[far]];
      out.assignment[far] = c;
      counts[c] = 1;
      out.centroids.row(static_cast<Eigen::Index>(c)) = features.row(static_cast<Eigen::Index>(far));
    }
    // Assignment step.
    const double wcss = assign_points(features, out.centroids, next);
    out.wcss_history.push_back(wcss);
    const bool fixpoint = next == out.assignment;
    out.assignment = next;
    out.wcss = wcss;
    if (fixpoint) break;
  }
  out.wcss = total_wcss(features, out.centroids, out.assignment);
  return out;
}

std::size_t elbow_from_wcss(const std::vector<double>& wcss, std::size_t k_min) {
  if (wcss.size() < 3) return k_min;
  std::size_t best = 1;
  double best_curvature = -INFINITY;
  for (std::size_t i = 1; i + 1 < wcss.size(); ++i) {
    const double curvature = wcss[i - 1] - 2.0 * wcss[i] + wcss[i + 1];
    if (curvature > best_curvature) {
      best_curvature = curvature;
      best = i;
    }
  }
  return k_min + best;
}

ElbowResult elbow_k(const Eigen::MatrixXd& features, std::size_t k_min, std::size_t k_max,
                    std::uint64_t seed) {
  if (k_min < 1 || k_min >= k_max || k_max > static_cast<std::size_t>(features.rows())) {
    throw Error("invalid_argument", "elbow_k: need 1 <= k_min < k_max <= point count");
  }
  ElbowResult out;
  for (std::size_t k = k_min; k <= k_max; ++k) out.wcss.push_back(kmeans(features, k, seed).wcss);
  out.k = elbow_from_wcss(out.wcss, k_min);
  return out;
}

std::vector<std::size_t> sample_representatives(const Clustering& clustering, std::size_t per_cluster,
                                                std::uint64_t seed) {
  if (per_cluster == 0) throw Error("invalid_argument", "sample_representatives: per_cluster must be >= 1");
  std::vector<std::vector<std::size_t>> members(clustering.k);
  for (std::size_t i = 0; i < clustering.assignment.size(); ++i) {
    members.at(clustering.assignment[i]).push_back(i);
  }
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < members.size(); ++c) {
    auto& m = members[c];
    if (m.size() > per_cluster) {
      Rng rng(derive_seed(seed, c));
      rng.shuffle(m);
      m.resize(per_cluster);
      std::sort(m.begin(), m.end());
    }
    out.insert(out.end(), m.begin(), m.end());
  }
  return out;
}

std::vector<std::string> CurationManifest::selected() const {
  std::vector<std::string> out;
  for (const auto& g : groups) out.insert(out.end(), g.selected.begin(), g.selected.end());
  return out;
}

nlohmann::json CurationManifest::to_json() const {
  nlohmann::json groups_json = nlohmann::json::array();
  for (const auto& g : groups) {
    groups_json.push_back({{"tag", g.tag},
                           {"input", g.input_count},
                           {"unique", g.unique_count},
                           {"dims", g.dims},
                           {"explained_ratio", g.explained_ratio},
                           {"k", g.k},
                           {"cluster_sizes", g.cluster_sizes},
                           {"selected", g.selected}});
  }
  return {{"pca",
           {{"mode", config.per_tag ? "per-tag" : "global"},
            {"variance_target", config.variance_target},
            {"resolution", config.resolution},
            {"groups", std::move(groups_json)}}},
          {"k", config.k},
          {"per_cluster", config.per_cluster},
          {"seed", config.seed},
          {"selected", selected()}};
}

namespace {

CurationGroup curate_group(const std::string& tag, const std::vector<const icon::VectorIcon*>& icons,
                           const CurationConfig& config, std::uint64_t seed) {
  CurationGroup group;
  group.tag = tag;
  group.input_count = icons.size();
  std::vector<icon::GrayscaleImage> rasters;
  rasters.reserve(icons.size());
  for (const auto* ic : icons) rasters.push_back(icon::canonical_raster(*ic, config.resolution));
  const auto unique = dedup(rasters);
  group.unique_count = unique.size();

  auto select_all = [&] {
    for (std::size_t i : unique) group.selected.push_back(icons[i]->id);
    group.k = unique.empty() ? 0 : 1;
    group.cluster_sizes = {unique.size()};
    return group;
  };
  if (unique.size() < 2) return select_all();

  std::vector<icon::GrayscaleImage> kept;
  for (std::size_t i : unique) kept.push_back(rasters[i]);
  const Eigen::MatrixXd x = image_matrix(kept);
  PcaModel pca;
  try {
    pca = fit_pca(x, config.variance_target);
  } catch (const Error& e) {
    if (e.code() != "degenerate_dataset") throw;
    return select_all();
  }
  group.dims = pca.dims();
  group.explained_ratio = pca.explained_ratio();
  const Eigen::MatrixXd features = project_all(pca, x);

  std::size_t k = config.k;
  if (k == 0) {
    const std::size_t k_max = std::min(config.elbow_max_k, unique.size());
    k = k_max > 1 ? elbow_k(features, 1, k_max, seed).k : 1;
  }
  k = std::min(k, unique.size());
  const Clustering clustering = kmeans(features, k, seed);
  group.k = k;
  group.cluster_sizes.assign(k, 0);
  for (std::size_t a : clustering.assignment) ++group.cluster_sizes[a];
  for (std::size_t local : sample_representatives(clustering, config.per_cluster, seed)) {
    group.selected.push_back(icons[unique[local]]->id);
  }
  return group;
}

}  // namespace

CurationManifest curate(const std::vector<icon::VectorIcon>& icons, const CurationConfig& config) {
  CurationManifest manifest;
  manifest.config = config;
  if (config.per_tag) {
    std::map<std::string, std::vector<const icon::VectorIcon*>> by_tag;
    for (const auto& ic : icons) by_tag[ic.tags.front()].push_back(&ic);
    std::uint64_t stream = 0;
    for (const auto& [tag, members] : by_tag) {
      manifest.groups.push_back(curate_group(tag, members, config, derive_seed(config.seed, stream++)));
    }
  } else {
    std::vector<const icon::VectorIcon*> all;
    for (const auto& ic : icons) all.push_back(&ic);
    manifest.groups.push_back(curate_group("", all, config, config.seed));
  }
  return manifest;
}

}  // namespace evicon::curation
