#include "qhash/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qhash/codes.hpp"

namespace qhash {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double diff = a[j] - b[j];
    s += diff * diff;
  }
  return s;
}

void copy_row(const Matrix& from, std::size_t i, Matrix& to, std::size_t j) {
  const auto src = from.row(i);
  std::copy(src.begin(), src.end(), to.row(j).begin());
}

Matrix seed_plus_plus(const Matrix& data, std::size_t count, Rng& rng) {
  const std::size_t n = data.rows();
  Matrix centroids(count, data.cols());
  copy_row(data, rng.below(n), centroids, 0);
  std::vector<double> closest(n, std::numeric_limits<double>::infinity());
  for (std::size_t c = 1; c < count; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      closest[i] = std::min(closest[i], squared_distance(data.row(i), centroids.row(c - 1)));
      total += closest[i];
    }
    std::size_t pick = n - 1;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += closest[i];
        if (target < acc) {
          pick = i;
          break;
        }
      }
      // Guard against rounding at the top end landing on a zero-weight point.
      while (closest[pick] == 0.0 && pick > 0) --pick;
    } else {
      pick = rng.below(n);
    }
    copy_row(data, pick, centroids, c);
  }
  return centroids;
}

// Nearest centroid per item (ties to the lower index); returns the inertia.
double assign(const Matrix& data, const Matrix& centroids, std::vector<std::size_t>& owner,
              std::vector<double>& dist) {
  double inertia = 0.0;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    std::size_t best = 0;
    double best_d = squared_distance(data.row(i), centroids.row(0));
    for (std::size_t c = 1; c < centroids.rows(); ++c) {
      const double d = squared_distance(data.row(i), centroids.row(c));
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    owner[i] = best;
    dist[i] = best_d;
    inertia += best_d;
  }
  return inertia;
}

}  // namespace

std::vector<HashCode> th_codes(const Matrix& embeddings, std::size_t k) {
  if (k < 1 || k > embeddings.cols()) throw InvalidInput("th_codes needs 1 <= k <= d");
  std::vector<HashCode> out;
  out.reserve(embeddings.rows());
  for (std::size_t i = 0; i < embeddings.rows(); ++i) out.push_back(topk_hash(embeddings.row(i), k));
  return out;
}

Codebook kmeans(const Matrix& data, const KMeansConfig& cfg) {
  const std::size_t n = data.rows();
  const std::size_t m = cfg.centroids;
  if (m < 1) throw InvalidInput("kmeans needs at least one centroid");
  if (n < m) throw InvalidInput("kmeans needs at least as many points as centroids");
  if (cfg.max_iter < 1) throw InvalidInput("kmeans max_iter must be >= 1");
  if (!(cfg.tol >= 0.0)) throw InvalidInput("kmeans tol must be >= 0");
  if (!data.all_finite()) throw InvalidInput("kmeans input must be finite");

  Rng rng(cfg.seed);
  Codebook cb;
  cb.centroids = seed_plus_plus(data, m, rng);
  std::vector<std::size_t> owner(n);
  std::vector<double> dist(n);

  for (std::size_t iter = 0; iter < cfg.max_iter; ++iter) {
    cb.inertia_history.push_back(assign(data, cb.centroids, owner, dist));
    cb.iterations = iter + 1;

    Matrix next(m, data.cols());
    std::vector<std::size_t> sizes(m, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++sizes[owner[i]];
      auto row = next.row(owner[i]);
      const auto x = data.row(i);
      for (std::size_t j = 0; j < x.size(); ++j) row[j] += x[j];
    }
    for (std::size_t c = 0; c < m; ++c) {
      if (sizes[c] == 0) continue;
      for (double& v : next.row(c)) v /= static_cast<double>(sizes[c]);
    }
    for (std::size_t c = 0; c < m; ++c) {
      if (sizes[c] != 0) continue;
      const auto largest = static_cast<std::size_t>(
          std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (owner[i] == largest && (far == n || dist[i] > dist[far])) far = i;
      }
      copy_row(data, far, next, c);
      owner[far] = c;
      dist[far] = 0.0;
      --sizes[largest];
      sizes[c] = 1;
    }

    double shift = 0.0;
    double scale = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      shift += squared_distance(next.row(c), cb.centroids.row(c));
      for (double v : cb.centroids.row(c)) scale += v * v;
    }
    cb.centroids = std::move(next);
    if (std::sqrt(shift) <= cfg.tol * std::max(std::sqrt(scale), 1e-300)) break;
  }
  cb.inertia = assign(data, cb.centroids, owner, dist);
  return cb;
}

std::vector<double> negative_distances(const Codebook& cb, std::span<const double> x) {
  if (x.size() != cb.centroids.cols()) throw InvalidInput("embedding dimension does not match codebook");
  std::vector<double> out(cb.centroids.rows());
  for (std::size_t c = 0; c < out.size(); ++c) out[c] = -std::sqrt(squared_distance(x, cb.centroids.row(c)));
  return out;
}

std::vector<HashCode> vq_codes(const Matrix& embeddings, const Codebook& cb, std::size_t k) {
  if (k < 1 || k > cb.centroids.rows()) throw InvalidInput("vq_codes needs 1 <= k <= number of centroids");
  std::vector<HashCode> out;
  out.reserve(embeddings.rows());
  for (std::size_t i = 0; i < embeddings.rows(); ++i) {
    out.push_back(topk_hash(negative_distances(cb, embeddings.row(i)), k));
  }
  return out;
}

}  // namespace qhash
