#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "qhash/core.hpp"

namespace qhash {

/// Binarization transform: topk_hash of each raw embedding.
std::vector<HashCode> th_codes(const Matrix& embeddings, std::size_t k);
inline std::vector<HashCode> th_codes(const EmbeddingSet& e, std::size_t k) { return th_codes(e.data(), k); }

struct Codebook {
  Matrix centroids;  // one centroid per row
  std::size_t iterations = 0;
  double inertia = 0.0;
  // Inertia after each assignment step; non-increasing.
  std::vector<double> inertia_history;
};

struct KMeansConfig {
  std::size_t centroids = 0;
  std::size_t max_iter = 100;
  double tol = 1e-6;  // relative centroid shift
  std::uint64_t seed = 0;
};

/// Lloyd iterations from k-means++ seeding. An empty cluster takes the
/// point farthest from its centroid in the currently largest cluster.
Codebook kmeans(const Matrix& data, const KMeansConfig& cfg);
inline Codebook kmeans(const EmbeddingSet& e, const KMeansConfig& cfg) { return kmeans(e.data(), cfg); }

/// Negative Euclidean distance from x to every centroid.
std::vector<double> negative_distances(const Codebook& cb, std::span<const double> x);

/// Indices of the k nearest centroids, ties to the lower index.
std::vector<HashCode> vq_codes(const Matrix& embeddings, const Codebook& cb, std::size_t k);
inline std::vector<HashCode> vq_codes(const EmbeddingSet& e, const Codebook& cb, std::size_t k) {
  return vq_codes(e.data(), cb, k);
}

}  // namespace qhash
