#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "qhash/core.hpp"

namespace qhash {

/// A mini-batch: embeddings f(x; theta), labels and the (fixed) hash codes.
struct Batch {
  Matrix embeddings;  // b x d
  std::vector<int> labels;
  std::vector<HashCode> codes;

  std::size_t size() const { return embeddings.rows(); }
  void validate() const;
};

struct LossConfig {
  double margin_alpha = 1.0;
  double npairs_reg_lambda = 0.002;
  // Triplet mode only: project embeddings onto the unit sphere before masking.
  bool normalize = true;

  void validate() const;
};

struct LossResult {
  double loss = 0.0;
  Matrix grad;         // d loss / d embeddings, b x d
  bool valid = true;   // false when the batch produced no loss terms
  std::size_t terms = 0;
};

/// L1 norm of (f_i - f_j) restricted to the union of the two codes' bits.
double hash_distance(std::span<const double> f_i, std::span<const double> f_j, const HashCode& h_i,
                     const HashCode& h_j);

/// Subgradient of hash_distance with respect to f_i (sign(0) taken as 0).
std::vector<double> hash_distance_grad(std::span<const double> f_i, std::span<const double> f_j,
                                       const HashCode& h_i, const HashCode& h_j);

struct Triplet {
  std::size_t anchor;
  std::size_t positive;
  std::size_t negative;
};

/// For every ordered anchor/positive pair: the closest negative that is
/// strictly farther than the positive, else the farthest negative. Ties go
/// to the lower item index.
std::vector<Triplet> mine_semi_hard(const Matrix& embeddings, std::span<const int> labels,
                                    std::span<const HashCode> codes);

/// Mean hinge [d_ap + alpha - d_an]_+ over the mined triplets.
LossResult triplet_loss(const Batch& batch, const LossConfig& cfg);
/// Same loss over a caller-supplied triplet set (no mining).
LossResult triplet_loss(const Batch& batch, const LossConfig& cfg, std::span<const Triplet> triplets);

/// Each class appears exactly twice; returns (anchor, positive) index pairs
/// in order of the anchors' first appearance.
std::vector<std::pair<std::size_t, std::size_t>> npairs_layout(std::span<const int> labels);

/// Softmax over -d(anchor, positive_c) across the batch's positives, plus
/// (lambda / b) * sum ||f_i||^2.
LossResult npairs_loss(const Batch& batch, const LossConfig& cfg);

using LossFn = std::function<LossResult(const Batch&, const LossConfig&)>;

/// Largest relative error between the analytic gradient and central
/// differences, over coordinates where either exceeds 1e-6 in magnitude.
double finite_diff_check(const LossFn& loss, const Batch& batch, const LossConfig& cfg,
                         double epsilon);

}  // namespace qhash
