#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "qhash/codes.hpp"
#include "qhash/core.hpp"
#include "qhash/metric.hpp"

namespace qhash {

enum class LossKind { triplet, npairs };

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double step = 1e-2;
};

struct TrainConfig {
  std::size_t d = 16;
  std::size_t k = 1;
  // Empty: per-batch default (see default_lambda). Otherwise length d.
  std::vector<double> lambda;
  LossKind loss_kind = LossKind::triplet;
  LossConfig loss_cfg;
  // Weight of the code objective in the joint objective. The alternating
  // loop solves the two subproblems in turn, so this is recorded only.
  double gamma = 1.0;
  std::size_t batch_classes = 8;
  std::size_t per_class = 4;
  std::size_t max_iter = 300;
  AdamConfig adam;
  std::int64_t cost_scale = kDefaultCostScale;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Single linear projection features -> embedding, trained with Adam.
class LinearModel {
 public:
  LinearModel(std::size_t input_dim, std::size_t embed_dim, std::uint64_t seed);

  std::size_t input_dim() const { return weight_.rows(); }
  std::size_t embed_dim() const { return weight_.cols(); }
  const Matrix& weight() const { return weight_; }
  std::size_t steps() const { return steps_; }

  /// rows(features) x embed_dim.
  Matrix embed(const Matrix& features) const;
  /// d loss / d weight given d loss / d embeddings.
  Matrix weight_gradient(const Matrix& features, const Matrix& embedding_grad) const;
  void adam_update(const Matrix& weight_grad, const AdamConfig& cfg);

  friend bool operator==(const LinearModel&, const LinearModel&) = default;

 private:
  Matrix weight_;
  Matrix first_moment_;
  Matrix second_moment_;
  std::size_t steps_ = 0;
};

struct SyntheticDataset {
  Matrix features;  // n x input_dim
  std::vector<int> labels;
  Matrix centers;   // classes x input_dim
  std::size_t classes = 0;
  double spread = 0.0;
  std::uint64_t seed = 0;
};

/// Gaussian blobs: class c is centred at a standard-normal draw, items add
/// spread * N(0, I). Items are stored class-major.
SyntheticDataset make_blobs(std::size_t classes, std::size_t per_class, std::size_t input_dim,
                            double spread, std::uint64_t seed);

/// Splits every class into its first `head_per_class` items and the rest.
std::pair<SyntheticDataset, SyntheticDataset> split_per_class(const SyntheticDataset& ds,
                                                              std::size_t head_per_class);

struct StepResult {
  double loss = 0.0;
  bool loss_valid = true;
  std::vector<HashCode> codes;  // per batch item
  double g_value = 0.0;
  double bound_gap = 0.0;
};

/// One alternating step: class means -> exact code assignment -> metric
/// loss under the fixed codes -> Adam update of the model.
StepResult train_step(LinearModel& model, const Matrix& batch_features,
                      std::span<const int> batch_labels, const TrainConfig& cfg);

struct HistoryRow {
  std::size_t iter = 0;
  double loss = 0.0;
  double g_value = 0.0;
  double bound_gap = 0.0;

  friend bool operator==(const HistoryRow&, const HistoryRow&) = default;
};

struct TrainResult {
  LinearModel model;
  std::vector<HistoryRow> history;
};

TrainResult train(const Matrix& features, std::span<const int> labels, const TrainConfig& cfg);
TrainResult train(const SyntheticDataset& ds, const TrainConfig& cfg);

/// Per-item hash codes topk_hash(f(x)).
std::vector<HashCode> hash_items(const LinearModel& model, const Matrix& features, std::size_t k);

void write_history_csv(std::ostream& os, std::span<const HistoryRow> history);

}  // namespace qhash
