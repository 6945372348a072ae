#include "qhash/trainer.hpp"

#include <cmath>
#include <ostream>

namespace qhash {

namespace {

Matrix normalize_rows(const Matrix& m) {
  Matrix out = m;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    double s = 0.0;
    for (double v : out.row(i)) s += v * v;
    const double norm = std::sqrt(s);
    if (norm == 0.0) throw InvalidInput("cannot normalize a zero embedding");
    for (double& v : out.row(i)) v /= norm;
  }
  return out;
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = m.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (k < 1 || k > d) throw InvalidInput("train config needs 1 <= k <= d");
  if (!lambda.empty() && lambda.size() != d) throw InvalidInput("lambda must be empty or length d");
  if (max_iter < 1) throw InvalidInput("max_iter must be >= 1");
  if (batch_classes < 2) throw InvalidInput("batch_classes must be >= 2");
  if (per_class < 2) throw InvalidInput("per_class must be >= 2");
  if (loss_kind == LossKind::npairs && per_class != 2) {
    throw InvalidInput("npairs batches need exactly 2 items per class");
  }
  if (!(adam.step > 0.0)) throw InvalidInput("Adam step size must be positive");
  loss_cfg.validate();
}

LinearModel::LinearModel(std::size_t input_dim, std::size_t embed_dim, std::uint64_t seed)
    : weight_(input_dim, embed_dim),
      first_moment_(input_dim, embed_dim),
      second_moment_(input_dim, embed_dim) {
  if (input_dim == 0 || embed_dim == 0) throw InvalidInput("model dimensions must be positive");
  Rng rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(input_dim));
  for (double& w : weight_.values()) w = scale * rng.gaussian();
}

Matrix LinearModel::embed(const Matrix& features) const {
  if (features.cols() != input_dim()) throw InvalidInput("feature dimension does not match model");
  Matrix out(features.rows(), embed_dim());
  for (std::size_t i = 0; i < features.rows(); ++i) {
    for (std::size_t r = 0; r < input_dim(); ++r) {
      const double x = features(i, r);
      if (x == 0.0) continue;
      for (std::size_t c = 0; c < embed_dim(); ++c) out(i, c) += x * weight_(r, c);
    }
  }
  return out;
}

Matrix LinearModel::weight_gradient(const Matrix& features, const Matrix& embedding_grad) const {
  Matrix g(input_dim(), embed_dim());
  for (std::size_t i = 0; i < features.rows(); ++i) {
    for (std::size_t r = 0; r < input_dim(); ++r) {
      const double x = features(i, r);
      for (std::size_t c = 0; c < embed_dim(); ++c) g(r, c) += x * embedding_grad(i, c);
    }
  }
  return g;
}

void LinearModel::adam_update(const Matrix& weight_grad, const AdamConfig& cfg) {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  auto w = weight_.values();
  auto m = first_moment_.values();
  auto v = second_moment_.values();
  const auto g = weight_grad.values();
  for (std::size_t i = 0; i < w.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    const double m_hat = m[i] / correction1;
    const double v_hat = v[i] / correction2;
    w[i] -= cfg.step * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

SyntheticDataset make_blobs(std::size_t classes, std::size_t per_class, std::size_t input_dim,
                            double spread, std::uint64_t seed) {
  if (classes == 0 || per_class == 0 || input_dim == 0) {
    throw InvalidInput("blob counts and dimension must be positive");
  }
  if (!(spread >= 0.0)) throw InvalidInput("spread must be >= 0");
  Rng rng(seed);
  SyntheticDataset ds;
  ds.classes = classes;
  ds.spread = spread;
  ds.seed = seed;
  ds.centers = Matrix(classes, input_dim);
  for (double& c : ds.centers.values()) c = rng.gaussian();
  ds.features = Matrix(classes * per_class, input_dim);
  ds.labels.reserve(classes * per_class);
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      const std::size_t row = c * per_class + i;
      for (std::size_t j = 0; j < input_dim; ++j) {
        const double noise = spread > 0.0 ? spread * rng.gaussian() : 0.0;
        ds.features(row, j) = ds.centers(c, j) + noise;
      }
      ds.labels.push_back(static_cast<int>(c));
    }
  }
  return ds;
}

std::pair<SyntheticDataset, SyntheticDataset> split_per_class(const SyntheticDataset& ds,
                                                              std::size_t head_per_class) {
  std::vector<std::size_t> head;
  std::vector<std::size_t> tail;
  std::vector<std::size_t> seen(ds.classes, 0);
  for (std::size_t i = 0; i < ds.labels.size(); ++i) {
    auto& count = seen[static_cast<std::size_t>(ds.labels[i])];
    (count++ < head_per_class ? head : tail).push_back(i);
  }
  auto pick = [&ds](const std::vector<std::size_t>& rows) {
    SyntheticDataset out;
    out.features = gather_rows(ds.features, rows);
    for (auto r : rows) out.labels.push_back(ds.labels[r]);
    out.centers = ds.centers;
    out.classes = ds.classes;
    out.spread = ds.spread;
    out.seed = ds.seed;
    return out;
  };
  return {pick(head), pick(tail)};
}

StepResult train_step(LinearModel& model, const Matrix& batch_features,
                      std::span<const int> batch_labels, const TrainConfig& cfg) {
  if (batch_features.rows() != batch_labels.size()) {
    throw InvalidInput("batch features and labels differ in length");
  }
  if (model.embed_dim() != cfg.d) throw InvalidInput("model embedding dimension != d");
  auto [labels, mapping] = canonicalize_labels(batch_labels);
  const std::size_t n_c = mapping.size();

  const Matrix embeddings = model.embed(batch_features);
  const bool normalized = cfg.loss_kind == LossKind::triplet && cfg.loss_cfg.normalize;
  const Matrix coded = normalized ? normalize_rows(embeddings) : embeddings;

  AssignmentProblem problem;
  problem.means = class_means(coded, labels, n_c);
  problem.lambda = cfg.lambda.empty() ? default_lambda(problem.means) : cfg.lambda;
  problem.k = cfg.k;
  const AssignmentSolution assignment = solve_assignment(problem, cfg.cost_scale);

  StepResult out;
  out.codes = expand_class_codes(assignment.codes, labels);
  const EmbeddingSet coded_set(coded, labels);
  out.g_value = eval_objective_g(coded_set, out.codes, problem.lambda);
  out.bound_gap = eval_bound_gap_M(coded_set, cfg.k);

  Batch batch{embeddings, labels, out.codes};
  const LossResult loss = cfg.loss_kind == LossKind::triplet ? triplet_loss(batch, cfg.loss_cfg)
                                                             : npairs_loss(batch, cfg.loss_cfg);
  out.loss = loss.loss;
  out.loss_valid = loss.valid;
  model.adam_update(model.weight_gradient(batch_features, loss.grad), cfg.adam);
  return out;
}

TrainResult train(const Matrix& features, std::span<const int> labels, const TrainConfig& cfg) {
  cfg.validate();
  const EmbeddingSet data(features, std::vector<int>(labels.begin(), labels.end()));
  std::vector<std::vector<std::size_t>> members(data.num_classes());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    members[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  for (const auto& m : members) {
    if (m.size() < cfg.per_class) throw InvalidInput("a class has fewer items than per_class");
  }

  Rng rng(cfg.seed);
  TrainResult result{LinearModel(features.cols(), cfg.d, rng.next_u64()), {}};
  result.history.reserve(cfg.max_iter);
  const std::size_t n_c = std::min(cfg.batch_classes, members.size());
  for (std::size_t iter = 0; iter < cfg.max_iter; ++iter) {
    std::vector<std::size_t> rows;
    std::vector<int> batch_labels;
    for (std::size_t c : rng.sample_without_replacement(members.size(), n_c)) {
      for (std::size_t j : rng.sample_without_replacement(members[c].size(), cfg.per_class)) {
        rows.push_back(members[c][j]);
        batch_labels.push_back(static_cast<int>(c));
      }
    }
    const StepResult step = train_step(result.model, gather_rows(features, rows), batch_labels, cfg);
    result.history.push_back({iter, step.loss, step.g_value, step.bound_gap});
  }
  return result;
}

TrainResult train(const SyntheticDataset& ds, const TrainConfig& cfg) {
  return train(ds.features, ds.labels, cfg);
}

std::vector<HashCode> hash_items(const LinearModel& model, const Matrix& features, std::size_t k) {
  const Matrix emb = model.embed(features);
  std::vector<HashCode> codes;
  codes.reserve(emb.rows());
  for (std::size_t i = 0; i < emb.rows(); ++i) codes.push_back(topk_hash(emb.row(i), k));
  return codes;
}

void write_history_csv(std::ostream& os, std::span<const HistoryRow> history) {
  os << "iter,loss,g_value,bound_gap_M\n";
  const auto precision = os.precision(10);
  for (const auto& row : history) {
    os << row.iter << ',' << row.loss << ',' << row.g_value << ',' << row.bound_gap << '\n';
  }
  os.precision(precision);
}

}  // namespace qhash
