#include "qhash/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "qhash/index.hpp"

namespace qhash {

namespace {

Matrix loss_space(const Batch& b, LossKind kind, const LossConfig& cfg) {
  Matrix x = b.embeddings;
  if (kind != LossKind::triplet || !cfg.normalize) return x;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    for (double v : x.row(i)) s += v * v;
    const double norm = std::sqrt(s);
    for (double& v : x.row(i)) v /= norm;
  }
  return x;
}

bool is_smooth(const Batch& b, LossKind kind, const LossConfig& cfg, double margin) {
  const Matrix x = loss_space(b, kind, cfg);
  const std::size_t n = b.size();
  Matrix dist(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      for (std::size_t q = 0; q < x.cols(); ++q) {
        const bool masked = b.codes[i].contains(q) || b.codes[j].contains(q);
        if (masked && std::fabs(x(i, q) - x(j, q)) <= margin) return false;
      }
      dist(i, j) = dist(j, i) = hash_distance(x.row(i), x.row(j), b.codes[i], b.codes[j]);
    }
  }
  if (kind == LossKind::npairs) return true;

  for (std::size_t a = 0; a < n; ++a) {
    std::vector<double> row;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != a) row.push_back(dist(a, j));
    }
    std::sort(row.begin(), row.end());
    for (std::size_t j = 1; j < row.size(); ++j) {
      if (row[j] - row[j - 1] <= margin) return false;
    }
  }
  for (const auto& t : mine_semi_hard(x, b.labels, b.codes)) {
    const double hinge = dist(t.anchor, t.positive) + cfg.margin_alpha - dist(t.anchor, t.negative);
    if (std::fabs(hinge) <= margin) return false;
  }
  return true;
}

}  // namespace

AssignmentProblem random_assignment_problem(std::size_t n_c, std::size_t d, std::size_t k, Rng& rng) {
  AssignmentProblem p;
  p.means = Matrix(n_c, d);
  for (double& v : p.means.values()) v = rng.uniform(-1.0, 1.0);
  p.lambda.resize(d);
  for (double& v : p.lambda) v = rng.uniform(0.0, 1.0);
  p.k = k;
  return p;
}

BenchPoint bench_assignment(std::size_t n_c, std::size_t d, std::size_t k, std::size_t repeats, Rng& rng) {
  if (repeats == 0) throw InvalidInput("benchmark needs at least one repeat");
  double total = 0.0;
  for (std::size_t r = 0; r < repeats; ++r) {
    const AssignmentProblem p = random_assignment_problem(n_c, d, k, rng);
    const auto start = std::chrono::steady_clock::now();
    const AssignmentSolution s = solve_assignment(p);
    total += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (s.codes.size() != n_c) throw std::logic_error("benchmark solve returned the wrong number of codes");
  }
  return {n_c, d, k, repeats, total / static_cast<double>(repeats)};
}

Batch random_smooth_batch(LossKind kind, const GradcheckShape& shape, const LossConfig& cfg, Rng& rng,
                          double margin) {
  const std::size_t per_class = kind == LossKind::npairs ? 2 : shape.per_class;
  if (shape.classes < 2 || per_class < 2) throw InvalidInput("gradient check needs >= 2 classes and items");
  if (shape.k < 1 || shape.k > shape.dim) throw InvalidInput("gradient check needs 1 <= k <= dim");
  const std::size_t n = shape.classes * per_class;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::vector<HashCode> class_codes;
    for (std::size_t c = 0; c < shape.classes; ++c) class_codes.push_back(random_code(shape.dim, shape.k, rng));
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    Batch b;
    b.embeddings = Matrix(n, shape.dim);
    for (double& v : b.embeddings.values()) v = rng.gaussian();
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = order[i] / per_class;
      b.labels.push_back(static_cast<int>(c));
      b.codes.push_back(class_codes[c]);
    }
    if (is_smooth(b, kind, cfg, margin)) return b;
  }
  throw InvalidInput("could not draw a smooth batch; loosen the margin or shrink the batch");
}

double gradcheck(LossKind kind, const GradcheckShape& shape, const LossConfig& cfg, std::size_t batches,
                 double epsilon, Rng& rng) {
  const LossFn fn = kind == LossKind::triplet
                        ? LossFn([](const Batch& b, const LossConfig& c) { return triplet_loss(b, c); })
                        : LossFn(npairs_loss);
  double worst = 0.0;
  for (std::size_t i = 0; i < batches; ++i) {
    const Batch b = random_smooth_batch(kind, shape, cfg, rng);
    worst = std::max(worst, finite_diff_check(fn, b, cfg, epsilon));
  }
  return worst;
}

}  // namespace qhash
