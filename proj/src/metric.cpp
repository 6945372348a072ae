#include "qhash/metric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

namespace qhash {

namespace {

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

// Union of two sorted bit lists.
std::vector<std::uint32_t> union_bits(const HashCode& a, const HashCode& b) {
  std::vector<std::uint32_t> out;
  out.reserve(a.k() + b.k());
  std::set_union(a.bits().begin(), a.bits().end(), b.bits().begin(), b.bits().end(),
                 std::back_inserter(out));
  return out;
}

// Accumulates scale * d(d_ij)/d(f) into grad rows i and j.
void accumulate_distance_grad(Matrix& grad, const Matrix& emb, std::size_t i, std::size_t j,
                              const HashCode& h_i, const HashCode& h_j, double scale) {
  for (auto q : union_bits(h_i, h_j)) {
    const double s = sign(emb(i, q) - emb(j, q)) * scale;
    grad(i, q) += s;
    grad(j, q) -= s;
  }
}

Matrix pairwise_hash_distances(const Matrix& emb, std::span<const HashCode> codes) {
  const std::size_t b = emb.rows();
  Matrix dist(b, b);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = i + 1; j < b; ++j) {
      dist(i, j) = dist(j, i) = hash_distance(emb.row(i), emb.row(j), codes[i], codes[j]);
    }
  }
  return dist;
}

}  // namespace

void Batch::validate() const {
  if (labels.size() != embeddings.rows() || codes.size() != embeddings.rows()) {
    throw InvalidInput("batch embeddings, labels and codes must have equal length");
  }
  if (!embeddings.all_finite()) throw InvalidInput("batch embeddings must be finite");
  for (const auto& h : codes) {
    if (h.dim() != embeddings.cols()) throw InvalidInput("batch code dimension mismatch");
  }
}

void LossConfig::validate() const {
  if (!(margin_alpha >= 0.0)) throw InvalidInput("margin must be >= 0");
  if (!(npairs_reg_lambda >= 0.0)) throw InvalidInput("npairs regularizer weight must be >= 0");
}

double hash_distance(std::span<const double> f_i, std::span<const double> f_j, const HashCode& h_i,
                     const HashCode& h_j) {
  if (f_i.size() != f_j.size() || h_i.dim() != f_i.size() || h_j.dim() != f_i.size()) {
    throw InvalidInput("hash_distance dimension mismatch");
  }
  double d = 0.0;
  for (auto q : union_bits(h_i, h_j)) d += std::fabs(f_i[q] - f_j[q]);
  return d;
}

std::vector<double> hash_distance_grad(std::span<const double> f_i, std::span<const double> f_j,
                                       const HashCode& h_i, const HashCode& h_j) {
  if (f_i.size() != f_j.size()) throw InvalidInput("hash_distance_grad dimension mismatch");
  std::vector<double> g(f_i.size(), 0.0);
  for (auto q : union_bits(h_i, h_j)) g[q] = sign(f_i[q] - f_j[q]);
  return g;
}

std::vector<Triplet> mine_semi_hard(const Matrix& embeddings, std::span<const int> labels,
                                    std::span<const HashCode> codes) {
  const std::size_t b = embeddings.rows();
  const Matrix dist = pairwise_hash_distances(embeddings, codes);
  std::vector<Triplet> out;
  for (std::size_t a = 0; a < b; ++a) {
    for (std::size_t p = 0; p < b; ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      const double d_ap = dist(a, p);
      std::size_t semi_hard = b;
      std::size_t farthest = b;
      for (std::size_t n = 0; n < b; ++n) {
        if (labels[n] == labels[a]) continue;
        const double d_an = dist(a, n);
        if (d_an > d_ap && (semi_hard == b || d_an < dist(a, semi_hard))) semi_hard = n;
        if (farthest == b || d_an > dist(a, farthest)) farthest = n;
      }
      if (farthest == b) continue;  // no negatives in the batch
      out.push_back({a, p, semi_hard != b ? semi_hard : farthest});
    }
  }
  return out;
}

namespace {

struct Normalized {
  Matrix x;
  std::vector<double> norms;
};

Normalized prepare_triplet_inputs(const Batch& batch, const LossConfig& cfg) {
  batch.validate();
  cfg.validate();
  Normalized out{batch.embeddings, std::vector<double>(batch.size(), 1.0)};
  if (!cfg.normalize) return out;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    double s = 0.0;
    for (double v : out.x.row(i)) s += v * v;
    out.norms[i] = std::sqrt(s);
    if (out.norms[i] == 0.0) throw InvalidInput("cannot normalize a zero embedding");
    for (double& v : out.x.row(i)) v /= out.norms[i];
  }
  return out;
}

LossResult triplet_loss_on(const Batch& batch, const LossConfig& cfg, const Normalized& in,
                           std::span<const Triplet> triplets) {
  const std::size_t b = batch.size();
  const std::size_t d = batch.embeddings.cols();
  const Matrix& x = in.x;
  const auto& codes = batch.codes;

  LossResult result;
  result.grad = Matrix(b, d);
  if (triplets.empty()) {
    result.valid = false;
    return result;
  }
  result.terms = triplets.size();
  const double inv = 1.0 / static_cast<double>(triplets.size());

  Matrix gx(b, d);
  double total = 0.0;
  for (const auto& t : triplets) {
    if (t.anchor >= b || t.positive >= b || t.negative >= b) throw InvalidInput("triplet index out of range");
    const double d_ap = hash_distance(x.row(t.anchor), x.row(t.positive), codes[t.anchor], codes[t.positive]);
    const double d_an = hash_distance(x.row(t.anchor), x.row(t.negative), codes[t.anchor], codes[t.negative]);
    const double hinge = d_ap + cfg.margin_alpha - d_an;
    if (hinge <= 0.0) continue;
    total += hinge;
    accumulate_distance_grad(gx, x, t.anchor, t.positive, codes[t.anchor], codes[t.positive], inv);
    accumulate_distance_grad(gx, x, t.anchor, t.negative, codes[t.anchor], codes[t.negative], -inv);
  }
  result.loss = total * inv;

  if (!cfg.normalize) {
    result.grad = std::move(gx);
    return result;
  }
  // Through x = f / |f|:  df = (gx - x (x . gx)) / |f|.
  for (std::size_t i = 0; i < b; ++i) {
    double dot = 0.0;
    for (std::size_t q = 0; q < d; ++q) dot += x(i, q) * gx(i, q);
    for (std::size_t q = 0; q < d; ++q) result.grad(i, q) = (gx(i, q) - x(i, q) * dot) / in.norms[i];
  }
  return result;
}

}  // namespace

LossResult triplet_loss(const Batch& batch, const LossConfig& cfg) {
  const Normalized in = prepare_triplet_inputs(batch, cfg);
  const auto triplets = mine_semi_hard(in.x, batch.labels, batch.codes);
  return triplet_loss_on(batch, cfg, in, triplets);
}

LossResult triplet_loss(const Batch& batch, const LossConfig& cfg, std::span<const Triplet> triplets) {
  return triplet_loss_on(batch, cfg, prepare_triplet_inputs(batch, cfg), triplets);
}

std::vector<std::pair<std::size_t, std::size_t>> npairs_layout(std::span<const int> labels) {
  std::unordered_map<int, std::size_t> first;
  std::unordered_map<int, std::size_t> count;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<int> order;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    const std::size_t seen = count[y]++;
    if (seen == 0) {
      first[y] = i;
      order.push_back(y);
    } else if (seen == 1) {
      pairs.emplace_back(first[y], i);
    } else {
      throw InvalidInput("npairs batch has more than two items of class " + std::to_string(y));
    }
  }
  for (int y : order) {
    if (count[y] != 2) throw InvalidInput("npairs batch has a class without a positive partner");
  }
  // pairs are already ordered by the positive's position; reorder by anchor.
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

LossResult npairs_loss(const Batch& batch, const LossConfig& cfg) {
  batch.validate();
  cfg.validate();
  const auto pairs = npairs_layout(batch.labels);
  const std::size_t b = batch.size();
  const std::size_t d = batch.embeddings.cols();
  const Matrix& f = batch.embeddings;
  const auto& codes = batch.codes;

  LossResult result;
  result.grad = Matrix(b, d);
  result.terms = pairs.size();
  const double inv_pairs = pairs.empty() ? 0.0 : 1.0 / static_cast<double>(pairs.size());

  std::vector<double> logits(pairs.size());
  double total = 0.0;
  for (std::size_t c = 0; c < pairs.size(); ++c) {
    const std::size_t anchor = pairs[c].first;
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < pairs.size(); ++j) {
      const std::size_t pos = pairs[j].second;
      logits[j] = -hash_distance(f.row(anchor), f.row(pos), codes[anchor], codes[pos]);
      top = std::max(top, logits[j]);
    }
    double z = 0.0;
    for (double l : logits) z += std::exp(l - top);
    const double log_z = top + std::log(z);
    total += log_z - logits[c];
    // dL/d(logit_j) = softmax_j - [j == c]; d(logit_j) = -d(distance_j).
    for (std::size_t j = 0; j < pairs.size(); ++j) {
      const double p = std::exp(logits[j] - log_z);
      const double weight = -(p - (j == c ? 1.0 : 0.0)) * inv_pairs;
      if (weight == 0.0) continue;
      const std::size_t pos = pairs[j].second;
      accumulate_distance_grad(result.grad, f, anchor, pos, codes[anchor], codes[pos], weight);
    }
  }
  result.loss = total * inv_pairs;

  const double reg = cfg.npairs_reg_lambda / static_cast<double>(b);
  double sq = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t q = 0; q < d; ++q) {
      sq += f(i, q) * f(i, q);
      result.grad(i, q) += 2.0 * reg * f(i, q);
    }
  }
  result.loss += reg * sq;
  return result;
}

double finite_diff_check(const LossFn& loss, const Batch& batch, const LossConfig& cfg,
                         double epsilon) {
  if (!(epsilon > 0.0)) throw InvalidInput("finite difference step must be positive");
  const LossResult analytic = loss(batch, cfg);
  Batch probe = batch;
  double worst = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (std::size_t q = 0; q < batch.embeddings.cols(); ++q) {
      const double saved = probe.embeddings(i, q);
      probe.embeddings(i, q) = saved + epsilon;
      const double up = loss(probe, cfg).loss;
      probe.embeddings(i, q) = saved - epsilon;
      const double down = loss(probe, cfg).loss;
      probe.embeddings(i, q) = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double exact = analytic.grad(i, q);
      const double scale = std::max(std::fabs(numeric), std::fabs(exact));
      if (scale <= 1e-6) continue;
      worst = std::max(worst, std::fabs(numeric - exact) / scale);
    }
  }
  return worst;
}

}  // namespace qhash
