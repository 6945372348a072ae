#include <doctest.h>

#include <cmath>

#include "qhash/baselines.hpp"
#include "qhash/codes.hpp"
#include "qhash/index.hpp"
#include "qhash/trainer.hpp"

using namespace qhash;

TEST_CASE("binarization transform") {
  const Matrix m = Matrix::from_rows({{0.3, -0.2, 0.9}, {1, 1, 1}});
  const auto codes = th_codes(m, 2);
  CHECK(codes[0] == HashCode(3, {0, 2}));
  CHECK(codes[1] == HashCode(3, {0, 1}));
  const Matrix onehot = Matrix::from_rows({{0, 3, 0, 3}, {3, 0, 3, 0}});
  CHECK(th_codes(onehot, 2) == std::vector<HashCode>{HashCode(4, {1, 3}), HashCode(4, {0, 2})});
}

TEST_CASE("constant embeddings pile into one bucket") {
  const Matrix flat(20, 6, 0.25);
  const auto codes = th_codes(flat, 1);
  const HashIndex ix = build(codes, flat, std::vector<int>(20, 0));
  CHECK(measured_suf(ix, codes) == 1.0);
}

TEST_CASE("k-means on well separated points recovers the centers") {
  const auto ds = make_blobs(4, 30, 3, 0.0, 8);
  KMeansConfig cfg;
  cfg.centroids = 4;
  cfg.seed = 1;
  const Codebook cb = kmeans(ds.features, cfg);
  CHECK(cb.inertia == doctest::Approx(0.0));
  for (std::size_t c = 0; c < 4; ++c) {
    double best = 1e300;
    for (std::size_t j = 0; j < 4; ++j) {
      double s = 0;
      for (std::size_t q = 0; q < 3; ++q) s += std::pow(cb.centroids(j, q) - ds.centers(c, q), 2);
      best = std::min(best, s);
    }
    CHECK(best < 1e-20);
  }
}

TEST_CASE("k-means inertia scales with the spread") {
  const double spread = 0.01;
  const auto ds = make_blobs(4, 200, 3, spread, 9);
  KMeansConfig cfg;
  cfg.centroids = 4;
  cfg.seed = 2;
  const Codebook cb = kmeans(ds.features, cfg);
  const double expected = 800 * spread * spread * 3;
  CHECK(cb.inertia == doctest::Approx(expected).epsilon(0.15));
}

TEST_CASE("one centroid is the global mean") {
  Rng rng(70);
  Matrix m(50, 4);
  for (double& v : m.values()) v = rng.gaussian();
  KMeansConfig cfg;
  cfg.centroids = 1;
  const Codebook cb = kmeans(m, cfg);
  for (std::size_t q = 0; q < 4; ++q) {
    double s = 0;
    for (std::size_t i = 0; i < 50; ++i) s += m(i, q);
    CHECK(cb.centroids(0, q) == doctest::Approx(s / 50).epsilon(1e-12));
  }
}

TEST_CASE("duplicated points with as many centroids as distinct values") {
  const Matrix m = Matrix::from_rows({{1, 1}, {1, 1}, {4, 0}, {4, 0}, {4, 0}, {-2, 3}});
  KMeansConfig cfg;
  cfg.centroids = 3;
  cfg.seed = 4;
  CHECK(kmeans(m, cfg).inertia == 0.0);
}

TEST_CASE("k-means inertia never increases and is deterministic") {
  Rng rng(71);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix m(60 + rng.below(60), 5);
    for (double& v : m.values()) v = rng.gaussian();
    KMeansConfig cfg;
    cfg.centroids = 2 + rng.below(8);
    cfg.seed = rng.next_u64();
    const Codebook cb = kmeans(m, cfg);
    for (std::size_t i = 1; i < cb.inertia_history.size(); ++i) {
      CHECK(cb.inertia_history[i] <= cb.inertia_history[i - 1] * (1 + 1e-12));
    }
    const Codebook again = kmeans(m, cfg);
    CHECK(again.centroids == cb.centroids);
    CHECK(again.inertia_history == cb.inertia_history);
  }
}

TEST_CASE("k-means validation") {
  KMeansConfig cfg;
  cfg.centroids = 5;
  CHECK_THROWS_AS(kmeans(Matrix(3, 2), cfg), InvalidInput);
  cfg.centroids = 0;
  CHECK_THROWS_AS(kmeans(Matrix(3, 2), cfg), InvalidInput);
}

TEST_CASE("vector quantization codes") {
  Codebook cb;
  cb.centroids = Matrix::from_rows({{0.1}, {0.5}, {0.3}});
  // Distances from the origin are 0.1, 0.5 and 0.3.
  CHECK(vq_codes(Matrix(1, 1, 0.0), cb, 2)[0] == HashCode(3, {0, 2}));
  CHECK(vq_codes(Matrix::from_rows({{0.5}}), cb, 1)[0] == HashCode(3, {1}));

  Rng rng(72);
  Matrix m(40, 3);
  for (double& v : m.values()) v = rng.gaussian();
  KMeansConfig cfg;
  cfg.centroids = 6;
  const Codebook learned = kmeans(m, cfg);
  const auto codes = vq_codes(m, learned, 2);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    CHECK(codes[i] == topk_hash(negative_distances(learned, m.row(i)), 2));
  }
}

TEST_CASE("binarization equals quantization against a scaled one-hot codebook") {
  // With centroids s * e_j and |x| fixed, -|x - s e_j|^2 = 2 s x_j + const.
  Rng rng(73);
  Codebook cb;
  cb.centroids = Matrix(5, 5);
  for (std::size_t j = 0; j < 5; ++j) cb.centroids(j, j) = 2.0;
  Matrix m(30, 5);
  for (std::size_t i = 0; i < 30; ++i) {
    double s = 0;
    for (double& v : m.row(i)) v = rng.gaussian(), s += v * v;
    for (double& v : m.row(i)) v /= std::sqrt(s);
  }
  CHECK(vq_codes(m, cb, 2) == th_codes(m, 2));
}
