#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "qhash/core.hpp"

using namespace qhash;

TEST_CASE("class means: one item per class reproduces the items") {
  const Matrix data = Matrix::from_rows({{0.1, -3.0}, {2.5, 7.25}, {1e-9, 4.0}});
  CHECK(class_means(data, std::vector<int>{0, 1, 2}, 3) == data);
}

TEST_CASE("class means: symmetric pair averages to its midpoint") {
  const Matrix data = Matrix::from_rows({{0, 0}, {2, 2}, {5, 5}});
  const Matrix means = class_means(data, std::vector<int>{0, 0, 1}, 2);
  CHECK(means(0, 0) == 1.0);
  CHECK(means(0, 1) == 1.0);
  CHECK(means(1, 0) == 5.0);
}

TEST_CASE("class means: agree with accumulate-and-divide on random data") {
  Rng rng(11);
  const std::size_t n = 200, d = 6, c = 4;
  Matrix data(n, d);
  for (double& v : data.values()) v = rng.uniform(-10, 10);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % c);

  std::vector<std::vector<double>> sum(c, std::vector<double>(d, 0.0));
  std::vector<double> count(c, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    count[labels[i]] += 1;
    for (std::size_t q = 0; q < d; ++q) sum[labels[i]][q] += data(i, q);
  }
  const Matrix means = class_means(data, labels, c);
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t q = 0; q < d; ++q) CHECK(means(k, q) == doctest::Approx(sum[k][q] / count[k]).epsilon(1e-12));
  }
}

TEST_CASE("class means: exactly invariant under item permutation") {
  Rng rng(12);
  const std::size_t n = 97, d = 5;
  Matrix data(n, d);
  for (double& v : data.values()) v = rng.uniform(-1, 1) * std::pow(10.0, rng.uniform(-3, 3));
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(rng.below(3));
  labels[0] = 0, labels[1] = 1, labels[2] = 2;
  const Matrix ref = class_means(data, labels, 3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    rng.shuffle(perm);
    Matrix shuffled(n, d);
    std::vector<int> shuffled_labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::copy(data.row(perm[i]).begin(), data.row(perm[i]).end(), shuffled.row(i).begin());
      shuffled_labels[i] = labels[perm[i]];
    }
    CHECK(class_means(shuffled, shuffled_labels, 3) == ref);
  }
}

TEST_CASE("class means: identical items give their value exactly") {
  const double v = 0.1 + 0.2;
  const Matrix data(7, 2, v);
  const Matrix means = class_means(data, std::vector<int>(7, 0), 1);
  CHECK(means(0, 0) == v);
  CHECK(means(0, 1) == v);
}

TEST_CASE("class means: empty class is rejected") {
  const Matrix data = Matrix::from_rows({{1.0}, {2.0}});
  CHECK_THROWS_AS(class_means(data, std::vector<int>{0, 2}, 3), InvalidInput);
}

TEST_CASE("canonicalize_labels follows first appearance") {
  using V = std::vector<int>;
  CHECK(canonicalize_labels(V{5, 5, 9}).first == V{0, 0, 1});
  CHECK(canonicalize_labels(V{0, 1, 2}).first == V{0, 1, 2});
  const auto [labels, mapping] = canonicalize_labels(V{3, 1, 3, 1});
  CHECK(labels == V{0, 1, 0, 1});
  CHECK(mapping == V{3, 1});
  CHECK_THROWS_AS(canonicalize_labels(V{1, -1}), InvalidInput);
  CHECK_THROWS_AS(canonicalize_labels(V{}), InvalidInput);
}

TEST_CASE("embedding set validation") {
  CHECK_THROWS_AS(EmbeddingSet(Matrix::from_rows({{1.0}, {NAN}}), {0, 1}), InvalidInput);
  CHECK_THROWS_AS(EmbeddingSet(Matrix::from_rows({{1.0}, {INFINITY}}), {0, 1}), InvalidInput);
  CHECK_THROWS_AS(EmbeddingSet(Matrix::from_rows({{1.0}, {2.0}}), {0, 2}), InvalidInput);
  CHECK_THROWS_AS(EmbeddingSet(Matrix::from_rows({{1.0}, {2.0}}), {0}), InvalidInput);
  const auto e = EmbeddingSet::from_raw_labels(Matrix::from_rows({{1.0}, {2.0}, {3.0}}), std::vector<int>{7, 4, 7});
  CHECK(e.num_classes() == 2);
  CHECK(std::vector<int>(e.labels().begin(), e.labels().end()) == std::vector<int>{0, 1, 0});
}

TEST_CASE("hash code validation") {
  CHECK_THROWS_AS(HashCode(4, {1, 1}), InvalidInput);
  CHECK_THROWS_AS(HashCode(4, {2, 1}), InvalidInput);
  CHECK_THROWS_AS(HashCode(4, {4}), InvalidInput);
  const HashCode h(8, {1, 5});
  CHECK(h.k() == 2);
  CHECK(h.contains(5));
  CHECK_FALSE(h.contains(2));
  CHECK(h.overlap(HashCode(8, {0, 5, 7})) == 1);
  CHECK(to_string(h) == "{1,5}");
}

TEST_CASE("hash code dense round trip: exhaustive for d <= 10") {
  for (std::size_t d = 1; d <= 10; ++d) {
    for (std::uint32_t mask = 0; mask < (1u << d); ++mask) {
      std::vector<std::uint32_t> bits;
      for (std::uint32_t q = 0; q < d; ++q) {
        if (mask >> q & 1u) bits.push_back(q);
      }
      const HashCode h(d, bits);
      const auto words = h.to_dense();
      REQUIRE(words.size() == 1);
      CHECK(words[0] == mask);
      CHECK(HashCode::from_dense(d, words) == h);
    }
  }
}

TEST_CASE("hash code dense round trip: random codes up to d = 130") {
  Rng rng(3);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t d = 1 + rng.below(130);
    const std::size_t k = 1 + rng.below(d);
    auto picks = rng.sample_without_replacement(d, k);
    std::sort(picks.begin(), picks.end());
    const HashCode h(d, std::vector<std::uint32_t>(picks.begin(), picks.end()));
    const auto words = h.to_dense();
    CHECK(words.size() == (d + 63) / 64);
    std::size_t pop = 0;
    for (auto w : words) pop += static_cast<std::size_t>(__builtin_popcountll(w));
    CHECK(pop == k);
    CHECK(HashCode::from_dense(d, words) == h);
  }
}

TEST_CASE("sparsity config validation") {
  CHECK_NOTHROW(SparsityConfig(4, 2, {0, 0.5, 1, 2}));
  CHECK_THROWS_AS(SparsityConfig(4, 0, {0, 0, 0, 0}), InvalidInput);
  CHECK_THROWS_AS(SparsityConfig(4, 5, {0, 0, 0, 0}), InvalidInput);
  CHECK_THROWS_AS(SparsityConfig(4, 1, {0, -0.1, 0, 0}), InvalidInput);
  CHECK_THROWS_AS(SparsityConfig(4, 1, {0, 0}), InvalidInput);
}

TEST_CASE("rng: integer stream is the standard mt19937_64 stream") {
  Rng rng(5489);
  std::uint64_t last = 0;
  for (int i = 0; i < 10000; ++i) last = rng.next_u64();
  CHECK(last == 9981545732273789042ull);
}

TEST_CASE("rng: determinism and ranges") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) {
    const double u = a.uniform();
    CHECK(u == b.uniform());
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const auto x = a.below(7);
    CHECK(x == b.below(7));
    CHECK(x < 7);
    CHECK(a.gaussian() == b.gaussian());
  }
  CHECK_THROWS_AS(a.below(0), InvalidInput);
}

TEST_CASE("rng: sampling without replacement and shuffling") {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = rng.sample_without_replacement(20, 8);
    CHECK(std::set<std::size_t>(s.begin(), s.end()).size() == 8);
    CHECK(*std::max_element(s.begin(), s.end()) < 20);
  }
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  rng.shuffle(v);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  CHECK_THROWS_AS(rng.sample_without_replacement(3, 4), InvalidInput);
}

TEST_CASE("rng: gaussian moments") {
  Rng rng(17);
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double g = rng.gaussian();
    s += g;
    s2 += g * g;
  }
  CHECK(std::fabs(s / n) < 0.01);
  CHECK(std::fabs(s2 / n - 1.0) < 0.02);
}
