#include <doctest.h>

#include <random>

#include "dcfae/errors.hpp"
#include "support/oracles.hpp"
#include "support/properties.hpp"
#include "support/tiny.hpp"

using namespace dcfae;
using namespace dcfae::testing;

TEST_CASE("P and Q are symmetric distributions with an empty diagonal; KL is nonnegative") {
  const auto r = similarity_invariants(1000);
  CHECK(r.all_finite);
  CHECK(r.max_sum_error <= 1e-6);
  CHECK(r.max_asymmetry <= 1e-6);
  CHECK(r.max_abs_diagonal == 0.0);
  CHECK(r.min_value >= 0.0);
  CHECK(r.min_kl > 1e-9);
  CHECK(std::abs(r.kl_at_origin) <= 1e-9);
  CHECK(r.ok());
}

TEST_CASE("pairwise similarities: small cases") {
  const auto two = pairwise_q(column({-4.0, 7.5}));
  CHECK(two(0, 1) == doctest::Approx(0.5));
  CHECK(two(1, 0) == doctest::Approx(0.5));
  CHECK(pairwise_p(column({0.0, 100.0}), 100.0)(0, 1) == doctest::Approx(0.5));

  Tensor<double> same({3, 2}, 1.25);
  const auto q = pairwise_q(same);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) CHECK(q(i, j) == doctest::Approx(i == j ? 0.0 : 1.0 / 6.0));
  }
  CHECK_THROWS_AS(pairwise_p(column({1.0}), 1.0), ConfigError);
  CHECK_THROWS_AS(pairwise_q(column({1.0})), ConfigError);
}

TEST_CASE("cross-entropy against Q is bounded below by the entropy of P") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 2 + static_cast<std::size_t>(trial % 6);
    Tensor<double> a({m, 2}), b({m, 2});
    for (auto& v : a.data) v = n(rng);
    for (auto& v : b.data) v = n(rng);
    const auto p = pairwise_p(a, 3.0);
    const auto q = pairwise_q(b);
    CHECK(clustering_loss(p, q) >= entropy(p) - 1e-12);
    CHECK(clustering_loss(p, p) == doctest::Approx(entropy(p)).epsilon(1e-12));
  }
}

TEST_CASE("closed-form clustering loss agrees with the explicit matrices") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n;
  Tensor<double> mu({6, 3}), c({6, 2});
  for (auto& v : mu.data) v = n(rng);
  for (auto& v : c.data) v = n(rng);
  const auto direct = clustering_loss(pairwise_p(mu, 100.0), pairwise_q(c));
  CHECK(clustering_loss_with_grad(mu, c, 100.0, true).loss == doctest::Approx(direct).epsilon(1e-10));
}

TEST_CASE("dense head: shapes, inference determinism and dropout") {
  HeadConfig cfg;
  cfg.embed_dim = 7;
  DenseHead<float> head(50, cfg, 4);
  Tensor<float> mu({256, 50});
  std::mt19937_64 rng(2);
  std::normal_distribution<float> n;
  for (auto& v : mu.data) v = n(rng);
  const auto c = head.embed(mu, false, 0);
  CHECK(c.shape == Shape{256, 7});
  CHECK(head.embed(mu, false, 99).data == c.data);
  const auto t1 = head.embed(mu, true, 1);
  CHECK(t1.data != c.data);
  CHECK(head.embed(mu, true, 1).data == t1.data);
  CHECK(head.embed(mu, true, 2).data != t1.data);
  CHECK(cfg.dropout_rate == 0.3);
  CHECK_THROWS_AS(head.embed(Tensor<float>({4, 49}), false, 0), ShapeError);
  CHECK(head.l2_penalty() > 0.0);
}

TEST_CASE("k-means examples") {
  KMeansOptions opt;
  opt.restarts = 4;
  const auto sep = kmeans(column({0.0, 0.1, 10.0, 10.1}), 2, opt);
  CHECK(sep.assignments[0] == sep.assignments[1]);
  CHECK(sep.assignments[2] == sep.assignments[3]);
  CHECK(sep.assignments[0] != sep.assignments[2]);
  std::vector<double> cents{sep.centroids[0], sep.centroids[1]};
  std::sort(cents.begin(), cents.end());
  CHECK(cents[0] == doctest::Approx(0.05));
  CHECK(cents[1] == doctest::Approx(10.05));

  Tensor<double> pts({5, 2});
  pts.data = {0, 0, 1, 2, 3, 1, 4, 4, 2, 3};
  const auto one = kmeans(pts, 1, opt);
  CHECK(one.centroids[0] == doctest::Approx(2.0));
  CHECK(one.centroids[1] == doctest::Approx(2.0));
  double tv = 0.0;
  for (std::size_t i = 0; i < 5; ++i) tv += std::pow(pts[2 * i] - 2.0, 2) + std::pow(pts[2 * i + 1] - 2.0, 2);
  CHECK(one.inertia == doctest::Approx(tv));

  CHECK_THROWS_AS(kmeans(column({1.0, 2.0}), 3, opt), ConfigError);
}

TEST_CASE("k-means reaches the exhaustive optimum for n <= 8, d = 1, k <= 3") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  KMeansOptions opt;
  opt.restarts = 10;
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 3 + static_cast<std::size_t>(trial % 6);
    const int k = 1 + trial % 3;
    std::vector<double> x(n);
    for (auto& v : x) v = u(rng);
    opt.seed = static_cast<std::uint64_t>(trial);
    const auto r = kmeans(column(x), static_cast<std::size_t>(k), opt);
    CHECK(r.inertia == doctest::Approx(brute_force_inertia(x, k)).epsilon(1e-9));
  }
}

TEST_CASE("k-means result is a fixed point, consistent and thread-independent") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n;
  Tensor<double> pts({300, 4});
  for (std::size_t i = 0; i < 300; ++i) {
    for (std::size_t j = 0; j < 4; ++j) pts[i * 4 + j] = n(rng) + 4.0 * static_cast<double>(i % 5 == j);
  }
  KMeansOptions opt;
  opt.restarts = 6;
  opt.seed = 3;
  const auto serial = kmeans(pts, 5, opt);
  opt.parallel = true;
  const auto parallel = kmeans(pts, 5, opt);
  CHECK(serial.assignments == parallel.assignments);
  CHECK(serial.inertia == parallel.inertia);
  CHECK(serial.inertia == doctest::Approx(inertia(pts, serial.centroids, serial.assignments)).epsilon(1e-9));
  for (int a : serial.assignments) CHECK(a < 5);

  // assigning to the returned centroids reproduces the assignments
  for (std::size_t i = 0; i < 300; ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int c = 0; c < 5; ++c) {
      double d = 0.0;
      for (std::size_t j = 0; j < 4; ++j) d += std::pow(pts[i * 4 + j] - serial.centroids[static_cast<std::size_t>(c) * 4 + j], 2);
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    CHECK(best == serial.assignments[i]);
  }
}

TEST_CASE("similarities stay finite for far-apart points and many degrees of freedom") {
  const auto p = pairwise_p(column({0.0, 1e4, 3e4}), 100.0);
  double sum = 0.0;
  for (double v : p.values) {
    CHECK(std::isfinite(v));
    sum += v;
  }
  CHECK(sum == doctest::Approx(1.0));
  CHECK(p(0, 1) > p(0, 2));
  const auto r = clustering_loss_with_grad(column({0.0, 1e4, 3e4}), column({0.0, 1e4, 3e4}), 100.0, true);
  CHECK(std::isfinite(r.loss));
  for (double v : r.d_mu.data) CHECK(std::isfinite(v));
}
