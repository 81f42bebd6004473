#include <doctest.h>

#include <random>

#include "dcfae/errors.hpp"
#include "dcfae/metrics.hpp"
#include "support/properties.hpp"

using namespace dcfae;
using namespace dcfae::testing;

namespace {
double acc(std::vector<int> t, std::vector<int> p) { return clustering_accuracy({t, p}); }
double nmi_of(std::vector<int> t, std::vector<int> p) { return nmi({t, p}); }
double ari_of(std::vector<int> t, std::vector<int> p) { return ari({t, p}); }
}  // namespace

TEST_CASE("ACC equals the exhaustive maximum for every labelling with n <= 6, k <= 3") {
  const auto r = enumerate_accuracy(6);
  CHECK(r.pairs == 3 * 3 + 9 * 9 + 27 * 27 + 81 * 81 + 243 * 243 + 729 * 729);
  CHECK(r.mismatches == 0);
}

TEST_CASE("ACC examples") {
  CHECK(acc({0, 0, 1, 1}, {1, 1, 0, 0}) == 1.0);
  CHECK(acc({0, 0, 1, 1}, {1, 0, 0, 0}) == 0.75);
  CHECK(acc({0, 0, 1, 1}, {0, 0, 0, 0}) == 0.5);
  // more clusters than classes pads the confusion matrix
  CHECK(acc({0, 0, 1, 1}, {0, 1, 2, 3}) == 0.5);
  CHECK_THROWS_AS(acc({0, 1}, {0}), ShapeError);
}

TEST_CASE("Hungarian solver matches brute force on random square costs") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(trial % 6);
    std::vector<std::vector<double>> cost(n, std::vector<double>(n));
    for (auto& row : cost) for (auto& v : row) v = u(rng);
    const auto assign = solve_assignment(cost);
    double got = 0.0;
    for (std::size_t i = 0; i < n; ++i) got += cost[i][static_cast<std::size_t>(assign[i])];
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += cost[i][static_cast<std::size_t>(perm[i])];
      best = std::min(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    CHECK(got == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("NMI and ARI edge cases") {
  CHECK(nmi_of({0, 0, 1, 1, 2}, {2, 2, 0, 0, 1}) == doctest::Approx(1.0));
  CHECK(nmi_of({0, 0, 1, 1}, {0, 0, 0, 0}) == 0.0);
  CHECK(nmi_of({3, 3, 3}, {1, 1, 1}) == 1.0);
  CHECK(ari_of({0, 0, 1, 1, 2}, {2, 2, 0, 0, 1}) == doctest::Approx(1.0));
  CHECK(ari_of({0, 0, 1, 1}, {0, 0, 0, 0}) == doctest::Approx(0.0));
  CHECK(ari_of({3, 3, 3}, {1, 1, 1}) == 1.0);
  CHECK_THROWS_AS(nmi_of({0, 1}, {0}), ShapeError);
  CHECK_THROWS_AS(ari_of({0, 1}, {0}), ShapeError);
}

TEST_CASE("NMI and ARI are symmetric, label-invariant and bounded") {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> lab(0, 3);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<int> t(20), p(20);
    for (auto& v : t) v = lab(rng);
    for (auto& v : p) v = lab(rng);
    std::vector<int> relabeled = p;
    for (auto& v : relabeled) v = 3 - v;
    const double a = nmi_of(t, p);
    CHECK(a >= 0.0);
    CHECK(a <= 1.0 + 1e-12);
    CHECK(nmi_of(p, t) == doctest::Approx(a));
    CHECK(nmi_of(t, relabeled) == doctest::Approx(a));
    const double r = ari_of(t, p);
    CHECK(r <= 1.0 + 1e-12);
    CHECK(ari_of(p, t) == doctest::Approx(r));
    CHECK(ari_of(t, relabeled) == doctest::Approx(r));
    CHECK(acc(t, relabeled) == doctest::Approx(acc(t, p)));
  }
}

TEST_CASE("ARI of random permutations of balanced labels averages to zero") {
  const auto r = permutation_ari(10000);
  INFO("mean " << r.mean << " se " << r.standard_error);
  CHECK(r.ok());
}

TEST_CASE("metric report serialization") {
  std::vector<int> t{0, 0, 1, 1}, p{1, 0, 0, 0};
  const auto rep = evaluate_clustering({t, p});
  CHECK(rep.acc == 0.75);
  CHECK(rep.n == 4);
  const auto j = rep.to_json();
  CHECK(j.at("acc").get<double>() == 0.75);
  CHECK(format_fixed6(nlohmann::json{{"x", 0.5}}, -1) == "{\"x\":0.500000}");
  CHECK(round6(0.12345678) == 0.123457);
}
