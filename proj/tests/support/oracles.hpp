#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dcfae/cluster_head.hpp"
#include "dcfae/fae.hpp"
#include "dcfae/metrics.hpp"
#include "dcfae/objective.hpp"
#include "dcfae/optim.hpp"

namespace dcfae::testing {

/// One closed-form value: what the library computes, an independent
/// recomputation written out here, and the four-decimal value quoted for it.
struct OracleCheck {
  std::string name;
  double actual;
  double expected;
  std::optional<double> quoted;
};

/// Smallest inertia over every labelling of 1-D points into k clusters.
inline double brute_force_inertia(const std::vector<double>& x, int k) {
  const std::size_t n = x.size();
  std::vector<int> label(n, 0);
  double best = std::numeric_limits<double>::infinity();
  while (true) {
    double total = 0.0;
    for (int c = 0; c < k; ++c) {
      double sum = 0.0, count = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (label[i] == c) {
          sum += x[i];
          count += 1.0;
        }
      }
      if (count == 0.0) continue;
      const double mean = sum / count;
      for (std::size_t i = 0; i < n; ++i) {
        if (label[i] == c) total += (x[i] - mean) * (x[i] - mean);
      }
    }
    best = std::min(best, total);
    std::size_t pos = 0;
    while (pos < n && ++label[pos] == k) label[pos++] = 0;
    if (pos == n) break;
  }
  return best;
}

inline Tensor<double> column(const std::vector<double>& v) {
  Tensor<double> t({v.size(), 1});
  t.data = v;
  return t;
}

inline double logistic(double v) { return 1.0 / (1.0 + std::exp(-v)); }

inline std::vector<OracleCheck> closed_form_checks() {
  std::vector<OracleCheck> out;
  const double ln2 = std::log(2.0);

  {
    GaussianPosterior<double> post{column({1.0}), column({0.0})};
    // 1/2 (sigma^2 + mu^2 - log sigma^2 - 1) with sigma = 1, mu = 1
    out.push_back({"KL at mu=1, sigma=1", kl_divergence(post), 0.5 * (1.0 + 1.0 - 0.0 - 1.0), 0.5});
  }
  {
    GaussianPosterior<double> post{column({0.0}), column({0.0})};
    out.push_back({"KL at mu=0, sigma=1", kl_divergence(post), 0.0, 0.0});
    const auto terms = neg_elbo_terms(column({1.0}), post, column({0.5}));
    out.push_back({"BCE at eta=1/2", terms.reconstruction, -std::log(0.5), 0.6931});
    out.push_back({"neg ELBO, M=H=L=1", terms.value(), -std::log(0.5) + 0.0, 0.6931});
  }
  {
    GaussianPosterior<double> post{column({1.0}), column({std::log(4.0)})};
    const auto z = reparameterize(post, column({1.0}));
    out.push_back({"z = mu + sqrt(var) eps", z[0], 1.0 + std::sqrt(4.0) * 1.0, 3.0});
  }
  out.push_back({"sigmoid(4)", sigmoid(4.0), 1.0 / (1.0 + std::exp(-4.0)), 0.9820});
  {
    const std::vector<int> targets{0, 1};
    const std::vector<double> probs{0.2, 0.9};
    out.push_back({"L_D at tau=[0,1], tau~=[0.2,0.9]", discriminator_loss(targets, probs),
                   -0.5 * (std::log(1.0 - 0.2) + std::log(0.9)), 0.1643});
    const std::vector<double> half{0.5, 0.5};
    out.push_back({"L_D at tau~=1/2", discriminator_loss(targets, half), -std::log(0.5), 0.6931});
  }
  {
    const std::vector<double> half{0.5};
    const std::vector<double> inv_e{std::exp(-1.0)};
    out.push_back({"L_G at tau'=1/2", generator_loss(half), ln2, 0.6931});
    out.push_back({"L_G at tau'=1/e", generator_loss(inv_e), 1.0, 1.0});
  }
  out.push_back({"L_alpha = 2 + 100 * 0.5", fae_objective(2.0, 0.5, 100.0), 2.0 + 100.0 * 0.5, 52.0});
  {
    LossBreakdown l;
    l.reconstruction = 2.0;
    l.generator = 0.5;
    l.clustering = 0.7;
    ObjectiveWeights w;
    w.generator = 100.0;
    w.clustering = 10.0;
    out.push_back({"L_alpha_gamma = 52 + 10 * 0.7", objective_value(l, w), 52.0 + 10.0 * 0.7, 59.0});
  }

  // Student-t kernels for the 1-D configuration {0, 1, 3} with one degree of
  // freedom: 1/(1+d^2) for d = 1, 3, 2.
  {
    const double k01 = 1.0 / (1.0 + 1.0), k02 = 1.0 / (1.0 + 9.0), k12 = 1.0 / (1.0 + 4.0);
    const double z = 2.0 * (k01 + k02 + k12);
    const auto pts = column({0.0, 1.0, 3.0});
    const SimilarityMatrix p = pairwise_p(pts, 1.0);
    const SimilarityMatrix q = pairwise_q(pts);
    out.push_back({"P01 of {0,1,3}, rho=1", p(0, 1), k01 / z, 0.3125});
    out.push_back({"P02 of {0,1,3}, rho=1", p(0, 2), k02 / z, 0.0625});
    out.push_back({"P12 of {0,1,3}, rho=1", p(1, 2), k12 / z, 0.125});
    out.push_back({"Q01 of {0,1,3}", q(0, 1), k01 / z, 0.3125});
    double h = 0.0;
    for (double k : {k01, k01, k02, k02, k12, k12}) h -= (k / z) * std::log(k / z);
    out.push_back({"L_gamma at Q=P equals entropy(P)", clustering_loss(p, p), h, std::nullopt});
  }
  {
    const auto pts = column({0.0, 5.0});
    const SimilarityMatrix p = pairwise_p(pts, 100.0);
    out.push_back({"P12 with M=2", p(0, 1), 0.5, 0.5});
    out.push_back({"L_gamma with M=2", clustering_loss(p, pairwise_q(pts)), -2.0 * 0.5 * std::log(0.5), 0.6931});
  }
  {
    SimilarityMatrix p{2, {0.0, 1.0, 0.0, 0.0}};
    SimilarityMatrix q{2, {0.0, 0.25, 0.75, 0.0}};
    out.push_back({"L_gamma single term", clustering_loss(p, q), -std::log(0.25), 1.3863});
  }
  {
    const std::vector<double> x{0.0, 1.0, 2.0, 9.0, 10.0};
    KMeansOptions opt;
    opt.seed = 3;
    out.push_back({"k-means inertia of {0,1,2,9,10}, k=2", kmeans(column(x), 2, opt).inertia, brute_force_inertia(x, 2),
                   2.5});
  }

  const std::vector<int> t{0, 0, 1, 1};
  {
    const std::vector<int> p{1, 0, 0, 0};
    out.push_back({"ACC [0,0,1,1] vs [1,0,0,0]", clustering_accuracy({t, p}), 3.0 / 4.0, 0.75});
    const std::vector<int> c{0, 0, 0, 0};
    out.push_back({"ACC [0,0,1,1] vs [0,0,0,0]", clustering_accuracy({t, c}), 2.0 / 4.0, 0.5});
  }
  {
    // Contingency [[1,1],[0,2]]: rows {2,2}, columns {1,3}.
    const std::vector<int> p{0, 1, 1, 1};
    const double mi = 0.25 * std::log(0.25 / (0.5 * 0.25)) + 0.25 * std::log(0.25 / (0.5 * 0.75)) +
                      0.5 * std::log(0.5 / (0.5 * 0.75));
    const double h_true = ln2;
    const double h_pred = -(0.25 * std::log(0.25) + 0.75 * std::log(0.75));
    // Arithmetic-mean normalization gives 0.3437, the geometric mean used
    // for reports 0.3456.
    out.push_back({"NMI [0,0,1,1] vs [0,1,1,1]", nmi({t, p}), mi / std::sqrt(h_true * h_pred), 0.3456});
    out.push_back({"NMI [0,0,1,1] vs [0,1,1,1], arithmetic", nmi({t, p}, NmiNormalization::kArithmetic),
                   mi / (0.5 * (h_true + h_pred)), 0.3437});
    // sum C(n_ij,2) = 1; rows 1+1 = 2; columns 0+3 = 3; C(4,2) = 6.
    const double expected_index = 2.0 * 3.0 / 6.0;
    const double max_index = 0.5 * (2.0 + 3.0);
    // The index equals its expectation here, so the adjusted value is 0.
    out.push_back({"ARI [0,0,1,1] vs [0,1,1,1]", ari({t, p}), (1.0 - expected_index) / (max_index - expected_index),
                   0.0});
  }
  {
    const std::vector<double> real{4.0}, fake{-4.0};
    out.push_back({"discriminator score, logits 4/-4", discriminator_score(real, fake),
                   0.5 * (logistic(4.0) + (1.0 - logistic(-4.0))), 0.9820});
    const std::vector<double> r8{std::log(0.8 / 0.2)}, f3{std::log(0.3 / 0.7)};
    out.push_back({"discriminator score, probs 0.8/0.3", discriminator_score(r8, f3), (0.8 + 0.7) / 2.0, 0.75});
    out.push_back({"generator score, logit -4", generator_score(fake), logistic(-4.0), 0.0180});
    const std::vector<double> two{0.0, 4.0};
    out.push_back({"generator score, logits {0,4}", generator_score(two), 0.5 * (0.5 + logistic(4.0)), 0.7410});
  }
  {
    Parameter<double> p("w", {3});
    p.value.data = {1.0, -2.0, 0.5};
    p.grad.data = {0.3, -7.0, 1e-3};
    AdamConfig cfg;
    cfg.learning_rate = 1e-3;
    Adam adam(cfg);
    adam.step(ParameterList<double>{&p});
    // First step: m_hat = g, v_hat = g^2, so the move is lr * g / (|g| + eps).
    const double g = 0.3;
    out.push_back({"Adam first step, g=0.3", 1.0 - p.value[0], cfg.learning_rate * g / (std::abs(g) + cfg.epsilon),
                   1e-3});
    out.push_back({"Adam first step, g=-7", p.value[1] - (-2.0), cfg.learning_rate * 7.0 / (7.0 + cfg.epsilon), 1e-3});
  }
  return out;
}

}  // namespace dcfae::testing
