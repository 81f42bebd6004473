#pragma once

#include <string>
#include <vector>

#include "tiny.hpp"

namespace dcfae::testing {

struct GradCase {
  std::string name;
  ObjectiveWeights weights;
  bool use_discriminator = false;
  bool use_head = false;
  std::size_t batch = 2;
  // Restrict the check to the discriminator; with detached fakes the
  // analytic pass deliberately ignores the generator side.
  bool discriminator_only = false;
};

inline std::vector<GradCase> gradient_cases() {
  std::vector<GradCase> cases;
  for (std::size_t m : {2u, 4u}) {
    const std::string suffix = " M=" + std::to_string(m);
    {
      GradCase c{"neg_elbo" + suffix, {}, false, false, m};
      cases.push_back(c);
    }
    {
      GradCase c{"L_D" + suffix, {}, true, false, m};
      c.weights.reconstruction = 0.0;
      c.weights.kl = 0.0;
      c.weights.discriminator = 1.0;
      c.discriminator_only = true;
      cases.push_back(c);
    }
    {
      GradCase c{"L_D through fakes" + suffix, {}, true, false, m};
      c.weights.reconstruction = 0.0;
      c.weights.kl = 0.0;
      c.weights.discriminator = 1.0;
      c.weights.discriminator_through_fakes = true;
      cases.push_back(c);
    }
    {
      GradCase c{"L_G" + suffix, {}, true, false, m};
      c.weights.reconstruction = 0.0;
      c.weights.kl = 0.0;
      c.weights.generator = 1.0;
      cases.push_back(c);
    }
    {
      GradCase c{"L_alpha" + suffix, {}, true, false, m};
      c.weights.generator = 3.0;
      cases.push_back(c);
    }
  }
  // With two points every ordered pair has mass 1/2 in both P and Q, so the
  // clustering loss is constant; only M=4 exercises it.
  {
    GradCase c{"L_gamma M=4", {}, false, true, 4};
    c.weights.reconstruction = 0.0;
    c.weights.kl = 0.0;
    c.weights.clustering = 1.0;
    cases.push_back(c);
  }
  {
    GradCase c{"L_alpha_gamma M=4", {}, true, true, 4};
    c.weights.generator = 3.0;
    c.weights.clustering = 2.0;
    c.weights.l2 = 1.0;
    cases.push_back(c);
  }
  return cases;
}

inline GradCheckResult run_gradient_case(const GradCase& c, std::uint64_t seed = 7) {
  auto net = tiny_network<double>(seed, c.use_head);
  const auto& arch = net.fae.arch;
  const Tensor<double> x = uniform_tensor<double>({c.batch, arch.canvas, arch.canvas, arch.channels}, seed + 1);
  const Tensor<double> eps = normal_tensor<double>({c.batch, arch.latent_dim}, seed + 2);
  BatchOptions opt;
  opt.use_discriminator = c.use_discriminator;
  opt.use_head = c.use_head;
  opt.rho = 3.0;
  opt.training = true;
  opt.dropout_seed = seed + 3;

  auto params = c.discriminator_only ? net.fae.discriminator_parameters() : net.all_parameters();
  for (auto* p : net.all_parameters()) p->zero_grad();
  const auto pass = forward_batch(net, x, eps, opt);
  backward_batch(net, pass, c.weights);

  return check_gradients(params, [&] { return objective_value(forward_batch(net, x, eps, opt).losses, c.weights); });
}

}  // namespace dcfae::testing
