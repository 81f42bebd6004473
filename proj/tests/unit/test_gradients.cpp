#include <doctest.h>

#include "support/grad_suite.hpp"

using namespace dcfae;
using namespace dcfae::testing;

TEST_CASE("analytic gradients match central differences") {
  for (const auto& c : gradient_cases()) {
    CAPTURE(c.name);
    const auto r = run_gradient_case(c);
    CAPTURE(r.worst_parameter);
    CHECK(r.checked > 0);
    CHECK(r.worst_relative_error <= 1e-4);
  }
}

TEST_CASE("gradients without residual blocks") {
  GradCase c{"neg_elbo", {}, true, false, 3};
  c.weights.generator = 2.0;
  auto net = tiny_network<double>(11, false, false);
  const auto& arch = net.fae.arch;
  const auto x = uniform_tensor<double>({3, arch.canvas, arch.canvas, 1}, 1);
  const auto eps = normal_tensor<double>({3, arch.latent_dim}, 2);
  BatchOptions opt;
  opt.use_discriminator = true;
  auto params = net.all_parameters();
  for (auto* p : params) p->zero_grad();
  backward_batch(net, forward_batch(net, x, eps, opt), c.weights);
  const auto r = check_gradients(params, [&] { return objective_value(forward_batch(net, x, eps, opt).losses, c.weights); });
  CAPTURE(r.worst_parameter);
  CHECK(r.worst_relative_error <= 1e-4);
}

TEST_CASE("stop-gradient through P drops exactly the P path") {
  auto net = tiny_network<double>(5);
  const auto& arch = net.fae.arch;
  const auto x = uniform_tensor<double>({4, arch.canvas, arch.canvas, 1}, 3);
  const auto eps = normal_tensor<double>({4, arch.latent_dim}, 4);
  BatchOptions opt;
  opt.use_discriminator = false;
  opt.use_head = true;
  opt.rho = 2.0;
  ObjectiveWeights w;
  w.reconstruction = w.kl = 0.0;
  w.clustering = 1.0;
  w.grad_through_p = false;

  auto params = net.all_parameters();
  for (auto* p : params) p->zero_grad();
  const auto pass = forward_batch(net, x, eps, opt);
  backward_batch(net, pass, w);
  // Head gradients are unaffected; encoder gradients come only from Q.
  auto head = net.head_parameters();
  std::vector<Tensor<double>> head_grads;
  for (auto* p : head) head_grads.push_back(p->grad);

  for (auto* p : params) p->zero_grad();
  w.grad_through_p = true;
  backward_batch(net, pass, w);
  for (std::size_t i = 0; i < head.size(); ++i) {
    for (std::size_t j = 0; j < head[i]->grad.size(); ++j) CHECK(head[i]->grad[j] == doctest::Approx(head_grads[i][j]));
  }
}
