#pragma once

#include <cstdint>
#include <optional>

#include "dcfae/cluster_head.hpp"
#include "dcfae/fae.hpp"

namespace dcfae {

/// The full model: FAE plus (optionally) the dense embedding head.
template <typename T>
struct DcfaeNetwork {
  FaeModel<T> fae;
  std::optional<DenseHead<T>> head;

  /// phi, theta and (if present) xi: everything the generator-side step updates.
  ParameterList<T> generator_side_parameters();
  ParameterList<T> head_parameters();
  ParameterList<T> all_parameters();
};

/// Weighted sum of the batch losses. The defaults give the negated ELBO.
struct ObjectiveWeights {
  double reconstruction = 1.0;
  double kl = 1.0;
  double generator = 0.0;
  double discriminator = 0.0;
  double clustering = 0.0;
  double l2 = 0.0;
  // Whether the discriminator loss also differentiates through the fakes.
  bool discriminator_through_fakes = false;
  // Whether the clustering loss reaches the encoder through P as well as Q.
  bool grad_through_p = true;
};

struct BatchOptions {
  bool use_discriminator = true;
  bool use_head = false;
  double rho = 100.0;
  bool training = true;
  std::uint64_t dropout_seed = 0;
};

struct LossBreakdown {
  double reconstruction = 0.0;
  double kl = 0.0;
  double generator = 0.0;
  double discriminator = 0.0;
  double clustering = 0.0;
  double l2 = 0.0;
  double discriminator_score = 0.0;
  double generator_score = 0.0;

  double neg_elbo() const { return reconstruction + kl; }
};

double objective_value(const LossBreakdown& losses, const ObjectiveWeights& weights);

/// Everything one batch forward pass produces, including the caches the
/// backward pass reads.
template <typename T>
struct BatchPass {
  BatchOptions options;
  Tensor<T> x;
  Tensor<T> eps;
  GaussianPosterior<T> post;
  Tensor<T> z;
  Tensor<T> logits;       // decoder output [M, H]
  Tensor<T> eta;          // sigmoid(logits), also the fake images
  Tensor<T> disc_logits;  // [2M]: fakes first, then reals
  Tensor<T> embedding;    // [M, d] when the head is used
  LossBreakdown losses;

  Cache<T> encoder_cache;
  Cache<T> decoder_cache;
  Cache<T> discriminator_cache;
  Cache<T> head_cache;
};

/// Encodes, samples z with the given noise, decodes, scores [fake, real] with
/// the discriminator and embeds mu with the head, computing every loss.
/// The reconstruction term is evaluated from logits, which matches the
/// clamped form wherever eta stays inside [1e-7, 1-1e-7].
template <typename T>
BatchPass<T> forward_batch(const DcfaeNetwork<T>& net, const Tensor<T>& x, const Tensor<T>& eps,
                           const BatchOptions& options);

/// Accumulates d(objective)/d(parameter) into every parameter that requires
/// a gradient.
template <typename T>
void backward_batch(DcfaeNetwork<T>& net, const BatchPass<T>& pass, const ObjectiveWeights& weights);

}  // namespace dcfae
