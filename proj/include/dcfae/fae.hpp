#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "dcfae/layers.hpp"

namespace dcfae {

/// Shape hyperparameters of the encoder / decoder / discriminator.
struct ArchitectureConfig {
  std::size_t canvas = 32;
  std::size_t channels = 1;
  std::size_t latent_dim = 50;
  // Filters of the four stride-2 groups, shared by encoder and discriminator;
  // the decoder walks the same ladder backwards.
  std::vector<std::size_t> filters{32, 64, 128, 256};
  bool residual = true;

  void validate() const;
  /// Spatial side after each stride-2 group: canvas, ceil(canvas/2), ...
  std::vector<std::size_t> spatial_ladder() const;
  std::size_t pixels() const { return canvas * canvas * channels; }

  nlohmann::json to_json() const;
  static ArchitectureConfig from_json(const nlohmann::json& j);
  bool operator==(const ArchitectureConfig&) const = default;
};

template <typename T>
struct GaussianPosterior {
  Tensor<T> mu;       // [M, L]
  Tensor<T> log_var;  // [M, L]
};

template <typename T>
class Encoder {
 public:
  Encoder() = default;
  explicit Encoder(const ArchitectureConfig& arch);

  GaussianPosterior<T> forward(const Tensor<T>& x, Cache<T>* cache) const;
  /// Returns dL/dx when requested.
  Tensor<T> backward(const Cache<T>& cache, const Tensor<T>& d_mu, const Tensor<T>& d_log_var, bool input_grad);
  void init(Rng& rng);
  void collect(ParameterList<T>& out);

 private:
  Sequential<T> trunk_;
  Dense<T> mu_head_{"encoder.mu", 1, 1};
  Dense<T> log_var_head_{"encoder.log_var", 1, 1};
};

/// Maps z to Bernoulli logits; eta = sigmoid(logits).
template <typename T>
class Decoder {
 public:
  Decoder() = default;
  explicit Decoder(const ArchitectureConfig& arch);

  Tensor<T> forward_logits(const Tensor<T>& z, Cache<T>* cache) const;
  Tensor<T> backward(const Cache<T>& cache, const Tensor<T>& d_logits);
  void init(Rng& rng);
  void collect(ParameterList<T>& out) { net_.collect(out); }

 private:
  Sequential<T> net_;
  std::size_t side_ = 0;
  std::size_t channels_ = 0;
};

/// One real-vs-fake logit per image.
template <typename T>
class Discriminator {
 public:
  Discriminator() = default;
  explicit Discriminator(const ArchitectureConfig& arch);

  Tensor<T> forward(const Tensor<T>& x, Cache<T>* cache) const;
  Tensor<T> backward(const Cache<T>& cache, const Tensor<T>& d_logits, bool input_grad);
  void init(Rng& rng);
  void collect(ParameterList<T>& out) { net_.collect(out); }

 private:
  Sequential<T> net_;
};

/// Encoder (phi), decoder/generator (theta) and discriminator (psi).
template <typename T>
struct FaeModel {
  ArchitectureConfig arch;
  Encoder<T> encoder;
  Decoder<T> decoder;
  Discriminator<T> discriminator;

  FaeModel() = default;
  /// He-initialized networks; each network draws from its own seeded stream.
  FaeModel(const ArchitectureConfig& a, std::uint64_t seed);

  GaussianPosterior<T> encode(const Tensor<T>& x) const;
  /// Bernoulli means [M, H].
  Tensor<T> decode(const Tensor<T>& z) const;
  Tensor<T> discriminate(const Tensor<T>& x) const;

  ParameterList<T> encoder_parameters() { ParameterList<T> p; encoder.collect(p); return p; }
  ParameterList<T> decoder_parameters() { ParameterList<T> p; decoder.collect(p); return p; }
  ParameterList<T> discriminator_parameters() { ParameterList<T> p; discriminator.collect(p); return p; }
  ParameterList<T> parameters();

  void check_input(const Tensor<T>& x) const;
};

// ---- losses ---------------------------------------------------------------

inline constexpr double kProbabilityClamp = 1e-7;

double sigmoid(double v);
/// log(1 + e^v) without overflow.
double softplus(double v);
double clamp_probability(double p);

/// z = mu + exp(log_var / 2) * eps.
template <typename T>
Tensor<T> reparameterize(const GaussianPosterior<T>& post, const Tensor<T>& eps);

struct NegElboTerms {
  double reconstruction = 0.0;  // -(1/M) sum x log eta + (1-x) log(1-eta)
  double kl = 0.0;              // (1/M) sum 1/2 (var + mu^2 - log var - 1)
  double value() const { return reconstruction + kl; }
};

/// Batch-mean KL(q(z|x) || N(0, I)) with log_var holding the log of the variance.
template <typename T>
double kl_divergence(const GaussianPosterior<T>& post);

/// Negated ELBO. `x` is [M, ...] with H values per row, `eta` [M, H]; eta is
/// clamped to [1e-7, 1-1e-7] before the logarithms. Throws NumericError if a
/// term is not finite.
template <typename T>
NegElboTerms neg_elbo_terms(const Tensor<T>& x, const GaussianPosterior<T>& post, const Tensor<T>& eta);
template <typename T>
double elbo_loss(const Tensor<T>& x, const GaussianPosterior<T>& post, const Tensor<T>& eta) {
  return neg_elbo_terms(x, post, eta).value();
}

/// Binary cross-entropy between targets (M zeros then M ones) and predicted
/// probabilities; probabilities are clamped.
double discriminator_loss(std::span<const int> targets, std::span<const double> probs);
/// Same loss from raw logits over the double batch [fake, real].
double discriminator_loss_from_logits(std::span<const double> fake_logits, std::span<const double> real_logits);

/// Non-saturating generator loss -(1/M) sum log tau'.
double generator_loss(std::span<const double> fake_probs);
double generator_loss_from_logits(std::span<const double> fake_logits);

/// L_alpha = neg_elbo + lambda * L_G.
double fae_objective(double neg_elbo, double generator, double lambda);
template <typename T>
double fae_objective(const Tensor<T>& x, const GaussianPosterior<T>& post, const Tensor<T>& eta,
                     std::span<const double> fake_probs, double lambda) {
  return fae_objective(elbo_loss(x, post, eta), generator_loss(fake_probs), lambda);
}

}  // namespace dcfae
