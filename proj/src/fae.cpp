#include "dcfae/fae.hpp"

#include <cmath>

namespace dcfae {

void ArchitectureConfig::validate() const {
  if (canvas == 0 || channels == 0 || latent_dim == 0) throw ConfigError("architecture sizes must be positive");
  if (filters.empty()) throw ConfigError("architecture needs at least one filter group");
  for (std::size_t f : filters) {
    if (f == 0) throw ConfigError("filter counts must be positive");
  }
}

std::vector<std::size_t> ArchitectureConfig::spatial_ladder() const {
  std::vector<std::size_t> sides{canvas};
  for (std::size_t i = 0; i < filters.size(); ++i) sides.push_back((sides.back() + 1) / 2);
  return sides;
}

nlohmann::json ArchitectureConfig::to_json() const {
  return {{"canvas", canvas}, {"channels", channels}, {"latent_dim", latent_dim}, {"filters", filters},
          {"residual", residual}};
}

ArchitectureConfig ArchitectureConfig::from_json(const nlohmann::json& j) {
  ArchitectureConfig a;
  a.canvas = j.value("canvas", a.canvas);
  a.channels = j.value("channels", a.channels);
  a.latent_dim = j.value("latent_dim", a.latent_dim);
  a.filters = j.value("filters", a.filters);
  a.residual = j.value("residual", a.residual);
  return a;
}

// ---- Encoder --------------------------------------------------------------

template <typename T>
Encoder<T>::Encoder(const ArchitectureConfig& arch) {
  arch.validate();
  const auto sides = arch.spatial_ladder();
  std::size_t in = arch.channels;
  for (std::size_t i = 0; i < arch.filters.size(); ++i) {
    const std::string group = "encoder.g" + std::to_string(i);
    trunk_.add(Conv2d<T>(group + ".down", in, arch.filters[i], 2));
    trunk_.add(Relu<T>());
    if (arch.residual) trunk_.add(ResidualBlock<T>(group + ".res", arch.filters[i]));
    in = arch.filters[i];
  }
  const std::size_t flat = sides.back() * sides.back() * in;
  trunk_.add(Reshape<T>({flat}));
  mu_head_ = Dense<T>("encoder.mu", flat, arch.latent_dim);
  log_var_head_ = Dense<T>("encoder.log_var", flat, arch.latent_dim);
}

template <typename T>
GaussianPosterior<T> Encoder<T>::forward(const Tensor<T>& x, Cache<T>* cache) const {
  ForwardContext ctx;
  if (cache) cache->children.resize(3);
  Tensor<T> h = trunk_.forward(x, ctx, cache ? &cache->children[0] : nullptr);
  GaussianPosterior<T> post;
  post.mu = mu_head_.forward(h, ctx, cache ? &cache->children[1] : nullptr);
  post.log_var = log_var_head_.forward(h, ctx, cache ? &cache->children[2] : nullptr);
  return post;
}

template <typename T>
Tensor<T> Encoder<T>::backward(const Cache<T>& cache, const Tensor<T>& d_mu, const Tensor<T>& d_log_var,
                               bool input_grad) {
  Tensor<T> dh = mu_head_.backward(cache.children[1], d_mu, true);
  Tensor<T> dh2 = log_var_head_.backward(cache.children[2], d_log_var, true);
  for (std::size_t i = 0; i < dh.size(); ++i) dh[i] += dh2[i];
  return trunk_.backward(cache.children[0], dh, input_grad);
}

template <typename T>
void Encoder<T>::init(Rng& rng) {
  ParameterList<T> params;
  trunk_.collect(params);
  // trunk parameters come in (weight [fan_in, out], bias) pairs
  for (std::size_t i = 0; i + 1 < params.size(); i += 2) {
    const double fan_in = static_cast<double>(params[i]->value.dim(0));
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (auto& v : params[i]->value.data) v = static_cast<T>(dist(rng));
    params[i + 1]->value.fill(T{0});
  }
  mu_head_.init_normal(rng, 0.01);
  log_var_head_.init_normal(rng, 0.01);
}

template <typename T>
void Encoder<T>::collect(ParameterList<T>& out) {
  trunk_.collect(out);
  mu_head_.collect(out);
  log_var_head_.collect(out);
}

// ---- Decoder --------------------------------------------------------------

template <typename T>
Decoder<T>::Decoder(const ArchitectureConfig& arch) : side_(arch.canvas), channels_(arch.channels) {
  arch.validate();
  const auto sides = arch.spatial_ladder();
  const std::size_t groups = arch.filters.size();
  const std::size_t top = arch.filters.back();
  net_.add(Dense<T>("decoder.project", arch.latent_dim, sides.back() * sides.back() * top));
  net_.add(Relu<T>());
  net_.add(Reshape<T>({sides.back(), sides.back(), top}));
  for (std::size_t i = groups; i-- > 0;) {
    const std::string group = "decoder.g" + std::to_string(groups - 1 - i);
    if (arch.residual) net_.add(ResidualBlock<T>(group + ".res", arch.filters[i]));
    const std::size_t out = i > 0 ? arch.filters[i - 1] : arch.channels;
    net_.add(ConvTranspose2d<T>(group + ".up", arch.filters[i], out, sides[i], 2));
    if (i > 0) net_.add(Relu<T>());
  }
}

template <typename T>
Tensor<T> Decoder<T>::forward_logits(const Tensor<T>& z, Cache<T>* cache) const {
  Tensor<T> y = net_.forward(z, ForwardContext{}, cache);
  return y.reshaped({y.rows(), y.cols()});
}

template <typename T>
Tensor<T> Decoder<T>::backward(const Cache<T>& cache, const Tensor<T>& d_logits) {
  return net_.backward(cache, d_logits.reshaped({d_logits.rows(), side_, side_, channels_}), true);
}

template <typename T>
void Decoder<T>::init(Rng& rng) {
  ParameterList<T> params;
  net_.collect(params);
  for (std::size_t i = 0; i + 1 < params.size(); i += 2) {
    // each transposed-conv output pixel sees about in * k*k / stride^2 inputs
    const Shape& s = params[i]->value.shape;
    const bool transposed = params[i]->name.find(".up.") != std::string::npos;
    const double fan_in = transposed ? static_cast<double>(s[0] * 9) / 4.0 : static_cast<double>(s[0]);
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (auto& v : params[i]->value.data) v = static_cast<T>(dist(rng));
    params[i + 1]->value.fill(T{0});
  }
}

// ---- Discriminator --------------------------------------------------------

template <typename T>
Discriminator<T>::Discriminator(const ArchitectureConfig& arch) {
  arch.validate();
  const auto sides = arch.spatial_ladder();
  std::size_t in = arch.channels;
  for (std::size_t i = 0; i < arch.filters.size(); ++i) {
    net_.add(Conv2d<T>("discriminator.c" + std::to_string(i), in, arch.filters[i], 2));
    net_.add(Relu<T>());
    in = arch.filters[i];
  }
  const std::size_t flat = sides.back() * sides.back() * in;
  net_.add(Reshape<T>({flat}));
  net_.add(Dense<T>("discriminator.logit", flat, 1));
}

template <typename T>
Tensor<T> Discriminator<T>::forward(const Tensor<T>& x, Cache<T>* cache) const {
  Tensor<T> y = net_.forward(x, ForwardContext{}, cache);
  return y.reshaped({y.rows()});
}

template <typename T>
Tensor<T> Discriminator<T>::backward(const Cache<T>& cache, const Tensor<T>& d_logits, bool input_grad) {
  return net_.backward(cache, d_logits.reshaped({d_logits.size(), 1}), input_grad);
}

template <typename T>
void Discriminator<T>::init(Rng& rng) {
  ParameterList<T> params;
  net_.collect(params);
  for (std::size_t i = 0; i + 1 < params.size(); i += 2) {
    const double fan_in = static_cast<double>(params[i]->value.dim(0));
    const bool last = i + 2 == params.size();
    // the logit layer has no ReLU after it
    std::normal_distribution<double> dist(0.0, std::sqrt((last ? 1.0 : 2.0) / fan_in));
    for (auto& v : params[i]->value.data) v = static_cast<T>(dist(rng));
    params[i + 1]->value.fill(T{0});
  }
}

// ---- FaeModel -------------------------------------------------------------

template <typename T>
FaeModel<T>::FaeModel(const ArchitectureConfig& a, std::uint64_t seed)
    : arch(a), encoder(a), decoder(a), discriminator(a) {
  Rng enc_rng = make_rng({seed, to_key(Stream::kInit), 1});
  Rng dec_rng = make_rng({seed, to_key(Stream::kInit), 2});
  Rng dis_rng = make_rng({seed, to_key(Stream::kInit), 3});
  encoder.init(enc_rng);
  decoder.init(dec_rng);
  discriminator.init(dis_rng);
}

template <typename T>
void FaeModel<T>::check_input(const Tensor<T>& x) const {
  if (x.rank() != 4 || x.dim(1) != arch.canvas || x.dim(2) != arch.canvas || x.dim(3) != arch.channels) {
    throw ShapeError("expected image batch [M, " + std::to_string(arch.canvas) + ", " + std::to_string(arch.canvas) +
                     ", " + std::to_string(arch.channels) + "], got " + shape_string(x.shape));
  }
}

template <typename T>
GaussianPosterior<T> FaeModel<T>::encode(const Tensor<T>& x) const {
  check_input(x);
  return encoder.forward(x, nullptr);
}

template <typename T>
Tensor<T> FaeModel<T>::decode(const Tensor<T>& z) const {
  if (z.rank() != 2 || z.dim(1) != arch.latent_dim) {
    throw ShapeError("expected latent batch [M, " + std::to_string(arch.latent_dim) + "], got " + shape_string(z.shape));
  }
  Tensor<T> eta = decoder.forward_logits(z, nullptr);
  for (auto& v : eta.data) v = static_cast<T>(sigmoid(static_cast<double>(v)));
  return eta;
}

template <typename T>
Tensor<T> FaeModel<T>::discriminate(const Tensor<T>& x) const {
  check_input(x);
  return discriminator.forward(x, nullptr);
}

template <typename T>
ParameterList<T> FaeModel<T>::parameters() {
  ParameterList<T> p;
  encoder.collect(p);
  decoder.collect(p);
  discriminator.collect(p);
  return p;
}

// ---- losses ---------------------------------------------------------------

double sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

double softplus(double v) { return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); }

double clamp_probability(double p) { return std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp); }

template <typename T>
Tensor<T> reparameterize(const GaussianPosterior<T>& post, const Tensor<T>& eps) {
  if (post.mu.shape != post.log_var.shape || post.mu.shape != eps.shape) {
    throw ShapeError("reparameterize: mu " + shape_string(post.mu.shape) + ", log_var " +
                     shape_string(post.log_var.shape) + ", eps " + shape_string(eps.shape));
  }
  Tensor<T> z(post.mu.shape);
  for (std::size_t i = 0; i < z.size(); ++i) {
    z[i] = post.mu[i] + static_cast<T>(std::exp(0.5 * static_cast<double>(post.log_var[i]))) * eps[i];
  }
  return z;
}

template <typename T>
double kl_divergence(const GaussianPosterior<T>& post) {
  if (post.mu.shape != post.log_var.shape) throw ShapeError("kl_divergence: mu/log_var shape mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < post.mu.size(); ++i) {
    const double mu = post.mu[i], lv = post.log_var[i];
    kl += 0.5 * (std::exp(lv) + mu * mu - lv - 1.0);
  }
  return kl / static_cast<double>(post.mu.rows());
}

template <typename T>
NegElboTerms neg_elbo_terms(const Tensor<T>& x, const GaussianPosterior<T>& post, const Tensor<T>& eta) {
  const std::size_t m = x.rows();
  if (eta.rows() != m || eta.cols() != x.cols() || post.mu.rows() != m) {
    throw ShapeError("elbo_loss: x " + shape_string(x.shape) + ", eta " + shape_string(eta.shape) + ", mu " +
                     shape_string(post.mu.shape));
  }
  double recon = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double p = clamp_probability(eta[i]);
    const double xi = x[i];
    recon -= xi * std::log(p) + (1.0 - xi) * std::log(1.0 - p);
  }
  NegElboTerms t;
  t.reconstruction = recon / static_cast<double>(m);
  t.kl = kl_divergence(post);
  if (!std::isfinite(t.reconstruction)) throw NumericError("elbo_loss: reconstruction term is not finite");
  if (!std::isfinite(t.kl)) throw NumericError("elbo_loss: KL term is not finite");
  return t;
}

double discriminator_loss(std::span<const int> targets, std::span<const double> probs) {
  if (targets.size() != probs.size() || targets.empty()) {
    throw ShapeError("discriminator_loss: " + std::to_string(targets.size()) + " targets vs " +
                     std::to_string(probs.size()) + " predictions");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = clamp_probability(probs[i]);
    sum += targets[i] ? std::log(p) : std::log(1.0 - p);
  }
  return -sum / static_cast<double>(probs.size());
}

double discriminator_loss_from_logits(std::span<const double> fake_logits, std::span<const double> real_logits) {
  if (fake_logits.size() != real_logits.size() || fake_logits.empty()) {
    throw ShapeError("discriminator_loss: fake/real halves differ in length");
  }
  double sum = 0.0;
  // -log(1 - sigmoid(l)) = softplus(l), -log sigmoid(l) = softplus(-l)
  for (double l : fake_logits) sum += softplus(l);
  for (double l : real_logits) sum += softplus(-l);
  return sum / static_cast<double>(2 * fake_logits.size());
}

double generator_loss(std::span<const double> fake_probs) {
  if (fake_probs.empty()) throw ShapeError("generator_loss: empty batch");
  double sum = 0.0;
  for (double p : fake_probs) sum -= std::log(clamp_probability(p));
  return sum / static_cast<double>(fake_probs.size());
}

double generator_loss_from_logits(std::span<const double> fake_logits) {
  if (fake_logits.empty()) throw ShapeError("generator_loss: empty batch");
  double sum = 0.0;
  for (double l : fake_logits) sum += softplus(-l);
  return sum / static_cast<double>(fake_logits.size());
}

double fae_objective(double neg_elbo, double generator, double lambda) {
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be nonnegative");
  return neg_elbo + lambda * generator;
}

#define DCFAE_INSTANTIATE(T)                                                                              \
  template class Encoder<T>;                                                                              \
  template class Decoder<T>;                                                                              \
  template class Discriminator<T>;                                                                        \
  template struct FaeModel<T>;                                                                            \
  template Tensor<T> reparameterize<T>(const GaussianPosterior<T>&, const Tensor<T>&);                    \
  template double kl_divergence<T>(const GaussianPosterior<T>&);                                          \
  template NegElboTerms neg_elbo_terms<T>(const Tensor<T>&, const GaussianPosterior<T>&, const Tensor<T>&);

DCFAE_INSTANTIATE(float)
DCFAE_INSTANTIATE(double)

}  // namespace dcfae
