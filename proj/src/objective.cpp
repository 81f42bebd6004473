#include "dcfae/objective.hpp"

#include <cmath>

#include "dcfae/metrics.hpp"

namespace dcfae {

template <typename T>
ParameterList<T> DcfaeNetwork<T>::generator_side_parameters() {
  ParameterList<T> p;
  fae.encoder.collect(p);
  fae.decoder.collect(p);
  if (head) head->collect(p);
  return p;
}

template <typename T>
ParameterList<T> DcfaeNetwork<T>::head_parameters() {
  ParameterList<T> p;
  if (head) head->collect(p);
  return p;
}

template <typename T>
ParameterList<T> DcfaeNetwork<T>::all_parameters() {
  ParameterList<T> p = fae.parameters();
  if (head) head->collect(p);
  return p;
}

double objective_value(const LossBreakdown& l, const ObjectiveWeights& w) {
  return w.reconstruction * l.reconstruction + w.kl * l.kl + w.generator * l.generator +
         w.discriminator * l.discriminator + w.clustering * l.clustering + w.l2 * l.l2;
}

namespace {

template <typename T>
std::vector<double> to_doubles(const Tensor<T>& t, std::size_t begin, std::size_t end) {
  return std::vector<double>(t.data.begin() + static_cast<std::ptrdiff_t>(begin),
                             t.data.begin() + static_cast<std::ptrdiff_t>(end));
}

void require_finite(double v, const char* term) {
  if (!std::isfinite(v)) throw NumericError(std::string("non-finite ") + term + " loss");
}

}  // namespace

template <typename T>
BatchPass<T> forward_batch(const DcfaeNetwork<T>& net, const Tensor<T>& x, const Tensor<T>& eps,
                           const BatchOptions& options) {
  net.fae.check_input(x);
  BatchPass<T> pass;
  pass.options = options;
  pass.x = x;
  pass.eps = eps;
  const std::size_t m = x.dim(0);

  pass.post = net.fae.encoder.forward(x, &pass.encoder_cache);
  pass.z = reparameterize(pass.post, eps);
  pass.logits = net.fae.decoder.forward_logits(pass.z, &pass.decoder_cache);
  pass.eta = pass.logits;
  for (auto& v : pass.eta.data) v = static_cast<T>(sigmoid(static_cast<double>(v)));

  LossBreakdown& l = pass.losses;
  double recon = 0.0;
  for (std::size_t i = 0; i < pass.logits.size(); ++i) {
    const double a = pass.logits[i];
    recon += softplus(a) - static_cast<double>(x[i]) * a;
  }
  l.reconstruction = recon / static_cast<double>(m);
  l.kl = kl_divergence(pass.post);
  require_finite(l.reconstruction, "reconstruction");
  require_finite(l.kl, "KL");

  if (options.use_discriminator) {
    const Tensor<T> fakes = pass.eta.reshaped(x.shape);
    pass.disc_logits = net.fae.discriminator.forward(concat_rows(fakes, x), &pass.discriminator_cache);
    const auto fake = to_doubles(pass.disc_logits, 0, m);
    const auto real = to_doubles(pass.disc_logits, m, 2 * m);
    l.generator = generator_loss_from_logits(fake);
    l.discriminator = discriminator_loss_from_logits(fake, real);
    l.discriminator_score = discriminator_score(real, fake);
    l.generator_score = generator_score(fake);
    require_finite(l.generator, "generator");
    require_finite(l.discriminator, "discriminator");
  }

  if (options.use_head) {
    if (!net.head) throw ConfigError("forward_batch: head requested but the network has none");
    pass.embedding = net.head->embed(pass.post.mu, options.training, options.dropout_seed, &pass.head_cache);
    const auto r = clustering_loss_with_grad(pass.post.mu.template cast<double>(), pass.embedding.template cast<double>(),
                                             options.rho, false);
    l.clustering = r.loss;
    l.l2 = net.head->l2_penalty();
    require_finite(l.clustering, "clustering");
  }
  return pass;
}

template <typename T>
void backward_batch(DcfaeNetwork<T>& net, const BatchPass<T>& pass, const ObjectiveWeights& w) {
  const std::size_t m = pass.x.dim(0);
  const double inv_m = 1.0 / static_cast<double>(m);
  const bool use_d = pass.options.use_discriminator;
  const bool use_head = pass.options.use_head;

  const bool gen_active = use_d && w.generator != 0.0;
  const bool disc_active = use_d && w.discriminator != 0.0;
  const bool fakes_get_grad = gen_active || (disc_active && w.discriminator_through_fakes);
  const bool decoder_active = w.reconstruction != 0.0 || fakes_get_grad;
  const bool head_active = use_head && (w.clustering != 0.0 || w.l2 != 0.0);
  const bool encoder_active = decoder_active || w.kl != 0.0 || (use_head && w.clustering != 0.0);

  // ---- discriminator ----
  Tensor<T> d_fakes;  // [M, h, w, c]
  if (gen_active || disc_active) {
    Tensor<T> gen_part({2 * m}), disc_part({2 * m});
    for (std::size_t i = 0; i < m; ++i) {
      const double lf = pass.disc_logits[i];
      const double lr = pass.disc_logits[m + i];
      gen_part[i] = static_cast<T>(w.generator * (sigmoid(lf) - 1.0) * inv_m);
      disc_part[i] = static_cast<T>(w.discriminator * sigmoid(lf) * 0.5 * inv_m);
      disc_part[m + i] = static_cast<T>(w.discriminator * (sigmoid(lr) - 1.0) * 0.5 * inv_m);
    }
    auto take_fakes = [&](const Tensor<T>& dx) {
      Tensor<T> part = slice_rows(dx, 0, m);
      if (d_fakes.empty()) {
        d_fakes = std::move(part);
      } else {
        for (std::size_t i = 0; i < part.size(); ++i) d_fakes[i] += part[i];
      }
    };
    if (w.discriminator_through_fakes) {
      Tensor<T> total = gen_part;
      for (std::size_t i = 0; i < total.size(); ++i) total[i] += disc_part[i];
      Tensor<T> dx = net.fae.discriminator.backward(pass.discriminator_cache, total, fakes_get_grad);
      if (fakes_get_grad) take_fakes(dx);
    } else {
      if (gen_active) take_fakes(net.fae.discriminator.backward(pass.discriminator_cache, gen_part, true));
      if (disc_active) net.fae.discriminator.backward(pass.discriminator_cache, disc_part, false);
    }
  }

  Tensor<T> d_mu(pass.post.mu.shape), d_log_var(pass.post.log_var.shape);

  // ---- decoder ----
  if (decoder_active) {
    Tensor<T> d_logits(pass.logits.shape);
    for (std::size_t i = 0; i < d_logits.size(); ++i) {
      const double eta = pass.eta[i];
      double g = w.reconstruction * (eta - static_cast<double>(pass.x[i])) * inv_m;
      if (!d_fakes.empty()) g += static_cast<double>(d_fakes[i]) * eta * (1.0 - eta);
      d_logits[i] = static_cast<T>(g);
    }
    const Tensor<T> d_z = net.fae.decoder.backward(pass.decoder_cache, d_logits);
    for (std::size_t i = 0; i < d_z.size(); ++i) {
      const double std_dev = std::exp(0.5 * static_cast<double>(pass.post.log_var[i]));
      d_mu[i] += d_z[i];
      d_log_var[i] += static_cast<T>(static_cast<double>(d_z[i]) * static_cast<double>(pass.eps[i]) * 0.5 * std_dev);
    }
  }

  // ---- KL ----
  if (w.kl != 0.0) {
    for (std::size_t i = 0; i < d_mu.size(); ++i) {
      const double mu = pass.post.mu[i], lv = pass.post.log_var[i];
      d_mu[i] += static_cast<T>(w.kl * mu * inv_m);
      d_log_var[i] += static_cast<T>(w.kl * 0.5 * (std::exp(lv) - 1.0) * inv_m);
    }
  }

  // ---- clustering head ----
  if (head_active) {
    if (w.clustering != 0.0) {
      const auto r = clustering_loss_with_grad(pass.post.mu.template cast<double>(),
                                               pass.embedding.template cast<double>(), pass.options.rho,
                                               w.grad_through_p);
      Tensor<T> d_c(pass.embedding.shape);
      for (std::size_t i = 0; i < d_c.size(); ++i) d_c[i] = static_cast<T>(w.clustering * r.d_embedding[i]);
      const Tensor<T> d_mu_q = net.head->backward(pass.head_cache, d_c);
      for (std::size_t i = 0; i < d_mu.size(); ++i) d_mu[i] += d_mu_q[i];
      if (w.grad_through_p) {
        for (std::size_t i = 0; i < d_mu.size(); ++i) d_mu[i] += static_cast<T>(w.clustering * r.d_mu[i]);
      }
    }
    if (w.l2 != 0.0) net.head->add_l2_gradient(w.l2);
  }

  if (encoder_active) net.fae.encoder.backward(pass.encoder_cache, d_mu, d_log_var, false);
}

template struct DcfaeNetwork<float>;
template struct DcfaeNetwork<double>;
template BatchPass<float> forward_batch<float>(const DcfaeNetwork<float>&, const Tensor<float>&, const Tensor<float>&,
                                               const BatchOptions&);
template BatchPass<double> forward_batch<double>(const DcfaeNetwork<double>&, const Tensor<double>&,
                                                 const Tensor<double>&, const BatchOptions&);
template void backward_batch<float>(DcfaeNetwork<float>&, const BatchPass<float>&, const ObjectiveWeights&);
template void backward_batch<double>(DcfaeNetwork<double>&, const BatchPass<double>&, const ObjectiveWeights&);

}  // namespace dcfae
