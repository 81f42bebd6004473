#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "dcfae/objective.hpp"

namespace dcfae::testing {

inline ArchitectureConfig tiny_arch(bool residual = true) {
  ArchitectureConfig a;
  a.canvas = 8;
  a.channels = 1;
  a.latent_dim = 3;
  a.filters = {3, 4, 4, 5};
  a.residual = residual;
  return a;
}

inline HeadConfig tiny_head() {
  HeadConfig h;
  h.hidden = {6, 5};
  h.embed_dim = 2;
  h.dropout_rate = 0.3;
  h.l2_coefficient = 1e-2;
  return h;
}

// Zero biases leave pre-activations exactly on the ReLU kink wherever a
// whole receptive field is dead, which finite differences cannot handle.
template <typename T>
void jitter_biases(ParameterList<T> params, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.1);
  for (auto* p : params) {
    if (p->value.rank() != 1) continue;
    for (auto& v : p->value.data) v = static_cast<T>(n(rng));
  }
}

template <typename T>
DcfaeNetwork<T> tiny_network(std::uint64_t seed, bool with_head = true, bool residual = true) {
  DcfaeNetwork<T> net{FaeModel<T>(tiny_arch(residual), seed), std::nullopt};
  if (with_head) net.head.emplace(net.fae.arch.latent_dim, tiny_head(), seed);
  jitter_biases(net.all_parameters(), seed ^ 0x5eedull);
  // Spread the posterior so the pairwise losses are not flat at the check point.
  std::mt19937_64 rng(seed ^ 0xfacefeedull);
  std::normal_distribution<double> n(0.0, 0.7);
  for (auto* p : net.fae.encoder_parameters()) {
    if (p->name == "encoder.mu.w" || p->name == "encoder.log_var.w") {
      for (auto& v : p->value.data) v = static_cast<T>(n(rng));
    }
  }
  return net;
}

template <typename T>
Tensor<T> uniform_tensor(Shape shape, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  Tensor<T> t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.data) v = static_cast<T>(u(rng));
  return t;
}

template <typename T>
Tensor<T> normal_tensor(Shape shape, std::uint64_t seed, double stddev = 1.0) {
  Tensor<T> t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, stddev);
  for (auto& v : t.data) v = static_cast<T>(n(rng));
  return t;
}

/// FNV-1a over the raw bytes of every parameter value.
template <typename T>
std::uint64_t parameter_hash(const ParameterList<T>& params) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto* p : params) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p->value.ptr());
    for (std::size_t i = 0; i < p->value.size() * sizeof(T); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  }
  return h;
}

struct GradCheckResult {
  double worst_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t checked = 0;
};

/// Compares analytic gradients already sitting in `params` against central
/// differences of `loss`. The error of each tensor is ||a - n|| / max(||a||, ||n||);
/// tensors where both norms vanish count as exact.
inline GradCheckResult check_gradients(const ParameterList<double>& params, const std::function<double()>& loss,
                                       double h = 1e-4) {
  GradCheckResult out;
  for (auto* p : params) {
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + h;
      const double up = loss();
      p->value[i] = saved - h;
      const double down = loss();
      p->value[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = p->grad[i];
      diff2 += (analytic - numeric) * (analytic - numeric);
      a2 += analytic * analytic;
      n2 += numeric * numeric;
      ++out.checked;
    }
    const double scale = std::sqrt(std::max(a2, n2));
    const double err = scale < 1e-12 ? 0.0 : std::sqrt(diff2) / scale;
    if (err > out.worst_relative_error) {
      out.worst_relative_error = err;
      out.worst_parameter = p->name;
    }
  }
  return out;
}

}  // namespace dcfae::testing
