#include "dcfae/cluster_head.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>

namespace dcfae {

void HeadConfig::validate() const {
  if (hidden.empty()) throw ConfigError("head needs at least one hidden layer");
  for (std::size_t w : hidden) {
    if (w == 0) throw ConfigError("head widths must be positive");
  }
  if (embed_dim == 0) throw ConfigError("embedding dimension must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout rate must be in [0,1)");
  if (!(l2_coefficient >= 0.0)) throw ConfigError("l2 coefficient must be nonnegative");
}

nlohmann::json HeadConfig::to_json() const {
  return {{"hidden", hidden}, {"embed_dim", embed_dim}, {"dropout_rate", dropout_rate}, {"l2_coefficient", l2_coefficient}};
}

HeadConfig HeadConfig::from_json(const nlohmann::json& j) {
  HeadConfig h;
  h.hidden = j.value("hidden", h.hidden);
  h.embed_dim = j.value("embed_dim", h.embed_dim);
  h.dropout_rate = j.value("dropout_rate", h.dropout_rate);
  h.l2_coefficient = j.value("l2_coefficient", h.l2_coefficient);
  return h;
}

template <typename T>
DenseHead<T>::DenseHead(std::size_t input_dim, const HeadConfig& cfg, std::uint64_t seed)
    : input_dim_(input_dim), cfg_(cfg) {
  cfg.validate();
  Rng rng = make_rng({seed, to_key(Stream::kInit), 4});
  std::size_t in = input_dim;
  for (std::size_t i = 0; i < cfg.hidden.size(); ++i) {
    auto& dense = net_.add(Dense<T>("head.d" + std::to_string(i), in, cfg.hidden[i]));
    dense.init_he(rng);
    net_.add(Relu<T>());
    net_.add(Dropout<T>(cfg.dropout_rate, i));
    in = cfg.hidden[i];
  }
  auto& out = net_.add(Dense<T>("head.d" + std::to_string(cfg.hidden.size()), in, cfg.embed_dim));
  out.init_normal(rng, std::sqrt(1.0 / static_cast<double>(in)));
}

template <typename T>
Tensor<T> DenseHead<T>::embed(const Tensor<T>& mu, bool training, std::uint64_t dropout_seed, Cache<T>* cache) const {
  if (mu.rank() != 2 || mu.dim(1) != input_dim_) {
    throw ShapeError("embed: expected [M, " + std::to_string(input_dim_) + "], got " + shape_string(mu.shape));
  }
  ForwardContext ctx;
  ctx.training = training;
  ctx.dropout_seed = dropout_seed;
  return net_.forward(mu, ctx, cache);
}

template <typename T>
Tensor<T> DenseHead<T>::backward(const Cache<T>& cache, const Tensor<T>& d_embedding) {
  return net_.backward(cache, d_embedding, true);
}

template <typename T>
double DenseHead<T>::l2_penalty() const {
  ParameterList<T> params;
  const_cast<Sequential<T>&>(net_).collect(params);
  double sum = 0.0;
  for (const auto* p : params) {
    if (p->value.rank() != 2) continue;
    for (T w : p->value.data) sum += static_cast<double>(w) * static_cast<double>(w);
  }
  return cfg_.l2_coefficient * sum;
}

template <typename T>
void DenseHead<T>::add_l2_gradient(double scale) {
  ParameterList<T> params;
  net_.collect(params);
  const double k = 2.0 * cfg_.l2_coefficient * scale;
  for (auto* p : params) {
    if (p->value.rank() != 2 || !p->requires_grad) continue;
    for (std::size_t i = 0; i < p->value.size(); ++i) p->grad[i] += static_cast<T>(k * static_cast<double>(p->value[i]));
  }
}

// ---- similarities ---------------------------------------------------------

KernelSimilarity student_t_similarity(const Tensor<double>& points, double dof) {
  const std::size_t m = points.rows();
  if (m < 2) throw ConfigError("pairwise similarities need at least 2 points, got " + std::to_string(m));
  if (!(dof > 0.0)) throw ConfigError("degrees of freedom must be positive");
  const std::size_t d = points.cols();
  const double exponent = (dof + 1.0) / 2.0;
  KernelSimilarity s;
  s.dof = dof;
  s.sq_dist.assign(m * m, 0.0);
  s.kernel.assign(m * m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = points[i * d + k] - points[j * d + k];
        acc += diff * diff;
      }
      s.sq_dist[i * m + j] = s.sq_dist[j * m + i] = acc;
      s.kernel[i * m + j] = s.kernel[j * m + i] = -exponent * std::log1p(acc / dof);
    }
  }
  // Far-apart batches underflow every kernel with large dof; normalize in the
  // log domain relative to the largest one.
  s.log_shift = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (i != j) s.log_shift = std::max(s.log_shift, s.kernel[i * m + j]);
    }
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double& k = s.kernel[i * m + j];
      k = i == j ? 0.0 : std::exp(k - s.log_shift);
      s.total += k;
    }
  }
  s.matrix.size = m;
  s.matrix.values.resize(m * m);
  for (std::size_t i = 0; i < m * m; ++i) s.matrix.values[i] = s.kernel[i] / s.total;
  return s;
}

template <typename T>
SimilarityMatrix pairwise_p(const Tensor<T>& mu, double rho) {
  return student_t_similarity(mu.template cast<double>(), rho).matrix;
}

template <typename T>
SimilarityMatrix pairwise_q(const Tensor<T>& c) {
  return student_t_similarity(c.template cast<double>(), 1.0).matrix;
}

double clustering_loss(const SimilarityMatrix& p, const SimilarityMatrix& q) {
  if (p.size != q.size) throw ShapeError("clustering_loss: P and Q sizes differ");
  double loss = 0.0;
  for (std::size_t i = 0; i < p.size; ++i) {
    for (std::size_t j = 0; j < p.size; ++j) {
      if (i == j) continue;
      const double pij = p(i, j);
      if (pij == 0.0) continue;
      loss -= pij * std::log(std::max(q(i, j), 1e-7));
    }
  }
  return loss;
}

double entropy(const SimilarityMatrix& p) {
  double h = 0.0;
  for (double v : p.values) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

Tensor<double> similarity_backward(const KernelSimilarity& s, const Tensor<double>& points,
                                   const std::vector<double>& d_values) {
  const std::size_t m = s.matrix.size;
  const std::size_t d = points.cols();
  double dot = 0.0;
  for (std::size_t i = 0; i < m * m; ++i) dot += s.matrix.values[i] * d_values[i];
  const double exponent = (s.dof + 1.0) / 2.0;
  // dL/d(sq_dist_ij) for every ordered pair
  std::vector<double> d_dist(m * m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (i == j) continue;
      const std::size_t ij = i * m + j;
      const double d_kernel = (d_values[ij] - dot) / s.total;
      const double dk_ddist = -(exponent / s.dof) * s.kernel[ij] / (1.0 + s.sq_dist[ij] / s.dof);
      d_dist[ij] = d_kernel * dk_ddist;
    }
  }
  Tensor<double> grad(points.shape);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (i == j) continue;
      const double w = 2.0 * (d_dist[i * m + j] + d_dist[j * m + i]);
      for (std::size_t k = 0; k < d; ++k) grad[i * d + k] += w * (points[i * d + k] - points[j * d + k]);
    }
  }
  return grad;
}

ClusteringLossResult clustering_loss_with_grad(const Tensor<double>& mu, const Tensor<double>& embedding, double rho,
                                               bool grad_through_p) {
  if (mu.rows() != embedding.rows()) throw ShapeError("clustering loss: mu and embedding batch sizes differ");
  const KernelSimilarity p = student_t_similarity(mu, rho);
  const KernelSimilarity q = student_t_similarity(embedding, 1.0);
  const std::size_t m = mu.rows();
  const double log_z = std::log(q.total) + q.log_shift;
  std::vector<double> neg_log_q(m * m, 0.0);
  std::vector<double> d_q(m * m, 0.0);
  ClusteringLossResult r;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (i == j) continue;
      const std::size_t ij = i * m + j;
      neg_log_q[ij] = std::log1p(q.sq_dist[ij]) + log_z;
      r.loss += p.matrix.values[ij] * neg_log_q[ij];
      d_q[ij] = -p.matrix.values[ij] / q.matrix.values[ij];
    }
  }
  r.d_embedding = similarity_backward(q, embedding, d_q);
  if (grad_through_p) r.d_mu = similarity_backward(p, mu, neg_log_q);
  return r;
}

// ---- k-means --------------------------------------------------------------

namespace {

double sq_distance(const double* a, const double* b, std::size_t d) {
  double acc = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    const double diff = a[k] - b[k];
    acc += diff * diff;
  }
  return acc;
}

// Nearest centroid; ties go to the lowest index.
std::pair<int, double> nearest(const double* x, const Tensor<double>& centroids, std::size_t d) {
  int best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    const double dist = sq_distance(x, centroids.ptr() + c * d, d);
    if (dist < best_dist) {
      best_dist = dist;
      best = static_cast<int>(c);
    }
  }
  return {best, best_dist};
}

double assign_all(const Tensor<double>& points, const Tensor<double>& centroids, std::vector<int>& out) {
  const std::size_t n = points.rows(), d = points.cols();
  double total = 0.0;
  out.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto [c, dist] = nearest(points.ptr() + i * d, centroids, d);
    out[i] = c;
    total += dist;
  }
  return total;
}

Tensor<double> seed_plus_plus(const Tensor<double>& points, std::size_t k, Rng& rng) {
  const std::size_t n = points.rows(), d = points.cols();
  Tensor<double> centroids({k, d});
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::size_t first = pick(rng);
  std::copy_n(points.ptr() + first * d, d, centroids.ptr());
  std::vector<double> closest(n);
  for (std::size_t i = 0; i < n; ++i) closest[i] = sq_distance(points.ptr() + i * d, centroids.ptr(), d);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : closest) total += v;
    std::size_t chosen = 0;
    if (total > 0.0) {
      double target = u(rng) * total;
      chosen = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        target -= closest[i];
        if (target < 0.0) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = pick(rng);  // all remaining points coincide with a center
    }
    std::copy_n(points.ptr() + chosen * d, d, centroids.ptr() + c * d);
    for (std::size_t i = 0; i < n; ++i) {
      closest[i] = std::min(closest[i], sq_distance(points.ptr() + i * d, centroids.ptr() + c * d, d));
    }
  }
  return centroids;
}

// Recomputes centroids as cluster means. An empty cluster is reseeded at the
// point farthest from its current centroid, which then moves to that cluster.
void update_centroids(const Tensor<double>& points, std::vector<int>& assign, Tensor<double>& centroids) {
  const std::size_t n = points.rows(), d = points.cols(), k = centroids.rows();
  std::vector<std::size_t> counts(k, 0);
  for (int a : assign) ++counts[static_cast<std::size_t>(a)];
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] != 0) continue;
    std::size_t far = 0;
    double far_dist = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t owner = static_cast<std::size_t>(assign[i]);
      if (counts[owner] <= 1) continue;
      const double dist = sq_distance(points.ptr() + i * d, centroids.ptr() + owner * d, d);
      if (dist > far_dist) {
        far_dist = dist;
        far = i;
      }
    }
    --counts[static_cast<std::size_t>(assign[far])];
    assign[far] = static_cast<int>(c);
    counts[c] = 1;
  }
  centroids.fill(0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double* dst = centroids.ptr() + static_cast<std::size_t>(assign[i]) * d;
    for (std::size_t j = 0; j < d; ++j) dst[j] += points[i * d + j];
  }
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t j = 0; j < d; ++j) centroids[c * d + j] /= static_cast<double>(counts[c]);
  }
}

ClusterResult run_restart(const Tensor<double>& points, std::size_t k, const KMeansOptions& opt, std::size_t restart) {
  Rng rng = make_rng({opt.seed, to_key(Stream::kKMeans), restart});
  ClusterResult r;
  r.restart = restart;
  r.centroids = seed_plus_plus(points, k, rng);
  double prev = assign_all(points, r.centroids, r.assignments);
  std::vector<int> next;
  for (r.iterations = 1; r.iterations <= opt.max_iterations; ++r.iterations) {
    update_centroids(points, r.assignments, r.centroids);
    const double cur = assign_all(points, r.centroids, next);
    const bool changed = next != r.assignments;
    r.assignments.swap(next);
    if (!changed) break;
    if (prev - cur < opt.tolerance * prev) break;
    prev = cur;
  }
  r.iterations = std::min(r.iterations, opt.max_iterations);
  update_centroids(points, r.assignments, r.centroids);
  r.inertia = inertia(points, r.centroids, r.assignments);
  return r;
}

}  // namespace

double inertia(const Tensor<double>& points, const Tensor<double>& centroids, const std::vector<int>& assignments) {
  const std::size_t d = points.cols();
  double total = 0.0;
  for (std::size_t i = 0; i < points.rows(); ++i) {
    total += sq_distance(points.ptr() + i * d, centroids.ptr() + static_cast<std::size_t>(assignments[i]) * d, d);
  }
  return total;
}

ClusterResult kmeans(const Tensor<double>& points, std::size_t k, const KMeansOptions& options) {
  if (points.rank() != 2) throw ShapeError("kmeans expects [n, d] points");
  if (k == 0) throw ConfigError("k must be positive");
  if (points.rows() < k) {
    throw ConfigError("kmeans: " + std::to_string(points.rows()) + " points for " + std::to_string(k) + " clusters");
  }
  const std::size_t restarts = std::max<std::size_t>(1, options.restarts);
  std::vector<ClusterResult> results(restarts);
  if (options.parallel) {
    std::vector<std::future<ClusterResult>> jobs;
    for (std::size_t r = 0; r < restarts; ++r) {
      jobs.push_back(std::async(std::launch::async, run_restart, std::cref(points), k, std::cref(options), r));
    }
    for (std::size_t r = 0; r < restarts; ++r) results[r] = jobs[r].get();
  } else {
    for (std::size_t r = 0; r < restarts; ++r) results[r] = run_restart(points, k, options, r);
  }
  std::size_t best = 0;
  for (std::size_t r = 1; r < restarts; ++r) {
    if (results[r].inertia < results[best].inertia) best = r;
  }
  return std::move(results[best]);
}

template class DenseHead<float>;
template class DenseHead<double>;
template SimilarityMatrix pairwise_p<float>(const Tensor<float>&, double);
template SimilarityMatrix pairwise_p<double>(const Tensor<double>&, double);
template SimilarityMatrix pairwise_q<float>(const Tensor<float>&);
template SimilarityMatrix pairwise_q<double>(const Tensor<double>&);

}  // namespace dcfae
