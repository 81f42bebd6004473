#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "dcfae/layers.hpp"

namespace dcfae {

struct HeadConfig {
  std::vector<std::size_t> hidden{500, 500, 2000};
  std::size_t embed_dim = 10;
  double dropout_rate = 0.3;
  double l2_coefficient = 1e-4;

  void validate() const;
  nlohmann::json to_json() const;
  static HeadConfig from_json(const nlohmann::json& j);
  bool operator==(const HeadConfig&) const = default;
};

/// Dense embedding network: ReLU + dropout after every hidden layer, linear
/// output layer.
template <typename T>
class DenseHead {
 public:
  DenseHead() = default;
  DenseHead(std::size_t input_dim, const HeadConfig& cfg, std::uint64_t seed);

  /// Embeds latent means [M, L] into [M, d]. Dropout is active only when
  /// `training` is set; the mask is a function of `dropout_seed`.
  Tensor<T> embed(const Tensor<T>& mu, bool training, std::uint64_t dropout_seed, Cache<T>* cache = nullptr) const;
  Tensor<T> backward(const Cache<T>& cache, const Tensor<T>& d_embedding);

  /// l2_coefficient * sum of squared dense weights (biases excluded).
  double l2_penalty() const;
  /// Adds scale * d(l2_penalty)/dW to the weight gradients.
  void add_l2_gradient(double scale);

  void collect(ParameterList<T>& out) { net_.collect(out); }
  ParameterList<T> parameters() { ParameterList<T> p; net_.collect(p); return p; }
  std::size_t input_dim() const { return input_dim_; }
  const HeadConfig& config() const { return cfg_; }

 private:
  std::size_t input_dim_ = 0;
  HeadConfig cfg_;
  Sequential<T> net_;
};

/// Row-major [M, M] joint distribution over ordered pairs i != j.
struct SimilarityMatrix {
  std::size_t size = 0;
  std::vector<double> values;

  double operator()(std::size_t i, std::size_t j) const { return values[i * size + j]; }
};

/// Student-t kernel similarities, kept with the unnormalized kernel so the
/// distribution can be differentiated.
struct KernelSimilarity {
  SimilarityMatrix matrix;
  std::vector<double> sq_dist;  // [M, M] squared euclidean distances
  std::vector<double> kernel;   // [M, M], zero diagonal, scaled by exp(-log_shift)
  double total = 0.0;           // sum of off-diagonal (scaled) kernels
  double log_shift = 0.0;       // log of the largest kernel
  double dof = 1.0;
};

/// (1 + d^2 / dof)^(-(dof + 1) / 2), normalized over i != j.
KernelSimilarity student_t_similarity(const Tensor<double>& points, double dof);

/// Pairwise similarities of latent means with `rho` degrees of freedom.
template <typename T>
SimilarityMatrix pairwise_p(const Tensor<T>& mu, double rho);
/// Pairwise similarities of embeddings with one degree of freedom.
template <typename T>
SimilarityMatrix pairwise_q(const Tensor<T>& c);

/// -sum_{i != j} P_ij log Q_ij with Q clamped at 1e-7.
double clustering_loss(const SimilarityMatrix& p, const SimilarityMatrix& q);

/// Backpropagates dL/dvalues of a normalized kernel similarity to the points.
Tensor<double> similarity_backward(const KernelSimilarity& s, const Tensor<double>& points,
                                   const std::vector<double>& d_values);

/// L_gamma evaluated from the points themselves, with log Q taken in closed
/// form (log q_ij - log Z). Gradients are written when the outputs are given.
struct ClusteringLossResult {
  double loss = 0.0;
  Tensor<double> d_mu;         // via P (empty when not requested)
  Tensor<double> d_embedding;  // via Q
};
ClusteringLossResult clustering_loss_with_grad(const Tensor<double>& mu, const Tensor<double>& embedding, double rho,
                                               bool grad_through_p);

double entropy(const SimilarityMatrix& p);

// ---- k-means --------------------------------------------------------------

struct ClusterResult {
  std::vector<int> assignments;
  Tensor<double> centroids;  // [k, d]
  double inertia = 0.0;
  std::size_t iterations = 0;
  std::size_t restart = 0;
};

struct KMeansOptions {
  std::size_t restarts = 10;
  std::size_t max_iterations = 300;
  double tolerance = 1e-4;
  std::uint64_t seed = 0;
  bool parallel = false;
};

/// Lloyd iterations from k-means++ seeding; lowest inertia over restarts wins,
/// ties go to the lower restart index.
ClusterResult kmeans(const Tensor<double>& points, std::size_t k, const KMeansOptions& options);

/// Sum of squared distances from each point to its assigned centroid.
double inertia(const Tensor<double>& points, const Tensor<double>& centroids, const std::vector<int>& assignments);

}  // namespace dcfae
