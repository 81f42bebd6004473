#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace dcfae {

/// Ground truth and predicted cluster ids of the same samples.
struct LabelPair {
  std::span<const int> y_true;
  std::span<const int> y_pred;

  void validate(std::size_t min_size = 1) const;
};

/// Contingency table n_ij over (true class i, predicted cluster j); ids are
/// used as row/column indices directly.
std::vector<std::vector<long>> contingency_table(const LabelPair& lp);

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method,
/// O(n^3)). Returns the column assigned to each row.
std::vector<int> solve_assignment(const std::vector<std::vector<double>>& cost);

/// Best one-to-one mapping of clusters to classes, fraction matched.
double clustering_accuracy(const LabelPair& lp);
enum class NmiNormalization { kGeometric, kArithmetic };

/// Mutual information over the geometric (default) or arithmetic mean of the
/// two entropies.
double nmi(const LabelPair& lp, NmiNormalization norm = NmiNormalization::kGeometric);
double ari(const LabelPair& lp);

/// Mean probability the discriminator puts on the correct label of the
/// [real, fake] batch, from logits.
double discriminator_score(std::span<const double> real_logits, std::span<const double> fake_logits);
/// Mean probability of fakes being taken as real, from logits.
double generator_score(std::span<const double> fake_logits);

struct MetricReport {
  double acc = 0.0;
  double nmi = 0.0;
  double ari = 0.0;
  std::size_t n = 0;
  std::size_t k_true = 0;
  std::size_t k_pred = 0;

  /// {acc, nmi, ari, n, k_true, k_pred, nmi_normalization}; reals carry six
  /// decimals.
  nlohmann::json to_json() const;
};

MetricReport evaluate_clustering(const LabelPair& lp);

/// Rounds to six decimals for diff-friendly reports.
double round6(double v);

/// Serializes JSON with every floating-point number printed as %.6f.
std::string format_fixed6(const nlohmann::json& j, int indent = 2);

}  // namespace dcfae
