#include "dcfae/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>

#include "dcfae/errors.hpp"
#include "dcfae/fae.hpp"

namespace dcfae {

void LabelPair::validate(std::size_t min_size) const {
  if (y_true.size() != y_pred.size()) {
    throw ShapeError("label vectors differ in length: " + std::to_string(y_true.size()) + " vs " +
                     std::to_string(y_pred.size()));
  }
  if (y_true.size() < min_size) throw ShapeError("need at least " + std::to_string(min_size) + " labels");
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (y_true[i] < 0 || y_pred[i] < 0) throw ShapeError("labels must be nonnegative");
  }
}

std::vector<std::vector<long>> contingency_table(const LabelPair& lp) {
  lp.validate();
  const int rows = *std::max_element(lp.y_true.begin(), lp.y_true.end()) + 1;
  const int cols = *std::max_element(lp.y_pred.begin(), lp.y_pred.end()) + 1;
  std::vector<std::vector<long>> table(static_cast<std::size_t>(rows), std::vector<long>(static_cast<std::size_t>(cols), 0));
  for (std::size_t i = 0; i < lp.y_true.size(); ++i) ++table[static_cast<std::size_t>(lp.y_true[i])][static_cast<std::size_t>(lp.y_pred[i])];
  return table;
}

std::vector<int> solve_assignment(const std::vector<std::vector<double>>& cost) {
  // Shortest augmenting path with potentials; 1-based internally.
  const std::size_t n = cost.size();
  for (const auto& row : cost) {
    if (row.size() != n) throw ShapeError("solve_assignment needs a square matrix");
  }
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (std::size_t j = 1; j <= n; ++j) {
    if (match[j] != 0) row_to_col[match[j] - 1] = static_cast<int>(j - 1);
  }
  return row_to_col;
}

double clustering_accuracy(const LabelPair& lp) {
  const auto table = contingency_table(lp);
  const std::size_t rows = table.size(), cols = table[0].size();
  const std::size_t n = std::max(rows, cols);
  long peak = 0;
  for (const auto& r : table) peak = std::max(peak, *std::max_element(r.begin(), r.end()));
  // maximize matches = minimize (peak - count) on the zero-padded square table
  std::vector<std::vector<double>> cost(n, std::vector<double>(n, static_cast<double>(peak)));
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) cost[i][j] = static_cast<double>(peak - table[i][j]);
  }
  const auto assignment = solve_assignment(cost);
  long matched = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    const auto j = static_cast<std::size_t>(assignment[i]);
    if (j < cols) matched += table[i][j];
  }
  return static_cast<double>(matched) / static_cast<double>(lp.y_true.size());
}

namespace {

double entropy_of(const std::vector<long>& counts, double n) {
  double h = 0.0;
  for (long c : counts) {
    if (c > 0) {
      const double p = static_cast<double>(c) / n;
      h -= p * std::log(p);
    }
  }
  return h;
}

double choose2(double v) { return v * (v - 1.0) / 2.0; }

}  // namespace

double nmi(const LabelPair& lp, NmiNormalization norm) {
  const auto table = contingency_table(lp);
  const double n = static_cast<double>(lp.y_true.size());
  std::vector<long> a(table.size(), 0), b(table[0].size(), 0);
  for (std::size_t i = 0; i < table.size(); ++i) {
    for (std::size_t j = 0; j < table[i].size(); ++j) {
      a[i] += table[i][j];
      b[j] += table[i][j];
    }
  }
  const double ha = entropy_of(a, n), hb = entropy_of(b, n);
  if (ha == 0.0 || hb == 0.0) {
    // both partitions are a single cluster: identical, so fully informative
    return (ha == 0.0 && hb == 0.0) ? 1.0 : 0.0;
  }
  double mi = 0.0;
  for (std::size_t i = 0; i < table.size(); ++i) {
    for (std::size_t j = 0; j < table[i].size(); ++j) {
      if (table[i][j] == 0) continue;
      const double nij = static_cast<double>(table[i][j]);
      mi += nij / n * std::log(n * nij / (static_cast<double>(a[i]) * static_cast<double>(b[j])));
    }
  }
  const double denom = norm == NmiNormalization::kGeometric ? std::sqrt(ha * hb) : 0.5 * (ha + hb);
  return std::clamp(mi / denom, 0.0, 1.0);
}

double ari(const LabelPair& lp) {
  lp.validate(2);
  const auto table = contingency_table(lp);
  const double n = static_cast<double>(lp.y_true.size());
  std::vector<double> a(table.size(), 0.0), b(table[0].size(), 0.0);
  double sum_cells = 0.0;
  for (std::size_t i = 0; i < table.size(); ++i) {
    for (std::size_t j = 0; j < table[i].size(); ++j) {
      const double nij = static_cast<double>(table[i][j]);
      sum_cells += choose2(nij);
      a[i] += nij;
      b[j] += nij;
    }
  }
  double sum_a = 0.0, sum_b = 0.0;
  for (double v : a) sum_a += choose2(v);
  for (double v : b) sum_b += choose2(v);
  const double expected = sum_a * sum_b / choose2(n);
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;  // both partitions trivial in the same way
  return (sum_cells - expected) / (max_index - expected);
}

double discriminator_score(std::span<const double> real_logits, std::span<const double> fake_logits) {
  if (real_logits.size() != fake_logits.size() || real_logits.empty()) {
    throw ShapeError("discriminator_score: real and fake batches differ in size");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < real_logits.size(); ++i) sum += sigmoid(real_logits[i]) + (1.0 - sigmoid(fake_logits[i]));
  return sum / static_cast<double>(2 * real_logits.size());
}

double generator_score(std::span<const double> fake_logits) {
  if (fake_logits.empty()) throw ShapeError("generator_score: empty batch");
  double sum = 0.0;
  for (double l : fake_logits) sum += sigmoid(l);
  return sum / static_cast<double>(fake_logits.size());
}

double round6(double v) { return std::round(v * 1e6) / 1e6; }

namespace {

void write_fixed6(std::string& out, const nlohmann::json& j, int indent, int depth) {
  const std::string pad = indent > 0 ? "\n" + std::string(static_cast<std::size_t>(indent * (depth + 1)), ' ') : "";
  const std::string close = indent > 0 ? "\n" + std::string(static_cast<std::size_t>(indent * depth), ' ') : "";
  if (j.is_number_float()) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", j.get<double>());
    out += buf;
  } else if (j.is_object()) {
    if (j.empty()) {
      out += "{}";
      return;
    }
    out += '{';
    bool first = true;
    for (const auto& [key, value] : j.items()) {
      if (!first) out += ',';
      first = false;
      out += pad + nlohmann::json(key).dump() + (indent > 0 ? ": " : ":");
      write_fixed6(out, value, indent, depth + 1);
    }
    out += close + '}';
  } else if (j.is_array()) {
    if (j.empty()) {
      out += "[]";
      return;
    }
    out += '[';
    for (std::size_t i = 0; i < j.size(); ++i) {
      if (i) out += ',';
      out += pad;
      write_fixed6(out, j[i], indent, depth + 1);
    }
    out += close + ']';
  } else {
    out += j.dump();
  }
}

}  // namespace

std::string format_fixed6(const nlohmann::json& j, int indent) {
  std::string out;
  write_fixed6(out, j, indent, 0);
  return out;
}

nlohmann::json MetricReport::to_json() const {
  return {{"acc", round6(acc)}, {"nmi", round6(nmi)},       {"ari", round6(ari)},
          {"n", n},             {"k_true", k_true},         {"k_pred", k_pred},
          {"nmi_normalization", "geometric"}};
}

MetricReport evaluate_clustering(const LabelPair& lp) {
  MetricReport r;
  r.acc = clustering_accuracy(lp);
  r.nmi = nmi(lp);
  r.ari = lp.y_true.size() >= 2 ? ari(lp) : 1.0;
  r.n = lp.y_true.size();
  r.k_true = std::set<int>(lp.y_true.begin(), lp.y_true.end()).size();
  r.k_pred = std::set<int>(lp.y_pred.begin(), lp.y_pred.end()).size();
  return r;
}

}  // namespace dcfae
