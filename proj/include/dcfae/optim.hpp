#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "dcfae/layers.hpp"

namespace dcfae {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Per-tensor Adam moments and step count, keyed by parameter name.
struct AdamSlot {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
};

/// Adam over one parameter group. Moments are held in double regardless of
/// the parameter type. Only tensors passed to step() are touched.
class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  template <typename T>
  void step(const ParameterList<T>& params);

  const AdamConfig& config() const { return cfg_; }
  void set_learning_rate(double lr) { cfg_.learning_rate = lr; }
  std::map<std::string, AdamSlot>& slots() { return slots_; }
  const std::map<std::string, AdamSlot>& slots() const { return slots_; }

 private:
  AdamConfig cfg_;
  std::map<std::string, AdamSlot> slots_;
};

}  // namespace dcfae
