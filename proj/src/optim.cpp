#include "dcfae/optim.hpp"

#include <cmath>

namespace dcfae {

template <typename T>
void Adam::step(const ParameterList<T>& params) {
  for (Parameter<T>* p : params) {
    AdamSlot& slot = slots_[p->name];
    if (slot.m.size() != p->value.size()) {
      slot.m.assign(p->value.size(), 0.0);
      slot.v.assign(p->value.size(), 0.0);
      slot.step = 0;
    }
    ++slot.step;
    const double t = static_cast<double>(slot.step);
    const double correction1 = 1.0 - std::pow(cfg_.beta1, t);
    const double correction2 = 1.0 - std::pow(cfg_.beta2, t);
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = static_cast<double>(p->grad[i]);
      slot.m[i] = cfg_.beta1 * slot.m[i] + (1.0 - cfg_.beta1) * g;
      slot.v[i] = cfg_.beta2 * slot.v[i] + (1.0 - cfg_.beta2) * g * g;
      const double m_hat = slot.m[i] / correction1;
      const double v_hat = slot.v[i] / correction2;
      const double delta = cfg_.learning_rate * m_hat / (std::sqrt(v_hat) + cfg_.epsilon);
      p->value[i] = static_cast<T>(static_cast<double>(p->value[i]) - delta);
    }
  }
}

template void Adam::step<float>(const ParameterList<float>&);
template void Adam::step<double>(const ParameterList<double>&);

}  // namespace dcfae
