#include "scae/optim.hpp"

#include <cmath>

#include "scae/kv.hpp"

namespace scae {

template <typename T>
void adam_step(AdamState<T>& state, ParameterStore<T>& params, const ParameterStore<T>& grads, double lr,
               const FreezeSet& frozen) {
  if (!(lr > 0.0)) throw ContractError("adam_step: learning rate must be positive");
  for (const auto& g : grads.entries()) {
    if (frozen.contains(g.name)) continue;
    check_finite(g.value, "gradient of '" + g.name + "'");
    require_same_shape(params.get(g.name).shape(), g.value.shape(), ("adam_step(" + g.name + ")").c_str());
  }

  ++state.step;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(c.beta1, t);
  const double correct2 = 1.0 - std::pow(c.beta2, t);

  for (const auto& g : grads.entries()) {
    if (frozen.contains(g.name)) continue;
    if (!state.m.contains(g.name)) {
      state.m.add(g.name, BasicTensor<T>(g.value.shape()), true);
      state.v.add(g.name, BasicTensor<T>(g.value.shape()), true);
    }
    auto& theta = params.get(g.name);
    auto& m = state.m.get(g.name);
    auto& v = state.v.get(g.name);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double grad = g.value[i];
      const double mi = c.beta1 * m[i] + (1.0 - c.beta1) * grad;
      const double vi = c.beta2 * v[i] + (1.0 - c.beta2) * grad * grad;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double m_hat = mi / correct1;
      const double v_hat = vi / correct2;
      theta[i] = static_cast<T>(theta[i] - lr * m_hat / (std::sqrt(v_hat) + c.eps));
    }
  }
}

template void adam_step<float>(AdamState<float>&, ParameterStore<float>&, const ParameterStore<float>&, double,
                               const FreezeSet&);
template void adam_step<double>(AdamState<double>&, ParameterStore<double>&, const ParameterStore<double>&, double,
                                const FreezeSet&);

double LrSchedule::lr_at(int epoch) const {
  double lr = base_lr;
  for (const auto& m : milestones)
    if (m.epoch <= epoch) lr *= m.multiplier;
  return lr;
}

void LrSchedule::validate() const {
  if (!(base_lr > 0.0)) throw ContractError("lr must be positive");
  for (std::size_t i = 0; i < milestones.size(); ++i) {
    const auto& m = milestones[i];
    if (!(m.multiplier > 0.0 && m.multiplier <= 1.0)) throw ContractError("milestones: multipliers must lie in (0, 1]");
    if (m.epoch < 0) throw ContractError("milestones: epochs must be >= 0");
    if (i > 0 && milestones[i - 1].epoch >= m.epoch) throw ContractError("milestones must be strictly ascending");
  }
}

std::string LrSchedule::milestones_text() const {
  std::string out;
  for (std::size_t i = 0; i < milestones.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(milestones[i].epoch) + ":" + format_double(milestones[i].multiplier);
  }
  return out;
}

std::vector<Milestone> LrSchedule::parse_milestones(std::string_view text) {
  std::vector<Milestone> out;
  if (trim(text).empty()) return out;
  for (const auto& item : split(text, ',')) {
    const auto f = split(item, ':');
    if (f.size() != 2) throw ContractError("milestones: expected epoch:multiplier, got '" + item + "'");
    out.push_back({static_cast<int>(parse_int(f[0], "milestones")), parse_double(f[1], "milestones")});
  }
  return out;
}

}  // namespace scae
