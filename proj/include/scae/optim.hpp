#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "scae/graph.hpp"

namespace scae {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  bool operator==(const AdamConfig&) const = default;
};

// First/second moment buffers keyed by parameter name; created lazily on a parameter's first
// update. `step` counts calls to adam_step.
template <typename T>
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  ParameterStore<T> m;
  ParameterStore<T> v;
};

// One bias-corrected Adam update over every gradient entry not listed in `frozen`:
//   m = b1 m + (1-b1) g;  v = b2 v + (1-b2) g^2;
//   theta -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
// Throws NumericError naming the tensor if a gradient holds NaN/Inf.
template <typename T>
void adam_step(AdamState<T>& state, ParameterStore<T>& params, const ParameterStore<T>& grads, double lr,
               const FreezeSet& frozen = {});

struct Milestone {
  int epoch = 0;
  double multiplier = 1.0;

  bool operator==(const Milestone&) const = default;
};

// Step schedule: lr(epoch) = base_lr * product of multipliers whose milestone <= epoch.
struct LrSchedule {
  double base_lr = 1e-4;
  std::vector<Milestone> milestones;

  double lr_at(int epoch) const;
  void validate() const;

  // `e1:m1,e2:m2`; empty string for no milestones.
  std::string milestones_text() const;
  static std::vector<Milestone> parse_milestones(std::string_view text);

  bool operator==(const LrSchedule&) const = default;
};

}  // namespace scae
