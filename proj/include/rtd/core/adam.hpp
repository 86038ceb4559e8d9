#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rtd/core/parameters.hpp"

namespace rtd {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-6;
};

struct AdamState {
  std::int64_t step = 0;
  // Indexed like ParameterStore::all().
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

// One bias-corrected Adam update of a single tensor. `step` is the 1-based
// step number after incrementing.
void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m, std::span<double> v,
                 std::int64_t step, double lr, const AdamConfig& cfg);

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  // Updates every parameter from its current grad (missing grad counts as 0)
  // and advances the step counter by exactly one.
  void step(ParameterStore& params, double lr);

  const AdamState& state() const { return state_; }
  AdamState& state() { return state_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  AdamState state_;
};

}  // namespace rtd
