#include "rtd/core/adam.hpp"

#include <cmath>

#include "rtd/core/errors.hpp"

namespace rtd {

void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m, std::span<double> v,
                 std::int64_t step, double lr, const AdamConfig& cfg) {
  RTD_REQUIRE(param.size() == grad.size() && m.size() == param.size() && v.size() == param.size(),
              "adam_update: shape mismatch");
  RTD_REQUIRE(lr >= 0.0, "adam_update: lr must be non-negative");
  RTD_REQUIRE(step >= 1, "adam_update: step must be >= 1");
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    param[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

void Adam::step(ParameterStore& params, double lr) {
  auto& all = params.all();
  if (state_.m.empty()) {
    for (const auto& p : all) {
      state_.m.emplace_back(p.tensor.size(), 0.0);
      state_.v.emplace_back(p.tensor.size(), 0.0);
    }
  }
  RTD_REQUIRE(state_.m.size() == all.size(), "Adam: state does not match parameter set");
  ++state_.step;
  for (std::size_t i = 0; i < all.size(); ++i) {
    Tensor& t = all[i].tensor;
    RTD_REQUIRE(state_.m[i].size() == t.size(), "Adam: moment shape mismatch for " + all[i].name);
    std::span<double> g = t.mutable_grad();
    adam_update(t.mutable_values(), g, state_.m[i], state_.v[i], state_.step, lr, cfg_);
  }
}

}  // namespace rtd
