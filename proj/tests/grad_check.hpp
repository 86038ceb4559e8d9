#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "rtd/core/ops.hpp"
#include "rtd/core/rng.hpp"
#include "rtd/core/tensor.hpp"

namespace rtd::test {

inline Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0, bool grad = true) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<double> v(n);
  for (auto& x : v) x = scale * rng.normal();
  return Tensor::from(std::move(shape), std::move(v), grad);
}

// Max relative error between analytic and central-difference gradients of
// f(inputs) (a scalar) with respect to every element of every input.
inline double grad_check(const std::vector<Tensor>& inputs, const std::function<Tensor()>& f, double h = 1e-6) {
  for (const auto& t : inputs) const_cast<Tensor&>(t).zero_grad();
  Tensor out = f();
  backward(out);
  double worst = 0.0;
  for (const auto& t0 : inputs) {
    Tensor t = t0;
    const auto g = t.grad();
    std::vector<double> analytic(g.begin(), g.end());
    auto vals = t.mutable_values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double keep = vals[i];
      double fp, fm;
      {
        NoGradGuard ng;
        vals[i] = keep + h;
        fp = f().item();
        vals[i] = keep - h;
        fm = f().item();
      }
      vals[i] = keep;
      const double numeric = (fp - fm) / (2.0 * h);
      const double denom = std::max({1.0, std::abs(numeric), std::abs(analytic[i])});
      worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
    }
  }
  return worst;
}

}  // namespace rtd::test
