#include "rtd/core/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "rtd/core/errors.hpp"
#include "rtd/core/kernels.hpp"

namespace rtd {

namespace {

using detail::Node;

Tensor make(const char* op, Shape shape, std::vector<double> value, std::initializer_list<const Tensor*> inputs) {
  auto node = std::make_shared<Node>();
  node->op = op;
  node->shape = std::move(shape);
  node->value = std::move(value);
  if (checked_mode()) {
    for (double v : node->value) {
      if (!std::isfinite(v)) throw NumericFault(op, "non-finite output");
    }
  }
  if (grad_enabled()) {
    bool any = false;
    for (const Tensor* t : inputs) any = any || t->requires_grad();
    if (any) {
      node->requires_grad = true;
      for (const Tensor* t : inputs) node->parents.push_back(t->node_ptr());
    }
  }
  return Tensor(std::move(node));
}

// Grad buffer of parent i, or nullptr when that input does not need one.
std::vector<double>* acc(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  return p.requires_grad ? &p.ensure_grad() : nullptr;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  RTD_REQUIRE(a.shape() == b.shape(),
              std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

void require_rank2(const Tensor& x, const char* op) {
  RTD_REQUIRE(x.rank() == 2, std::string(op) + ": expected rank-2 tensor, got " + shape_str(x.shape()));
}

template <typename F, typename D>
Tensor unary(const char* op, const Tensor& x, F f, D dfdx) {
  std::vector<double> out(x.size());
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  Tensor r = make(op, x.shape(), std::move(out), {&x});
  if (r.requires_grad()) {
    r.node()->backward = [dfdx](Node& self) {
      auto* g = acc(self, 0);
      if (!g) return;
      const auto& xv = self.parents[0]->value;
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i] * dfdx(xv[i], self.value[i]);
    };
  }
  return r;
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  kernels::active().add(out.size(), a.values().data(), b.values().data(), out.data());
  Tensor r = make("add", a.shape(), std::move(out), {&a, &b});
  if (r.requires_grad()) {
    r.node()->backward = [](Node& self) {
      for (std::size_t i = 0; i < 2; ++i) {
        if (auto* g = acc(self, i)) kernels::active().axpy(g->size(), 1.0, self.grad.data(), g->data());
      }
    };
  }
  return r;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  Tensor r = make("sub", a.shape(), std::move(out), {&a, &b});
  if (r.requires_grad()) {
    r.node()->backward = [](Node& self) {
      if (auto* g = acc(self, 0)) kernels::active().axpy(g->size(), 1.0, self.grad.data(), g->data());
      if (auto* g = acc(self, 1)) kernels::active().axpy(g->size(), -1.0, self.grad.data(), g->data());
    };
  }
  return r;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  kernels::active().mul(out.size(), a.values().data(), b.values().data(), out.data());
  Tensor r = make("mul", a.shape(), std::move(out), {&a, &b});
  if (r.requires_grad()) {
    r.node()->backward = [](Node& self) {
      const auto& av = self.parents[0]->value;
      const auto& bv = self.parents[1]->value;
      if (auto* g = acc(self, 0)) {
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * bv[i];
      }
      if (auto* g = acc(self, 1)) {
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * av[i];
      }
    };
  }
  return r;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_rank2(x, "add_bias");
  RTD_REQUIRE(bias.rank() == 1 && bias.dim(0) == x.dim(1),
              "add_bias: bias " + shape_str(bias.shape()) + " does not match " + shape_str(x.shape()));
  const std::size_t rows = x.dim(0);
  const std::size_t cols = x.dim(1);
  std::vector<double> out(x.values().begin(), x.values().end());
  for (std::size_t i = 0; i < rows; ++i) {
    kernels::active().add(cols, out.data() + i * cols, bias.values().data(), out.data() + i * cols);
  }
  Tensor r = make("add_bias", x.shape(), std::move(out), {&x, &bias});
  if (r.requires_grad()) {
    r.node()->backward = [rows, cols](Node& self) {
      if (auto* g = acc(self, 0)) kernels::active().axpy(g->size(), 1.0, self.grad.data(), g->data());
      if (auto* g = acc(self, 1)) {
        for (std::size_t i = 0; i < rows; ++i) kernels::active().axpy(cols, 1.0, self.grad.data() + i * cols, g->data());
      }
    };
  }
  return r;
}

Tensor affine(const Tensor& x, double alpha, double beta) {
  return unary(
      "affine", x, [alpha, beta](double v) { return alpha * v + beta; }, [alpha](double, double) { return alpha; });
}

Tensor mul_const(const Tensor& x, std::span<const double> w) {
  RTD_REQUIRE(w.size() == x.size(), "mul_const: weight count mismatch");
  std::vector<double> weights(w.begin(), w.end());
  std::vector<double> out(x.size());
  kernels::active().mul(out.size(), x.values().data(), weights.data(), out.data());
  Tensor r = make("mul_const", x.shape(), std::move(out), {&x});
  if (r.requires_grad()) {
    r.node()->backward = [weights = std::move(weights)](Node& self) {
      if (auto* g = acc(self, 0)) {
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * weights[i];
      }
    };
  }
  return r;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  RTD_REQUIRE(a.dim(1) == b.dim(0), "matmul: inner dims " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n);
  kernels::gemm(false, false, m, n, k, a.values().data(), b.values().data(), out.data(), false);
  Tensor r = make("matmul", {m, n}, std::move(out), {&a, &b});
  if (r.requires_grad()) {
    r.node()->backward = [m, n, k](Node& self) {
      // dA = dC B^T, dB = A^T dC
      if (auto* g = acc(self, 0)) kernels::gemm(false, true, m, k, n, self.grad.data(), self.parents[1]->value.data(), g->data(), true);
      if (auto* g = acc(self, 1)) kernels::gemm(true, false, k, n, m, self.parents[0]->value.data(), self.grad.data(), g->data(), true);
    };
  }
  return r;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_nt");
  require_rank2(b, "matmul_nt");
  RTD_REQUIRE(a.dim(1) == b.dim(1), "matmul_nt: inner dims " + shape_str(a.shape()) + " x " + shape_str(b.shape()) + "^T");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  std::vector<double> out(m * n);
  kernels::gemm(false, true, m, n, k, a.values().data(), b.values().data(), out.data(), false);
  Tensor r = make("matmul_nt", {m, n}, std::move(out), {&a, &b});
  if (r.requires_grad()) {
    r.node()->backward = [m, n, k](Node& self) {
      // C = A B^T: dA = dC B, dB = dC^T A
      if (auto* g = acc(self, 0)) kernels::gemm(false, false, m, k, n, self.grad.data(), self.parents[1]->value.data(), g->data(), true);
      if (auto* g = acc(self, 1)) kernels::gemm(true, false, n, k, m, self.grad.data(), self.parents[0]->value.data(), g->data(), true);
    };
  }
  return r;
}

Tensor gelu(const Tensor& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return unary(
      "gelu", x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [](double v, double) { return 0.5 * (1.0 + std::erf(v * kInvSqrt2)) + v * kInvSqrt2Pi * std::exp(-0.5 * v * v); });
}

Tensor sigmoid(const Tensor& x) {
  return unary("sigmoid", x, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor softplus(const Tensor& x) {
  return unary(
      "softplus", x, [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); },
      [](double v, double) { return stable_sigmoid(v); });
}

Tensor exp(const Tensor& x) {
  return unary("exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary("log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor square(const Tensor& x) {
  return unary("square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  RTD_REQUIRE(lo <= hi, "clamp: lo > hi");
  return unary(
      "clamp", x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

Tensor pow_const(const Tensor& x, std::span<const double> exponents) {
  RTD_REQUIRE(exponents.size() == x.size(), "pow_const: exponent count mismatch");
  std::vector<double> e(exponents.begin(), exponents.end());
  std::vector<double> out(x.size());
  const auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    RTD_REQUIRE(xv[i] >= 0.0, "pow_const: negative base");
    out[i] = std::pow(xv[i], e[i]);
  }
  Tensor r = make("pow_const", x.shape(), std::move(out), {&x});
  if (r.requires_grad()) {
    r.node()->backward = [e = std::move(e)](Node& self) {
      auto* g = acc(self, 0);
      if (!g) return;
      const auto& xv = self.parents[0]->value;
      for (std::size_t i = 0; i < g->size(); ++i) {
        if (e[i] == 0.0) continue;
        (*g)[i] += self.grad[i] * e[i] * std::pow(xv[i], e[i] - 1.0);
      }
    };
  }
  return r;
}

Tensor softmax_rows(const Tensor& x) {
  require_rank2(x, "softmax_rows");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  std::vector<double> out(x.size());
  const auto xv = x.values();
  for (std::size_t i = 0; i < rows; ++i) {
    const double* in = xv.data() + i * cols;
    double* o = out.data() + i * cols;
    const double mx = *std::max_element(in, in + cols);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) z += (o[j] = std::exp(in[j] - mx));
    const double inv = 1.0 / z;
    for (std::size_t j = 0; j < cols; ++j) o[j] *= inv;
  }
  Tensor r = make("softmax_rows", x.shape(), std::move(out), {&x});
  if (r.requires_grad()) {
    r.node()->backward = [rows, cols](Node& self) {
      auto* g = acc(self, 0);
      if (!g) return;
      for (std::size_t i = 0; i < rows; ++i) {
        const double* y = self.value.data() + i * cols;
        const double* dy = self.grad.data() + i * cols;
        const double s = kernels::active().dot(y, dy, cols);
        double* dx = g->data() + i * cols;
        for (std::size_t j = 0; j < cols; ++j) dx[j] += y[j] * (dy[j] - s);
      }
    };
  }
  return r;
}

Tensor log_softmax_rows(const Tensor& x) {
  require_rank2(x, "log_softmax_rows");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  std::vector<double> out(x.size());
  const auto xv = x.values();
  for (std::size_t i = 0; i < rows; ++i) {
    const double* in = xv.data() + i * cols;
    double* o = out.data() + i * cols;
    const double mx = *std::max_element(in, in + cols);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) z += std::exp(in[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < cols; ++j) o[j] = in[j] - lse;
  }
  Tensor r = make("log_softmax_rows", x.shape(), std::move(out), {&x});
  if (r.requires_grad()) {
    r.node()->backward = [rows, cols](Node& self) {
      auto* g = acc(self, 0);
      if (!g) return;
      for (std::size_t i = 0; i < rows; ++i) {
        const double* y = self.value.data() + i * cols;
        const double* dy = self.grad.data() + i * cols;
        double s = 0.0;
        for (std::size_t j = 0; j < cols; ++j) s += dy[j];
        if (s == 0.0) {
          kernels::active().axpy(cols, 1.0, dy, g->data() + i * cols);
          continue;
        }
        double* dx = g->data() + i * cols;
        for (std::size_t j = 0; j < cols; ++j) dx[j] += dy[j] - std::exp(y[j]) * s;
      }
    };
  }
  return r;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_rank2(x, "layer_norm");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  RTD_REQUIRE(gain.size() == cols && bias.size() == cols, "layer_norm: gain/bias size mismatch");
  std::vector<double> out(x.size());
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  const auto xv = x.values();
  const auto gv = gain.values();
  const auto bv = bias.values();
  for (std::size_t i = 0; i < rows; ++i) {
    const double* in = xv.data() + i * cols;
    double mu = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mu += in[j];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<double>(cols);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[i] = rs;
    for (std::size_t j = 0; j < cols; ++j) {
      const double h = (in[j] - mu) * rs;
      (*xhat)[i * cols + j] = h;
      out[i * cols + j] = gv[j] * h + bv[j];
    }
  }
  Tensor r = make("layer_norm", x.shape(), std::move(out), {&x, &gain, &bias});
  if (r.requires_grad()) {
    r.node()->backward = [rows, cols, xhat, rstd](Node& self) {
      const auto& gv = self.parents[1]->value;
      auto* gx = acc(self, 0);
      auto* gg = acc(self, 1);
      auto* gb = acc(self, 2);
      std::vector<double> dxhat(cols);
      const double n = static_cast<double>(cols);
      for (std::size_t i = 0; i < rows; ++i) {
        const double* dy = self.grad.data() + i * cols;
        const double* h = xhat->data() + i * cols;
        if (gg) {
          for (std::size_t j = 0; j < cols; ++j) (*gg)[j] += dy[j] * h[j];
        }
        if (gb) kernels::active().axpy(cols, 1.0, dy, gb->data());
        if (gx) {
          double s1 = 0.0, s2 = 0.0;
          for (std::size_t j = 0; j < cols; ++j) {
            dxhat[j] = dy[j] * gv[j];
            s1 += dxhat[j];
            s2 += dxhat[j] * h[j];
          }
          const double rs = (*rstd)[i];
          double* dx = gx->data() + i * cols;
          for (std::size_t j = 0; j < cols; ++j) dx[j] += rs * (dxhat[j] - (s1 + h[j] * s2) / n);
        }
      }
    };
  }
  return r;
}

Tensor embedding(const Tensor& table, std::span<const TokenId> ids) {
  require_rank2(table, "embedding");
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  std::vector<TokenId> idx(ids.begin(), ids.end());
  std::vector<double> out(idx.size() * d);
  const auto tv = table.values();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    RTD_REQUIRE(idx[i] >= 0 && static_cast<std::size_t>(idx[i]) < vocab,
                "embedding: id " + std::to_string(idx[i]) + " out of range for vocab " + std::to_string(vocab));
    std::copy_n(tv.data() + static_cast<std::size_t>(idx[i]) * d, d, out.data() + i * d);
  }
  Tensor r = make("embedding", {idx.size(), d}, std::move(out), {&table});
  if (r.requires_grad()) {
    r.node()->backward = [idx = std::move(idx), d](Node& self) {
      auto* g = acc(self, 0);
      if (!g) return;
      for (std::size_t i = 0; i < idx.size(); ++i) {
        kernels::active().axpy(d, 1.0, self.grad.data() + i * d, g->data() + static_cast<std::size_t>(idx[i]) * d);
      }
    };
  }
  return r;
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  require_rank2(x, "gather_rows");
  const std::size_t n = x.dim(0), d = x.dim(1);
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  std::vector<double> out(idx.size() * d);
  const auto xv = x.values();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    RTD_REQUIRE(idx[i] < n, "gather_rows: row " + std::to_string(idx[i]) + " out of range " + std::to_string(n));
    std::copy_n(xv.data() + idx[i] * d, d, out.data() + i * d);
  }
  Tensor r = make("gather_rows", {idx.size(), d}, std::move(out), {&x});
  if (r.requires_grad()) {
    r.node()->backward = [idx = std::move(idx), d](Node& self) {
      auto* g = acc(self, 0);
      if (!g) return;
      for (std::size_t i = 0; i < idx.size(); ++i) {
        kernels::active().axpy(d, 1.0, self.grad.data() + i * d, g->data() + idx[i] * d);
      }
    };
  }
  return r;
}

Tensor pick(const Tensor& x, std::span<const TokenId> cols) {
  require_rank2(x, "pick");
  const std::size_t n = x.dim(0), v = x.dim(1);
  RTD_REQUIRE(cols.size() == n, "pick: need one column per row");
  std::vector<TokenId> idx(cols.begin(), cols.end());
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    RTD_REQUIRE(idx[i] >= 0 && static_cast<std::size_t>(idx[i]) < v, "pick: column out of range");
    out[i] = x.values()[i * v + static_cast<std::size_t>(idx[i])];
  }
  Tensor r = make("pick", {n}, std::move(out), {&x});
  if (r.requires_grad()) {
    r.node()->backward = [idx = std::move(idx), v](Node& self) {
      auto* g = acc(self, 0);
      if (!g) return;
      for (std::size_t i = 0; i < idx.size(); ++i) (*g)[i * v + static_cast<std::size_t>(idx[i])] += self.grad[i];
    };
  }
  return r;
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  Tensor r = make("sum", {}, {s}, {&x});
  if (r.requires_grad()) {
    r.node()->backward = [](Node& self) {
      auto* g = acc(self, 0);
      if (!g) return;
      const double d = self.grad[0];
      for (double& v : *g) v += d;
    };
  }
  return r;
}

Tensor mean(const Tensor& x) {
  RTD_REQUIRE(x.size() > 0, "mean of empty tensor");
  return affine(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor weighted_sum(const Tensor& x, std::span<const double> w) {
  RTD_REQUIRE(w.size() == x.size(), "weighted_sum: weight count mismatch");
  std::vector<double> weights(w.begin(), w.end());
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i] * x.values()[i];
  Tensor r = make("weighted_sum", {}, {s}, {&x});
  if (r.requires_grad()) {
    r.node()->backward = [weights = std::move(weights)](Node& self) {
      auto* g = acc(self, 0);
      if (!g) return;
      kernels::active().axpy(weights.size(), self.grad[0], weights.data(), g->data());
    };
  }
  return r;
}

Tensor reshape(const Tensor& x, Shape shape) {
  RTD_REQUIRE(shape_size(shape) == x.size(), "reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  Tensor r = make("reshape", std::move(shape), std::vector<double>(x.values().begin(), x.values().end()), {&x});
  if (r.requires_grad()) {
    r.node()->backward = [](Node& self) {
      if (auto* g = acc(self, 0)) kernels::active().axpy(g->size(), 1.0, self.grad.data(), g->data());
    };
  }
  return r;
}

Tensor detach(const Tensor& x) {
  return Tensor::from(x.shape(), std::vector<double>(x.values().begin(), x.values().end()));
}

Tensor dropout(const Tensor& x, double p, Rng& rng) {
  RTD_REQUIRE(p >= 0.0 && p < 1.0, "dropout: p must be in [0, 1)");
  if (p == 0.0) return x;
  const double keep = 1.0 / (1.0 - p);
  std::vector<double> mask(x.size());
  for (double& m : mask) m = rng.uniform() < p ? 0.0 : keep;
  std::vector<double> out(x.size());
  kernels::active().mul(out.size(), x.values().data(), mask.data(), out.data());
  Tensor r = make("dropout", x.shape(), std::move(out), {&x});
  if (r.requires_grad()) {
    r.node()->backward = [mask = std::move(mask)](Node& self) {
      auto* g = acc(self, 0);
      if (!g) return;
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * mask[i];
    };
  }
  return r;
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& rel_table,
                 const AttentionSpec& spec) {
  const std::size_t B = spec.batch, L = spec.seq_len, H = spec.heads, hd = spec.head_dim;
  const std::size_t width = H * hd;
  const Shape expect{B * L, width};
  RTD_REQUIRE(q.shape() == expect && k.shape() == expect && v.shape() == expect,
              "attention: q/k/v must be " + shape_str(expect));
  require_rank2(rel_table, "attention");
  RTD_REQUIRE(rel_table.dim(0) == H, "attention: rel_table rows must equal heads");
  RTD_REQUIRE(spec.buckets.size() == L * L, "attention: bucket map size");
  RTD_REQUIRE(spec.key_valid.size() == B * L, "attention: key mask size");
  const std::size_t nb = rel_table.dim(1);
  for (std::int32_t bkt : spec.buckets) RTD_REQUIRE(bkt >= 0 && static_cast<std::size_t>(bkt) < nb, "attention: bucket out of range");

  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  auto probs = std::make_shared<std::vector<double>>(B * H * L * L);
  std::vector<std::int32_t> buckets(spec.buckets.begin(), spec.buckets.end());
  std::vector<std::uint8_t> valid(spec.key_valid.begin(), spec.key_valid.end());
  std::vector<double> out(B * L * width);
  const auto qv = q.values(), kv = k.values(), vv = v.values(), tv = rel_table.values();

  for (std::size_t b = 0; b < B; ++b) {
    const std::uint8_t* kval = valid.data() + b * L;
    for (std::size_t h = 0; h < H; ++h) {
      double* P = probs->data() + (b * H + h) * L * L;
      const double* qb = qv.data() + b * L * width + h * hd;
      const double* kb = kv.data() + b * L * width + h * hd;
      const double* vb = vv.data() + b * L * width + h * hd;
      kernels::gemm_strided(false, true, L, L, hd, qb, width, kb, width, P, L, false);
      const double* bias = tv.data() + h * nb;
      for (std::size_t i = 0; i < L; ++i) {
        double* row = P + i * L;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < L; ++j) {
          if (!kval[j]) continue;
          row[j] = row[j] * inv_sqrt + bias[buckets[i * L + j]];
          mx = std::max(mx, row[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < L; ++j) {
          row[j] = kval[j] ? std::exp(row[j] - mx) : 0.0;
          z += row[j];
        }
        const double inv = z > 0.0 ? 1.0 / z : 0.0;
        for (std::size_t j = 0; j < L; ++j) row[j] *= inv;
      }
      kernels::gemm_strided(false, false, L, hd, L, P, L, vb, width, out.data() + b * L * width + h * hd, width, false);
    }
  }

  Tensor r = make("attention", expect, std::move(out), {&q, &k, &v, &rel_table});
  if (r.requires_grad()) {
    r.node()->backward = [B, L, H, hd, width, nb, inv_sqrt, probs, buckets = std::move(buckets),
                          valid = std::move(valid)](Node& self) {
      auto* gq = acc(self, 0);
      auto* gk = acc(self, 1);
      auto* gv = acc(self, 2);
      auto* gt = acc(self, 3);
      const auto& qv = self.parents[0]->value;
      const auto& kv = self.parents[1]->value;
      const auto& vv = self.parents[2]->value;
      std::vector<double> dP(L * L);
      for (std::size_t b = 0; b < B; ++b) {
        const std::uint8_t* kval = valid.data() + b * L;
        for (std::size_t h = 0; h < H; ++h) {
          const double* P = probs->data() + (b * H + h) * L * L;
          const std::size_t off = b * L * width + h * hd;
          const double* dO = self.grad.data() + off;
          // dV = P^T dO
          if (gv) kernels::gemm_strided(true, false, L, hd, L, P, L, dO, width, gv->data() + off, width, true);
          if (!gq && !gk && !gt) continue;
          // dP = dO V^T, then dS = P * (dP - rowsum(dP * P))
          kernels::gemm_strided(false, true, L, L, hd, dO, width, vv.data() + off, width, dP.data(), L, false);
          for (std::size_t i = 0; i < L; ++i) {
            double* dp = dP.data() + i * L;
            const double* p = P + i * L;
            const double s = kernels::active().dot(dp, p, L);
            for (std::size_t j = 0; j < L; ++j) dp[j] = kval[j] ? p[j] * (dp[j] - s) : 0.0;
          }
          if (gt) {
            double* trow = gt->data() + h * nb;
            for (std::size_t i = 0; i < L * L; ++i) trow[buckets[i]] += dP[i];
          }
          for (double& x : dP) x *= inv_sqrt;
          if (gq) kernels::gemm_strided(false, false, L, hd, L, dP.data(), L, kv.data() + off, width, gq->data() + off, width, true);
          if (gk) kernels::gemm_strided(true, false, L, hd, L, dP.data(), L, qv.data() + off, width, gk->data() + off, width, true);
        }
      }
    };
  }
  return r;
}

}  // namespace rtd
