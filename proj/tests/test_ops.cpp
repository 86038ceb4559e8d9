#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "rtd/core/errors.hpp"
#include "rtd/core/ops.hpp"
#include "rtd/model/encoder.hpp"
#include "test_util.hpp"

using namespace rtd;
using rtd::test::grad_check;
using rtd::test::random_tensor;

namespace {

constexpr double kTol = 1e-4;

// Random linear probe so every output element carries a distinct weight.
std::vector<double> probe(std::size_t n, std::uint64_t seed = 99) {
  Rng r(seed, Stream::kAnalysis);
  std::vector<double> w(n);
  for (auto& x : w) x = r.normal();
  return w;
}

Tensor reduce(const Tensor& y) { return weighted_sum(y, probe(y.size())); }

Tensor positive_tensor(Shape s, Rng& rng) {
  Tensor t = random_tensor(std::move(s), rng);
  for (auto& v : t.mutable_values()) v = 0.2 + std::abs(v);
  return t;
}

}  // namespace

TEST_SUITE("ops") {
  TEST_CASE("elementwise binary ops") {
    Rng rng(1, Stream::kAnalysis);
    Tensor a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
    CHECK(grad_check({a, b}, [&] { return reduce(add(a, b)); }) < kTol);
    CHECK(grad_check({a, b}, [&] { return reduce(sub(a, b)); }) < kTol);
    CHECK(grad_check({a, b}, [&] { return reduce(mul(a, b)); }) < kTol);
    CHECK(grad_check({a, b}, [&] { return reduce(mul(a, a)); }) < kTol);  // shared input
  }

  TEST_CASE("bias, affine and constant scaling") {
    Rng rng(2, Stream::kAnalysis);
    Tensor x = random_tensor({5, 3}, rng), bias = random_tensor({3}, rng);
    CHECK(grad_check({x, bias}, [&] { return reduce(add_bias(x, bias)); }) < kTol);
    CHECK(grad_check({x}, [&] { return reduce(affine(x, -1.7, 0.3)); }) < kTol);
    const auto w = probe(15, 5);
    CHECK(grad_check({x}, [&] { return reduce(mul_const(x, w)); }) < kTol);
  }

  TEST_CASE("matmul and matmul_nt") {
    Rng rng(3, Stream::kAnalysis);
    Tensor a = random_tensor({4, 6}, rng), b = random_tensor({6, 5}, rng), c = random_tensor({7, 6}, rng);
    CHECK(grad_check({a, b}, [&] { return reduce(matmul(a, b)); }) < kTol);
    CHECK(grad_check({a, c}, [&] { return reduce(matmul_nt(a, c)); }) < kTol);
  }

  TEST_CASE("smooth unary ops") {
    Rng rng(4, Stream::kAnalysis);
    Tensor x = random_tensor({4, 5}, rng);
    CHECK(grad_check({x}, [&] { return reduce(gelu(x)); }) < kTol);
    CHECK(grad_check({x}, [&] { return reduce(sigmoid(x)); }) < kTol);
    CHECK(grad_check({x}, [&] { return reduce(softplus(x)); }) < kTol);
    CHECK(grad_check({x}, [&] { return reduce(exp(x)); }) < kTol);
    CHECK(grad_check({x}, [&] { return reduce(square(x)); }) < kTol);
    Tensor p = positive_tensor({4, 5}, rng);
    CHECK(grad_check({p}, [&] { return reduce(log(p)); }) < kTol);
    const auto e = probe(20, 8);
    std::vector<double> ex(20);
    for (std::size_t i = 0; i < 20; ++i) ex[i] = 1.0 + std::abs(e[i]);
    CHECK(grad_check({p}, [&] { return reduce(pow_const(p, ex)); }) < kTol);
  }

  TEST_CASE("clamp passes gradient inside and blocks it outside") {
    Tensor x = Tensor::from({4}, {-2.0, 0.3, 0.6, 3.0}, true);
    CHECK(grad_check({x}, [&] { return reduce(clamp(x, 0.0, 1.0)); }) < kTol);
    x.zero_grad();
    backward(sum(clamp(x, 0.0, 1.0)));
    const auto g = x.grad();
    CHECK(g[0] == 0.0);
    CHECK(g[1] == 1.0);
    CHECK(g[2] == 1.0);
    CHECK(g[3] == 0.0);
  }

  TEST_CASE("softmax and log-softmax rows") {
    Rng rng(5, Stream::kAnalysis);
    Tensor x = random_tensor({3, 7}, rng, 2.0);
    CHECK(grad_check({x}, [&] { return reduce(softmax_rows(x)); }) < kTol);
    CHECK(grad_check({x}, [&] { return reduce(log_softmax_rows(x)); }) < kTol);
    Tensor s = softmax_rows(x);
    for (std::size_t r = 0; r < 3; ++r) {
      double t = 0;
      for (std::size_t c = 0; c < 7; ++c) t += s.at(r, c);
      CHECK(t == doctest::Approx(1.0).epsilon(1e-14));
    }
  }

  TEST_CASE("layer norm over gain, bias and input") {
    Rng rng(6, Stream::kAnalysis);
    Tensor x = random_tensor({4, 6}, rng), g = random_tensor({6}, rng), b = random_tensor({6}, rng);
    CHECK(grad_check({x, g, b}, [&] { return reduce(layer_norm(x, g, b)); }) < kTol);
  }

  TEST_CASE("embedding scatter-add, gather, pick") {
    Rng rng(7, Stream::kAnalysis);
    Tensor table = random_tensor({6, 4}, rng);
    const std::vector<TokenId> ids{1, 3, 1, 5, 0};  // repeated id accumulates
    CHECK(grad_check({table}, [&] { return reduce(embedding(table, ids)); }) < kTol);
    Tensor x = random_tensor({5, 3}, rng);
    const std::vector<std::size_t> rows{4, 0, 4};
    CHECK(grad_check({x}, [&] { return reduce(gather_rows(x, rows)); }) < kTol);
    const std::vector<TokenId> cols{2, 0, 1, 1, 2};
    CHECK(grad_check({x}, [&] { return reduce(pick(x, cols)); }) < kTol);
  }

  TEST_CASE("reductions and reshape") {
    Rng rng(8, Stream::kAnalysis);
    Tensor x = random_tensor({3, 4}, rng);
    CHECK(grad_check({x}, [&] { return sum(square(x)); }) < kTol);
    CHECK(grad_check({x}, [&] { return mean(square(x)); }) < kTol);
    CHECK(grad_check({x}, [&] { return reduce(reshape(x, {4, 3})); }) < kTol);
  }

  TEST_CASE("dropout with a fixed draw is linear and inverted-scaled") {
    Rng rng(9, Stream::kAnalysis);
    Tensor x = random_tensor({6, 5}, rng);
    CHECK(grad_check({x}, [&] {
            Rng d(1, Stream::kDropout, 0);
            return reduce(dropout(x, 0.3, d));
          }) < kTol);
    Rng d(1, Stream::kDropout, 0);
    Tensor y = dropout(x, 0.3, d);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double yi = y.values()[i], xi = x.values()[i];
      CHECK((yi == 0.0 || std::abs(yi - xi / 0.7) < 1e-12));
    }
    Rng d0(1, Stream::kDropout, 0);
    Tensor same = dropout(x, 0.0, d0);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(same.values()[i] == x.values()[i]);
  }

  TEST_CASE("detach cuts the tape") {
    Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
    x.zero_grad();
    backward(sum(mul(detach(x), x)));
    CHECK(x.grad()[0] == doctest::Approx(1.0));
    CHECK(x.grad()[1] == doctest::Approx(2.0));
  }

  TEST_CASE("attention with relative bias and key padding") {
    Rng rng(10, Stream::kAnalysis);
    const std::size_t B = 2, L = 4, H = 2, Dh = 3, nb = 8;
    Tensor q = random_tensor({B * L, H * Dh}, rng), k = random_tensor({B * L, H * Dh}, rng),
           v = random_tensor({B * L, H * Dh}, rng), rel = random_tensor({H, nb}, rng);
    std::vector<std::int32_t> buckets(L * L);
    for (std::size_t i = 0; i < L; ++i)
      for (std::size_t j = 0; j < L; ++j)
        buckets[i * L + j] = model::relative_bucket(static_cast<std::int64_t>(j) - static_cast<std::int64_t>(i), nb, 16);
    std::vector<std::uint8_t> valid{1, 1, 1, 1, 1, 1, 0, 0};
    AttentionSpec spec{B, L, H, Dh, buckets, valid};
    CHECK(grad_check({q, k, v, rel}, [&] { return reduce(attention(q, k, v, rel, spec)); }) < kTol);

    // Changing a padded key/value must not change any output.
    Tensor out1 = attention(q, k, v, rel, spec);
    for (std::size_t c = 0; c < H * Dh; ++c) {
      k.mutable_values()[6 * H * Dh + c] += 5.0;
      v.mutable_values()[7 * H * Dh + c] -= 3.0;
    }
    Tensor out2 = attention(q, k, v, rel, spec);
    for (std::size_t i = 0; i < out1.size(); ++i) CHECK(out1.values()[i] == out2.values()[i]);
  }

  TEST_CASE("checked mode turns NaN or Inf into a numeric fault") {
    REQUIRE(checked_mode());
    Tensor x = Tensor::from({2}, {1.0, 1000.0});
    CHECK_THROWS_AS(exp(x), NumericFault);
    Tensor n = Tensor::from({1}, {std::numeric_limits<double>::quiet_NaN()});
    CHECK_THROWS_AS(add(n, n), NumericFault);
  }

  TEST_CASE("shape contracts are enforced") {
    Tensor a = Tensor::zeros({2, 3}), b = Tensor::zeros({2, 2});
    CHECK_THROWS_AS(add(a, b), ContractViolation);
    CHECK_THROWS_AS(matmul(a, b), ContractViolation);
  }

  TEST_CASE("no-grad guard records nothing") {
    Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
    NoGradGuard ng;
    Tensor y = mul(x, x);
    CHECK_FALSE(y.requires_grad());
  }
}
