#include "rtd/losses/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rtd/core/errors.hpp"
#include "rtd/core/ops.hpp"

namespace rtd::losses {

double default_lambda1(model::Variant v) {
  switch (v) {
    case model::Variant::kHpLoss: return 5.0;
    case model::Variant::kHpDist: return 1.0;
    case model::Variant::kNone: return 0.0;
  }
  return 0.0;
}

FocalSpec FocalSpec::constant(double g) {
  FocalSpec s;
  s.mode = Mode::kConstant;
  s.gamma = g;
  return s;
}

FocalSpec FocalSpec::piecewise() {
  FocalSpec s;
  s.mode = Mode::kPiecewise;
  return s;
}

double FocalSpec::gamma_for(double p) const {
  if (mode == Mode::kConstant) return gamma;
  return p > threshold ? gamma_hi : gamma_lo;
}

void FocalSpec::validate() const {
  auto bad = [](double g) { return !(g >= 0.0) || !std::isfinite(g); };
  if (mode == Mode::kConstant && bad(gamma)) throw ConfigError("focal gamma must be >= 0");
  if (mode == Mode::kPiecewise) {
    if (bad(gamma_hi) || bad(gamma_lo)) throw ConfigError("focal gamma must be >= 0");
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("focal threshold must lie in [0,1]");
  }
}

double mlm_cross_entropy(double p) {
  RTD_REQUIRE(p >= 0.0 && p <= 1.0, "mlm_cross_entropy: probability outside [0,1]");
  return -std::log(std::max(p, kProbFloor));
}

double focal_loss(double p, const FocalSpec& spec) {
  spec.validate();
  const double ce = mlm_cross_entropy(p);
  const double g = spec.gamma_for(p);
  if (g == 0.0) return ce;
  return std::pow(1.0 - p, g) * ce;
}

double discriminator_loss(std::span<const double> d, std::span<const std::uint8_t> is_original,
                          std::span<const std::uint8_t> valid) {
  RTD_REQUIRE(d.size() == is_original.size() && d.size() == valid.size(), "discriminator_loss: size mismatch");
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!valid[i]) continue;
    const double c = std::clamp(d[i], kProbFloor, 1.0 - kProbFloor);
    s += is_original[i] ? -std::log(c) : -std::log(1.0 - c);
    ++n;
  }
  RTD_REQUIRE(n > 0, "discriminator_loss: no valid positions");
  return s / static_cast<double>(n);
}

double sampling_head_loss_hploss(double dhat, double d) { return (dhat - d) * (dhat - d); }

double sampling_head_loss_hpdist(double pg, double ps, double ld) {
  RTD_REQUIRE(ps > 0.0 && ps <= 1.0, "sampling_head_loss_hpdist: p_s must lie in (0,1]");
  return -(pg / std::max(ps, kPsFloor)) * ld * std::log(ps);
}

Tensor focal_mlm_loss(const Tensor& logits, std::span<const TokenId> targets, const FocalSpec& spec) {
  spec.validate();
  RTD_REQUIRE(logits.shape().size() == 2 && logits.shape()[0] == targets.size() && !targets.empty(),
              "focal_mlm_loss: need one target per logit row");
  const std::size_t m = targets.size();
  Tensor logp = rtd::pick(rtd::log_softmax_rows(logits), targets);
  const auto lp = logp.values();
  std::vector<double> gammas(m);
  for (std::size_t i = 0; i < m; ++i) gammas[i] = spec.gamma_for(std::exp(lp[i]));

  if (spec.differentiable_factor) {
    Tensor one_minus_p = rtd::affine(rtd::exp(logp), -1.0, 1.0);
    Tensor factor = rtd::pow_const(rtd::clamp(one_minus_p, 0.0, 1.0), gammas);
    std::vector<double> w(m, -1.0 / static_cast<double>(m));
    return rtd::weighted_sum(rtd::mul(factor, logp), w);
  }
  std::vector<double> w(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double p = std::exp(lp[i]);
    const double f = gammas[i] == 0.0 ? 1.0 : std::pow(std::max(0.0, 1.0 - p), gammas[i]);
    w[i] = -f / static_cast<double>(m);
  }
  return rtd::weighted_sum(logp, w);
}

Tensor discriminator_loss_from_logits(const Tensor& logits, std::span<const std::uint8_t> is_original,
                                      std::span<const std::uint8_t> valid) {
  const std::size_t n = logits.values().size();
  RTD_REQUIRE(is_original.size() == n && valid.size() == n, "discriminator_loss_from_logits: size mismatch");
  std::size_t count = 0;
  for (auto v : valid) count += v ? 1 : 0;
  RTD_REQUIRE(count > 0, "discriminator_loss_from_logits: no valid positions");
  // softplus(s * z) with s = -1 for originals and +1 for replaced
  std::vector<double> sign(n), w(n);
  for (std::size_t i = 0; i < n; ++i) {
    sign[i] = is_original[i] ? -1.0 : 1.0;
    w[i] = valid[i] ? 1.0 / static_cast<double>(count) : 0.0;
  }
  Tensor flat = rtd::reshape(logits, {n});
  return rtd::weighted_sum(rtd::softplus(rtd::mul_const(flat, sign)), w);
}

Tensor hp_loss_sampling_loss(const Tensor& sampling_logits, std::span<const TokenId> sampled,
                             std::span<const double> d_target) {
  const std::size_t m = sampled.size();
  RTD_REQUIRE(m > 0 && d_target.size() == m, "hp_loss_sampling_loss: size mismatch");
  Tensor dhat = rtd::sigmoid(rtd::pick(sampling_logits, sampled));
  Tensor target = Tensor::from({m}, std::vector<double>(d_target.begin(), d_target.end()));
  return rtd::mean(rtd::square(rtd::sub(dhat, target)));
}

HpDistLoss hp_dist_sampling_loss(const Tensor& sampling_logits, std::span<const TokenId> sampled,
                                 std::span<const double> pg, std::span<const double> q,
                                 std::span<const double> ld) {
  const std::size_t m = sampled.size();
  RTD_REQUIRE(m > 0 && pg.size() == m && q.size() == m && ld.size() == m, "hp_dist_sampling_loss: size mismatch");
  HpDistLoss out;
  std::vector<double> w(m);
  for (std::size_t i = 0; i < m; ++i) {
    double qi = q[i];
    if (qi < kPsFloor) {
      qi = kPsFloor;
      ++out.clamp_incidents;
    }
    w[i] = -(pg[i] / qi) * ld[i] / static_cast<double>(m);
  }
  Tensor logps = rtd::pick(rtd::log_softmax_rows(sampling_logits), sampled);
  out.loss = rtd::weighted_sum(logps, w);
  return out;
}

LossBundle combined_objective(double lg, double ls, double ld, double lambda1, double lambda2, model::Variant v) {
  RTD_REQUIRE(lambda1 >= 0.0 && lambda2 >= 0.0, "combined_objective: lambdas must be >= 0");
  LossBundle b;
  b.generator = lg;
  b.sampling = v == model::Variant::kNone ? 0.0 : ls;
  b.discriminator = ld;
  b.lambda1 = v == model::Variant::kNone ? 0.0 : lambda1;
  b.lambda2 = lambda2;
  b.total = b.generator + b.lambda1 * b.sampling + b.lambda2 * b.discriminator;
  return b;
}

Objective combined_objective(const Tensor& lg, const Tensor& ls, const Tensor& ld, double lambda1, double lambda2,
                             model::Variant v) {
  const bool has_s = v != model::Variant::kNone && ls.node_ptr() != nullptr;
  Objective o;
  o.bundle = combined_objective(lg.item(), has_s ? ls.item() : 0.0, ld.item(), lambda1, lambda2, v);
  Tensor total = rtd::add(lg, rtd::affine(ld, lambda2));
  if (has_s && o.bundle.lambda1 > 0.0) total = rtd::add(total, rtd::affine(ls, o.bundle.lambda1));
  o.total = total;
  return o;
}

}  // namespace rtd::losses
