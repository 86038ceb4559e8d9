#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rtd/core/tensor.hpp"
#include "rtd/model/config.hpp"

namespace rtd::losses {

inline constexpr double kProbFloor = 1e-6;   // clamp for probabilities fed to -log
inline constexpr double kPsFloor = 1e-9;     // clamp for p_s in the HP_Dist importance weight
inline constexpr double kDefaultLambda2 = 50.0;

double default_lambda1(model::Variant v);

struct FocalSpec {
  enum class Mode { kConstant, kPiecewise };
  Mode mode = Mode::kConstant;
  double gamma = 1.0;
  double threshold = 0.2;
  double gamma_hi = 3.0;  // p > threshold
  double gamma_lo = 5.0;  // p <= threshold
  // Differentiate through (1 - p)^gamma. Off by default: the factor is a weight.
  bool differentiable_factor = false;

  static FocalSpec constant(double g);
  static FocalSpec piecewise();
  double gamma_for(double p) const;
  // Negative gamma -> ConfigError.
  void validate() const;
};

// Scalar forms. p is the probability of the true token; values below 1e-6 are clamped.
double mlm_cross_entropy(double p);
double focal_loss(double p, const FocalSpec& spec);
// Mean two-branch NLL over valid positions. D is clamped first.
double discriminator_loss(std::span<const double> d, std::span<const std::uint8_t> is_original,
                          std::span<const std::uint8_t> valid);
double sampling_head_loss_hploss(double dhat, double d);
double sampling_head_loss_hpdist(double pg, double ps, double ld);

// Tensor forms, each returning a scalar mean.

// Focal MLM loss over rows of logits[M, V] against targets.
Tensor focal_mlm_loss(const Tensor& logits, std::span<const TokenId> targets, const FocalSpec& spec);

// Training form of the detection loss: softplus(-z) for originals, softplus(z) for replaced,
// averaged over valid positions. Equal to the clamped probability form wherever D is inside the clamp.
Tensor discriminator_loss_from_logits(const Tensor& logits, std::span<const std::uint8_t> is_original,
                                      std::span<const std::uint8_t> valid);

// (sigmoid(logit[i, x'_i]) - D_i)^2 averaged over rows. D is a constant target.
Tensor hp_loss_sampling_loss(const Tensor& sampling_logits, std::span<const TokenId> sampled,
                             std::span<const double> d_target);

struct HpDistLoss {
  Tensor loss;
  std::size_t clamp_incidents = 0;
};
// -(p_g / q) L_D log softmax(logits)[x'] averaged over rows. The weight is a constant;
// q is the probability the token was actually drawn with and is floored at 1e-9.
HpDistLoss hp_dist_sampling_loss(const Tensor& sampling_logits, std::span<const TokenId> sampled,
                                 std::span<const double> pg, std::span<const double> q,
                                 std::span<const double> ld);

struct LossBundle {
  double generator = 0.0;      // L_G^fc
  double sampling = 0.0;       // L_S
  double discriminator = 0.0;  // L_D
  double lambda1 = 0.0;
  double lambda2 = kDefaultLambda2;
  double total = 0.0;
};

// Scalar combination. NONE drops the lambda1 term.
LossBundle combined_objective(double lg, double ls, double ld, double lambda1, double lambda2, model::Variant v);

struct Objective {
  Tensor total;
  LossBundle bundle;
};
// Tensor combination. `ls` may be empty (no sampling head).
Objective combined_objective(const Tensor& lg, const Tensor& ls, const Tensor& ld, double lambda1, double lambda2,
                             model::Variant v);

}  // namespace rtd::losses
