#pragma once

#include <ostream>
#include <span>
#include <vector>

#include "rtd/core/errors.hpp"
#include "rtd/core/rng.hpp"
#include "rtd/core/tensor.hpp"

namespace rtd::sampling {

// A probability vector over the vocabulary: entries >= 0, sum 1 within 1e-9.
struct VocabDistribution {
  std::vector<double> probs;

  std::size_t size() const { return probs.size(); }
  double operator[](std::size_t i) const { return probs[i]; }
  // Throws ContractViolation if the invariant does not hold.
  void validate() const;
};

// Raised when p_s is zero somewhere p_g * L_D is positive.
class SupportViolation : public ContractViolation {
 public:
  using ContractViolation::ContractViolation;
};

// softmax(logits) with max subtraction; NaN -> NumericFault.
VocabDistribution mlm_distribution(std::span<const double> logits);

// Rewrites D-hat into an estimated discriminator loss per candidate:
// -log D-hat at the original token, -log(1 - D-hat) elsewhere, with D-hat
// clamped to [1e-6, 1 - 1e-6] first.
std::vector<double> estimated_disc_loss(std::span<const double> dhat, TokenId original);

// p_s proportional to p_g * L-hat. Falls back to p_g when the normalizer is below 1e-12.
VocabDistribution hp_loss_distribution(const VocabDistribution& pg, std::span<const double> est_loss);

// softmax of the sampling-head logits e(x') . h_S(c).
VocabDistribution hp_dist_distribution(std::span<const double> logits);

// Zero-variance proposal p_g * L_D / Z computed by enumeration.
VocabDistribution optimal_ps_oracle(const VocabDistribution& pg, std::span<const double> loss);

// Zeroes PAD / CLS / SEP / MASK and renormalizes. Falls back to uniform over
// the regular tokens if nothing is left.
VocabDistribution exclude_specials(const VocabDistribution& d);

// Inverse-CDF categorical draw (one uniform).
TokenId sample_categorical(const VocabDistribution& d, Rng& rng);

struct SamplingDecision {
  std::size_t position = 0;  // flat index into the token block
  TokenId original = 0;
  TokenId sampled = 0;
  double p_g = 0.0;
  double p_s = 0.0;          // probability under the distribution actually drawn from
  double est_loss = 0.0;     // L-hat_D(x', c); NaN unless HP_LOSS
  bool is_original = false;
};

struct PositionProposal {
  VocabDistribution draw;        // specials already excluded
  VocabDistribution pg;          // MLM distribution, for the trace
  std::vector<double> est_loss;  // empty unless HP_LOSS
};

struct Replacement {
  std::vector<TokenId> replaced;  // x^R
  std::vector<SamplingDecision> decisions;
};

// Draws one token per masked position and substitutes it into c.
Replacement sample_replacements(std::span<const TokenId> original, std::span<const TokenId> corrupted,
                                std::span<const std::size_t> mask_positions, std::span<const PositionProposal> proposals,
                                Rng& rng);

void write_decisions_csv_header(std::ostream& os);
void write_decisions_csv(std::ostream& os, std::int64_t step, std::span<const SamplingDecision> decisions);

// Z = E_{p_g}[L].
double expected_loss(const VocabDistribution& pg, std::span<const double> loss);
// Var_{p_g}[L] = sum p_g (L - Z)^2.
double variance_under_pg(const VocabDistribution& pg, std::span<const double> loss);
// Var_{p_s}[(p_g / p_s) L] = sum (p_g L - p_s Z)^2 / p_s.
double weighted_variance(const VocabDistribution& pg, const VocabDistribution& ps, std::span<const double> loss);

struct VarianceEstimate {
  double z = 0.0;
  double var_pg = 0.0;          // closed form
  double var_ps_weighted = 0.0; // closed form
  double mc_mean_pg = 0.0;
  double mc_var_pg = 0.0;
  double mc_mean_ps = 0.0;
  double mc_var_ps = 0.0;
  std::size_t samples = 0;
};

VarianceEstimate estimator_variance(const VocabDistribution& pg, const VocabDistribution& ps,
                                    std::span<const double> loss, std::size_t n_samples, Rng& rng);

}  // namespace rtd::sampling
