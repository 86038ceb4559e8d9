#include "rtd/sampling/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>

#include "rtd/data/vocab.hpp"

namespace rtd::sampling {

namespace {

constexpr double kClamp = 1e-6;
constexpr double kDegenerateZ = 1e-12;

void require_same_size(std::size_t a, std::size_t b, const char* op) {
  RTD_REQUIRE(a == b, std::string(op) + ": vocabulary size mismatch");
}

VocabDistribution softmax(std::span<const double> logits, const char* op) {
  RTD_REQUIRE(!logits.empty(), std::string(op) + ": empty logits");
  for (double z : logits) {
    if (std::isnan(z)) throw NumericFault(op, "NaN logit");
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  if (!std::isfinite(mx)) throw NumericFault(op, "infinite logit");
  VocabDistribution d;
  d.probs.resize(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) z += (d.probs[i] = std::exp(logits[i] - mx));
  for (double& p : d.probs) p /= z;
  return d;
}

}  // namespace

void VocabDistribution::validate() const {
  RTD_REQUIRE(!probs.empty(), "distribution is empty");
  double s = 0.0;
  for (double p : probs) {
    RTD_REQUIRE(p >= 0.0 && std::isfinite(p), "distribution has a negative or non-finite entry");
    s += p;
  }
  RTD_REQUIRE(std::abs(s - 1.0) <= 1e-9, "distribution does not sum to 1");
}

VocabDistribution mlm_distribution(std::span<const double> logits) { return softmax(logits, "mlm_distribution"); }

VocabDistribution hp_dist_distribution(std::span<const double> logits) {
  return softmax(logits, "hp_dist_distribution");
}

std::vector<double> estimated_disc_loss(std::span<const double> dhat, TokenId original) {
  RTD_REQUIRE(original >= 0 && static_cast<std::size_t>(original) < dhat.size(),
              "estimated_disc_loss: original id out of range");
  std::vector<double> out(dhat.size());
  for (std::size_t i = 0; i < dhat.size(); ++i) {
    const double d = std::clamp(dhat[i], kClamp, 1.0 - kClamp);
    out[i] = static_cast<TokenId>(i) == original ? -std::log(d) : -std::log(1.0 - d);
  }
  return out;
}

VocabDistribution hp_loss_distribution(const VocabDistribution& pg, std::span<const double> est_loss) {
  require_same_size(pg.size(), est_loss.size(), "hp_loss_distribution");
  VocabDistribution out;
  out.probs.resize(pg.size());
  double z = 0.0;
  for (std::size_t i = 0; i < pg.size(); ++i) {
    RTD_REQUIRE(est_loss[i] >= 0.0, "hp_loss_distribution: negative loss estimate");
    z += (out.probs[i] = pg[i] * est_loss[i]);
  }
  if (z < kDegenerateZ) return pg;
  for (double& p : out.probs) p /= z;
  return out;
}

VocabDistribution optimal_ps_oracle(const VocabDistribution& pg, std::span<const double> loss) {
  require_same_size(pg.size(), loss.size(), "optimal_ps_oracle");
  const double z = expected_loss(pg, loss);
  RTD_REQUIRE(z > 0.0, "optimal_ps_oracle: expected loss must be positive");
  VocabDistribution out;
  out.probs.resize(pg.size());
  for (std::size_t i = 0; i < pg.size(); ++i) out.probs[i] = pg[i] * loss[i] / z;
  return out;
}

VocabDistribution exclude_specials(const VocabDistribution& d) {
  VocabDistribution out = d;
  for (TokenId s : {data::kPad, data::kCls, data::kSep, data::kMask}) {
    if (static_cast<std::size_t>(s) < out.size()) out.probs[static_cast<std::size_t>(s)] = 0.0;
  }
  double z = 0.0;
  for (double p : out.probs) z += p;
  if (z <= 0.0) {
    std::fill(out.probs.begin(), out.probs.end(), 0.0);
    const std::size_t regular = out.size() > data::kNumSpecial ? out.size() - data::kNumSpecial : 0;
    RTD_REQUIRE(regular > 0, "exclude_specials: no regular tokens");
    for (std::size_t i = data::kNumSpecial; i < out.size(); ++i) out.probs[i] = 1.0 / static_cast<double>(regular);
    return out;
  }
  for (double& p : out.probs) p /= z;
  return out;
}

TokenId sample_categorical(const VocabDistribution& d, Rng& rng) {
  RTD_REQUIRE(!d.probs.empty(), "sample_categorical: empty distribution");
  double total = 0.0;
  std::size_t last_positive = d.size();
  for (std::size_t i = 0; i < d.size(); ++i) {
    RTD_REQUIRE(d[i] >= 0.0 && std::isfinite(d[i]), "sample_categorical: invalid distribution");
    total += d[i];
    if (d[i] > 0.0) last_positive = i;
  }
  RTD_REQUIRE(last_positive < d.size() && std::abs(total - 1.0) <= 1e-9, "sample_categorical: invalid distribution");
  const double u = rng.uniform() * total;
  double c = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    c += d[i];
    if (u < c && d[i] > 0.0) return static_cast<TokenId>(i);
  }
  return static_cast<TokenId>(last_positive);
}

Replacement sample_replacements(std::span<const TokenId> original, std::span<const TokenId> corrupted,
                                std::span<const std::size_t> mask_positions, std::span<const PositionProposal> proposals,
                                Rng& rng) {
  RTD_REQUIRE(original.size() == corrupted.size(), "sample_replacements: x and c differ in length");
  RTD_REQUIRE(proposals.size() == mask_positions.size(), "sample_replacements: need one distribution per masked position");
  Replacement out;
  out.replaced.assign(corrupted.begin(), corrupted.end());
  out.decisions.reserve(mask_positions.size());
  for (std::size_t i = 0; i < mask_positions.size(); ++i) {
    const std::size_t pos = mask_positions[i];
    RTD_REQUIRE(pos < original.size(), "sample_replacements: position out of range");
    const PositionProposal& prop = proposals[i];
    const TokenId x = sample_categorical(prop.draw, rng);
    const auto xi = static_cast<std::size_t>(x);
    out.replaced[pos] = x;
    SamplingDecision dec;
    dec.position = pos;
    dec.original = original[pos];
    dec.sampled = x;
    dec.p_g = xi < prop.pg.size() ? prop.pg[xi] : std::numeric_limits<double>::quiet_NaN();
    dec.p_s = prop.draw[xi];
    dec.est_loss = prop.est_loss.empty() ? std::numeric_limits<double>::quiet_NaN() : prop.est_loss[xi];
    dec.is_original = x == original[pos];
    out.decisions.push_back(dec);
  }
  return out;
}

void write_decisions_csv_header(std::ostream& os) { os << "step,position,x,x_prime,p_g,p_s,est_loss,is_original\n"; }

void write_decisions_csv(std::ostream& os, std::int64_t step, std::span<const SamplingDecision> decisions) {
  const auto flags = os.flags();
  os << std::setprecision(17);
  for (const auto& d : decisions) {
    os << step << ',' << d.position << ',' << d.original << ',' << d.sampled << ',' << d.p_g << ',' << d.p_s << ',';
    if (!std::isnan(d.est_loss)) os << d.est_loss;
    os << ',' << (d.is_original ? 1 : 0) << '\n';
  }
  os.flags(flags);
}

double expected_loss(const VocabDistribution& pg, std::span<const double> loss) {
  require_same_size(pg.size(), loss.size(), "expected_loss");
  double z = 0.0;
  for (std::size_t i = 0; i < pg.size(); ++i) z += pg[i] * loss[i];
  return z;
}

double variance_under_pg(const VocabDistribution& pg, std::span<const double> loss) {
  const double z = expected_loss(pg, loss);
  double v = 0.0;
  for (std::size_t i = 0; i < pg.size(); ++i) v += pg[i] * (loss[i] - z) * (loss[i] - z);
  return v;
}

double weighted_variance(const VocabDistribution& pg, const VocabDistribution& ps, std::span<const double> loss) {
  require_same_size(pg.size(), ps.size(), "weighted_variance");
  const double z = expected_loss(pg, loss);
  double v = 0.0;
  for (std::size_t i = 0; i < pg.size(); ++i) {
    const double target = pg[i] * loss[i];
    if (ps[i] <= 0.0) {
      if (target > 0.0) throw SupportViolation("p_s is zero where p_g * L_D is positive (token " + std::to_string(i) + ")");
      continue;
    }
    const double r = target - ps[i] * z;
    v += r * r / ps[i];
  }
  return v;
}

VarianceEstimate estimator_variance(const VocabDistribution& pg, const VocabDistribution& ps,
                                    std::span<const double> loss, std::size_t n_samples, Rng& rng) {
  RTD_REQUIRE(n_samples >= 2, "estimator_variance: need at least two samples");
  pg.validate();
  ps.validate();
  VarianceEstimate e;
  e.z = expected_loss(pg, loss);
  e.var_pg = variance_under_pg(pg, loss);
  e.var_ps_weighted = weighted_variance(pg, ps, loss);
  e.samples = n_samples;

  auto moments = [&](const VocabDistribution& draw, bool weighted, double& mean, double& var) {
    // Welford
    double m = 0.0, s = 0.0;
    for (std::size_t i = 0; i < n_samples; ++i) {
      const auto x = static_cast<std::size_t>(sample_categorical(draw, rng));
      const double value = weighted ? pg[x] / ps[x] * loss[x] : loss[x];
      const double delta = value - m;
      m += delta / static_cast<double>(i + 1);
      s += delta * (value - m);
    }
    mean = m;
    var = s / static_cast<double>(n_samples - 1);
  };
  moments(pg, false, e.mc_mean_pg, e.mc_var_pg);
  moments(ps, true, e.mc_mean_ps, e.mc_var_ps);
  return e;
}

}  // namespace rtd::sampling
