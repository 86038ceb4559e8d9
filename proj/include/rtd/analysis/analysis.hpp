#pragma once

#include <array>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "rtd/core/errors.hpp"
#include "rtd/data/batching.hpp"
#include "rtd/model/model_pair.hpp"
#include "rtd/train/config.hpp"
#include "rtd/train/pipeline.hpp"

namespace rtd::analysis {

using train::Scheme;

class UndefinedCorrelation : public ContractViolation {
 public:
  using ContractViolation::ContractViolation;
};

class VocabTooLarge : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

inline constexpr std::size_t kHistogramBins = 10;
inline constexpr std::size_t kVarianceVocabLimit = 64;
inline constexpr std::size_t kDefaultVariancePositions = 200;

enum class Positions { kMasked, kAll };
std::string_view positions_name(Positions p);

struct AnalysisSettings {
  double mask_frac = 0.15;
  int ngram_max = 3;
  std::uint64_t seed = 7;
};
AnalysisSettings settings_from(const train::TrainConfig& cfg, std::uint64_t seed);

// Fixed-order batches over the held-out sequences (max_batches == 0 keeps all).
std::vector<data::Batch> heldout_batches(std::span<const std::vector<TokenId>> sequences, std::size_t batch_size,
                                         std::size_t max_len, std::size_t max_batches = 0);

// One forward pass per batch with no dropout and no tape.
train::PipelineResult analysis_pass(const model::ModelPair& models, const data::Batch& batch, Scheme scheme,
                                    const AnalysisSettings& s);

// ---- statistics on plain numbers

struct HistogramReport {
  std::string scheme;
  std::array<std::size_t, kHistogramBins> counts{};
  std::size_t samples = 0;
  double fraction(std::size_t bin) const;
  double top_bin_fraction() const { return fraction(kHistogramBins - 1); }
};
// Width-0.1 bins over [0,1]; 1.0 goes into the top bin.
std::size_t maxprob_bin(double p);
HistogramReport histogram_of(std::span<const double> maxima, std::string scheme);

double pearson(std::span<const double> x, std::span<const double> y);
double spearman(std::span<const double> x, std::span<const double> y);

struct CorrelationReport {
  double r_original = 0.0;
  double r_replaced = 0.0;
  double r_all = 0.0;
  std::size_t n_original = 0;
  std::size_t n_replaced = 0;
  std::size_t n_all = 0;
  bool spearman = false;
};
// Groups by is_original; each group needs >= 2 pairs and non-zero variance.
CorrelationReport correlation_of(std::span<const double> estimate, std::span<const double> actual,
                                 std::span<const std::uint8_t> is_original, bool use_spearman = false);

// Fraction of included positions where (D >= 0.5) == is_original.
double accuracy_of(std::span<const double> d, std::span<const std::uint8_t> is_original,
                   std::span<const std::uint8_t> include);

// ---- model-driven reports

struct HistogramPair {
  HistogramReport pg;
  HistogramReport ps;
};
// Max-probability of the sampling distribution at each masked position. Both
// histograms come from the same masks.
HistogramPair maxprob_histogram(const model::ModelPair& models, std::span<const data::Batch> batches,
                                const AnalysisSettings& s);
HistogramReport maxprob_histogram(const model::ModelPair& models, std::span<const data::Batch> batches, Scheme which,
                                  const AnalysisSettings& s);

struct CorrelationSamples {
  std::vector<double> estimate;  // L-hat_D(x', c)
  std::vector<double> actual;    // L_D(x', c)
  std::vector<std::uint8_t> is_original;
};
// Requires an HP_LOSS model; replacements drawn from its own p_s.
CorrelationSamples estimation_samples(const model::ModelPair& models, std::span<const data::Batch> batches,
                                      const AnalysisSettings& s);
CorrelationReport estimation_correlation(const model::ModelPair& models, std::span<const data::Batch> batches,
                                         const AnalysisSettings& s, bool use_spearman = false);

struct AccuracyReport {
  Scheme scheme = Scheme::kPg;
  double masked = 0.0;
  double all = 0.0;
  std::size_t n_masked = 0;
  std::size_t n_all = 0;
  double original_fraction_masked = 0.0;
};
AccuracyReport detection_accuracy(const model::ModelPair& models, std::span<const data::Batch> batches, Scheme scheme,
                                  const AnalysisSettings& s);
double detection_accuracy(const model::ModelPair& models, std::span<const data::Batch> batches, Scheme scheme,
                          Positions positions, const AnalysisSettings& s);

struct VarianceRow {
  std::size_t position = 0;  // flat index within its batch
  std::size_t batch = 0;
  TokenId original = 0;
  double z = 0.0;
  double var_pg = 0.0;           // sum p_g (L - Z)^2
  double var_pg_identity = 0.0;  // sum p_g L^2 - Z^2
  double var_ps = 0.0;           // weighted estimator under the model's p_s
  double var_oracle = 0.0;       // weighted estimator under p_g L / Z
  double mc_mean_ps = 0.0;
  double mc_var_ps = 0.0;
};
// Exact L_D for every candidate by substituting it and rerunning the discriminator.
// p_g here is the MLM distribution with special tokens removed, which is the
// distribution the lab actually samples from.
std::vector<VarianceRow> variance_report(const model::ModelPair& models, std::span<const data::Batch> batches,
                                         const AnalysisSettings& s, std::size_t n_mc,
                                         std::size_t max_positions = kDefaultVariancePositions);

// ---- writers

void write_histogram_csv(std::ostream& os, std::span<const HistogramReport> reports);
void write_histogram_text(std::ostream& os, std::span<const HistogramReport> reports);
void write_correlation_csv(std::ostream& os, const CorrelationReport& r);
void write_correlation_text(std::ostream& os, const CorrelationReport& r);
void write_accuracy_csv(std::ostream& os, std::span<const AccuracyReport> reports);
void write_accuracy_text(std::ostream& os, std::span<const AccuracyReport> reports);
void write_variance_csv(std::ostream& os, std::span<const VarianceRow> rows);
void write_variance_text(std::ostream& os, std::span<const VarianceRow> rows);

}  // namespace rtd::analysis
