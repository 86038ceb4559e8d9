#include "rtd/analysis/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <numeric>

#include "rtd/core/rng.hpp"
#include "rtd/core/tensor.hpp"
#include "rtd/sampling/sampling.hpp"

namespace rtd::analysis {

namespace {

// Analysis passes never share keys with training steps.
constexpr std::uint64_t kAnalysisSalt = 0xa11a5a17ULL << 20;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

double max_of(const sampling::VocabDistribution& d) { return *std::max_element(d.probs.begin(), d.probs.end()); }

std::vector<double> ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

std::string_view positions_name(Positions p) { return p == Positions::kMasked ? "masked" : "all"; }

AnalysisSettings settings_from(const train::TrainConfig& cfg, std::uint64_t seed) {
  AnalysisSettings s;
  s.mask_frac = cfg.data.mask_frac;
  s.ngram_max = cfg.data.ngram_max;
  s.seed = seed;
  return s;
}

std::vector<data::Batch> heldout_batches(std::span<const std::vector<TokenId>> sequences, std::size_t batch_size,
                                         std::size_t max_len, std::size_t max_batches) {
  RTD_REQUIRE(batch_size > 0, "heldout_batches: batch_size must be positive");
  std::vector<data::Batch> out;
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < sequences.size(); begin += batch_size) {
    if (max_batches && out.size() == max_batches) break;
    idx.clear();
    for (std::size_t i = begin; i < std::min(sequences.size(), begin + batch_size); ++i) idx.push_back(i);
    out.push_back(data::make_batch(sequences, idx, max_len));
  }
  return out;
}

train::PipelineResult analysis_pass(const model::ModelPair& models, const data::Batch& batch, Scheme scheme,
                                    const AnalysisSettings& s) {
  NoGradGuard ng;
  train::PipelineSettings ps;
  ps.mask_frac = s.mask_frac;
  ps.ngram_max = s.ngram_max;
  ps.scheme = scheme;
  ps.seed = s.seed;
  ps.salt = kAnalysisSalt;
  return train::run_pipeline(models, batch, ps, nullptr);
}

double HistogramReport::fraction(std::size_t bin) const {
  return samples ? static_cast<double>(counts.at(bin)) / static_cast<double>(samples) : 0.0;
}

std::size_t maxprob_bin(double p) {
  RTD_REQUIRE(p >= 0.0 && p <= 1.0 + 1e-12, "maxprob_bin: probability outside [0,1]");
  const auto b = static_cast<std::size_t>(std::floor(p * static_cast<double>(kHistogramBins)));
  return std::min(b, kHistogramBins - 1);
}

HistogramReport histogram_of(std::span<const double> maxima, std::string scheme) {
  HistogramReport h;
  h.scheme = std::move(scheme);
  for (double p : maxima) ++h.counts[maxprob_bin(p)];
  h.samples = maxima.size();
  return h;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  RTD_REQUIRE(x.size() == y.size(), "pearson: length mismatch");
  if (x.size() < 2) throw UndefinedCorrelation("correlation needs at least two pairs");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw UndefinedCorrelation("correlation undefined: a series has zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double spearman(std::span<const double> x, std::span<const double> y) {
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  return pearson(rx, ry);
}

CorrelationReport correlation_of(std::span<const double> estimate, std::span<const double> actual,
                                 std::span<const std::uint8_t> is_original, bool use_spearman) {
  RTD_REQUIRE(estimate.size() == actual.size() && estimate.size() == is_original.size(),
              "correlation_of: length mismatch");
  std::vector<double> eo, ao, er, ar;
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    (is_original[i] ? eo : er).push_back(estimate[i]);
    (is_original[i] ? ao : ar).push_back(actual[i]);
  }
  auto corr = [&](std::span<const double> a, std::span<const double> b) {
    return use_spearman ? spearman(a, b) : pearson(a, b);
  };
  CorrelationReport r;
  r.spearman = use_spearman;
  r.n_original = eo.size();
  r.n_replaced = er.size();
  r.n_all = estimate.size();
  r.r_all = corr(estimate, actual);
  r.r_original = corr(eo, ao);
  r.r_replaced = corr(er, ar);
  return r;
}

double accuracy_of(std::span<const double> d, std::span<const std::uint8_t> is_original,
                   std::span<const std::uint8_t> include) {
  RTD_REQUIRE(d.size() == is_original.size() && d.size() == include.size(), "accuracy_of: length mismatch");
  std::size_t n = 0, ok = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!include[i]) continue;
    ++n;
    if ((d[i] >= 0.5) == (is_original[i] != 0)) ++ok;
  }
  RTD_REQUIRE(n > 0, "accuracy_of: no positions selected");
  return static_cast<double>(ok) / static_cast<double>(n);
}

HistogramPair maxprob_histogram(const model::ModelPair& models, std::span<const data::Batch> batches,
                                const AnalysisSettings& s) {
  if (batches.empty()) throw DataError("heldout set is empty");
  std::vector<double> mg, ms;
  for (const auto& b : batches) {
    // Masks do not depend on the scheme, so one pass yields both distributions.
    const auto res = analysis_pass(models, b, Scheme::kPs, s);
    const auto pg_only = models.config().variant == model::Variant::kNone;
    for (const auto& p : res.proposals) {
      mg.push_back(max_of(sampling::exclude_specials(p.pg)));
      ms.push_back(pg_only ? mg.back() : max_of(p.draw));
    }
  }
  if (mg.empty()) throw DataError("heldout set has no masked positions");
  return {histogram_of(mg, "pg"), histogram_of(ms, "ps")};
}

HistogramReport maxprob_histogram(const model::ModelPair& models, std::span<const data::Batch> batches, Scheme which,
                                  const AnalysisSettings& s) {
  auto pair = maxprob_histogram(models, batches, s);
  return which == Scheme::kPg ? pair.pg : pair.ps;
}

CorrelationSamples estimation_samples(const model::ModelPair& models, std::span<const data::Batch> batches,
                                      const AnalysisSettings& s) {
  if (models.config().variant != model::Variant::kHpLoss)
    throw ConfigError("estimation correlation requires an HP_Loss model");
  if (batches.empty()) throw DataError("heldout set is empty");
  CorrelationSamples out;
  for (const auto& b : batches) {
    const auto res = analysis_pass(models, b, Scheme::kPs, s);
    for (const auto& d : res.replacement.decisions) {
      const double D = res.disc.probability[d.position];
      out.estimate.push_back(d.est_loss);
      out.actual.push_back(d.is_original ? -std::log(D) : -std::log(1.0 - D));
      out.is_original.push_back(d.is_original ? 1 : 0);
    }
  }
  return out;
}

CorrelationReport estimation_correlation(const model::ModelPair& models, std::span<const data::Batch> batches,
                                         const AnalysisSettings& s, bool use_spearman) {
  const auto smp = estimation_samples(models, batches, s);
  return correlation_of(smp.estimate, smp.actual, smp.is_original, use_spearman);
}

AccuracyReport detection_accuracy(const model::ModelPair& models, std::span<const data::Batch> batches, Scheme scheme,
                                  const AnalysisSettings& s) {
  if (batches.empty()) throw DataError("heldout set is empty");
  AccuracyReport r;
  r.scheme = scheme;
  std::size_t ok_m = 0, ok_a = 0, orig_m = 0;
  for (const auto& b : batches) {
    const auto res = analysis_pass(models, b, scheme, s);
    const auto& D = res.disc.probability;
    for (std::size_t i = 0; i < D.size(); ++i) {
      if (!res.disc.valid[i]) continue;
      const bool ok = (D[i] >= 0.5) == (res.is_original[i] != 0);
      ++r.n_all;
      ok_a += ok;
      if (res.is_masked[i]) {
        ++r.n_masked;
        ok_m += ok;
        orig_m += res.is_original[i];
      }
    }
  }
  auto frac = [](std::size_t a, std::size_t n) { return n ? static_cast<double>(a) / static_cast<double>(n) : 0.0; };
  r.masked = frac(ok_m, r.n_masked);
  r.all = frac(ok_a, r.n_all);
  r.original_fraction_masked = frac(orig_m, r.n_masked);
  return r;
}

double detection_accuracy(const model::ModelPair& models, std::span<const data::Batch> batches, Scheme scheme,
                          Positions positions, const AnalysisSettings& s) {
  const auto r = detection_accuracy(models, batches, scheme, s);
  return positions == Positions::kMasked ? r.masked : r.all;
}

std::vector<VarianceRow> variance_report(const model::ModelPair& models, std::span<const data::Batch> batches,
                                         const AnalysisSettings& s, std::size_t n_mc, std::size_t max_positions) {
  const std::size_t V = models.config().vocab_size;
  if (V > kVarianceVocabLimit)
    throw VocabTooLarge("variance analysis needs a vocabulary of at most " + std::to_string(kVarianceVocabLimit) +
                        " tokens (model has " + std::to_string(V) + ")");
  if (batches.empty()) throw DataError("heldout set is empty");
  NoGradGuard ng;
  std::vector<VarianceRow> rows;
  Rng mc(s.seed, Stream::kAnalysis, 0x7661);
  for (std::size_t bi = 0; bi < batches.size() && rows.size() < max_positions; ++bi) {
    const auto& b = batches[bi];
    const auto res = analysis_pass(models, b, Scheme::kPs, s);
    const std::size_t L = b.max_len;
    for (std::size_t i = 0; i < res.proposals.size() && rows.size() < max_positions; ++i) {
      const std::size_t pos = res.masked.mask_positions[i];
      const std::size_t r = pos / L, t = pos % L;
      const TokenId x = b.ids[pos];

      // V copies of the replaced row, candidate v substituted at t.
      data::Batch cand;
      cand.max_len = L;
      cand.ids.reserve(V * L);
      for (std::size_t v = 0; v < V; ++v) {
        cand.ids.insert(cand.ids.end(), res.replacement.replaced.begin() + static_cast<std::ptrdiff_t>(r * L),
                        res.replacement.replaced.begin() + static_cast<std::ptrdiff_t>((r + 1) * L));
        cand.ids[v * L + t] = static_cast<TokenId>(v);
        cand.valid.insert(cand.valid.end(), b.valid.begin() + static_cast<std::ptrdiff_t>(r * L),
                          b.valid.begin() + static_cast<std::ptrdiff_t>((r + 1) * L));
        cand.lengths.push_back(b.lengths[r]);
        cand.example_index.push_back(v);
      }
      const model::TokenLayout layout{V, L, cand.valid};
      const auto disc = models.discriminator_forward(cand.ids, layout, nullptr);
      std::vector<double> loss(V);
      for (std::size_t v = 0; v < V; ++v) {
        const double D = disc.probability[v * L + t];
        loss[v] = static_cast<TokenId>(v) == x ? -std::log(D) : -std::log(1.0 - D);
      }

      const auto pg = sampling::exclude_specials(res.proposals[i].pg);
      const auto& ps = res.proposals[i].draw;
      const auto oracle = sampling::optimal_ps_oracle(pg, loss);
      VarianceRow row;
      row.batch = bi;
      row.position = pos;
      row.original = x;
      row.z = sampling::expected_loss(pg, loss);
      row.var_pg = sampling::variance_under_pg(pg, loss);
      double second = 0.0;
      for (std::size_t v = 0; v < V; ++v) second += pg[v] * loss[v] * loss[v];
      row.var_pg_identity = second - row.z * row.z;
      row.var_ps = sampling::weighted_variance(pg, ps, loss);
      row.var_oracle = sampling::weighted_variance(pg, oracle, loss);
      if (n_mc >= 2) {
        const auto e = sampling::estimator_variance(pg, ps, loss, n_mc, mc);
        row.mc_mean_ps = e.mc_mean_ps;
        row.mc_var_ps = e.mc_var_ps;
      }
      rows.push_back(row);
    }
  }
  return rows;
}

void write_histogram_csv(std::ostream& os, std::span<const HistogramReport> reports) {
  os << "bin_lo,bin_hi,count,fraction,scheme\n";
  for (const auto& r : reports) {
    for (std::size_t b = 0; b < kHistogramBins; ++b) {
      os << fmt(static_cast<double>(b) / 10.0) << ',' << fmt(static_cast<double>(b + 1) / 10.0) << ',' << r.counts[b]
         << ',' << fmt(r.fraction(b)) << ',' << r.scheme << '\n';
    }
  }
}

void write_histogram_text(std::ostream& os, std::span<const HistogramReport> reports) {
  os << "max-probability histogram at masked positions\n";
  os << std::left << std::setw(12) << "bin";
  for (const auto& r : reports) os << std::setw(12) << r.scheme;
  os << '\n';
  for (std::size_t b = 0; b < kHistogramBins; ++b) {
    char label[32];
    std::snprintf(label, sizeof label, "[%.1f,%.1f%c", b / 10.0, (b + 1) / 10.0, b + 1 == kHistogramBins ? ']' : ')');
    os << std::setw(12) << label;
    for (const auto& r : reports) os << std::setw(12) << fmt(r.fraction(b));
    os << '\n';
  }
  os << std::setw(12) << "samples";
  for (const auto& r : reports) os << std::setw(12) << r.samples;
  os << '\n';
}

void write_correlation_csv(std::ostream& os, const CorrelationReport& r) {
  os << "group,coefficient,count,method\n";
  const char* m = r.spearman ? "spearman" : "pearson";
  os << "original," << fmt(r.r_original) << ',' << r.n_original << ',' << m << '\n';
  os << "replaced," << fmt(r.r_replaced) << ',' << r.n_replaced << ',' << m << '\n';
  os << "all," << fmt(r.r_all) << ',' << r.n_all << ',' << m << '\n';
}

void write_correlation_text(std::ostream& os, const CorrelationReport& r) {
  os << (r.spearman ? "spearman" : "pearson") << " correlation between estimated and actual discriminator loss\n";
  os << std::left << std::setw(10) << "group" << std::setw(14) << "r" << "count\n";
  os << std::setw(10) << "original" << std::setw(14) << fmt(r.r_original) << r.n_original << '\n';
  os << std::setw(10) << "replaced" << std::setw(14) << fmt(r.r_replaced) << r.n_replaced << '\n';
  os << std::setw(10) << "all" << std::setw(14) << fmt(r.r_all) << r.n_all << '\n';
}

void write_accuracy_csv(std::ostream& os, std::span<const AccuracyReport> reports) {
  os << "scheme,positions,accuracy,count\n";
  for (const auto& r : reports) {
    os << train::scheme_name(r.scheme) << ",masked," << fmt(r.masked) << ',' << r.n_masked << '\n';
    os << train::scheme_name(r.scheme) << ",all," << fmt(r.all) << ',' << r.n_all << '\n';
  }
}

void write_accuracy_text(std::ostream& os, std::span<const AccuracyReport> reports) {
  os << "replacement detection accuracy (D >= 0.5 means original)\n";
  os << std::left << std::setw(8) << "scheme" << std::setw(14) << "masked" << std::setw(14) << "all"
     << "original share at masked\n";
  for (const auto& r : reports) {
    os << std::setw(8) << train::scheme_name(r.scheme) << std::setw(14) << fmt(r.masked) << std::setw(14)
       << fmt(r.all) << fmt(r.original_fraction_masked) << '\n';
  }
}

void write_variance_csv(std::ostream& os, std::span<const VarianceRow> rows) {
  os << "batch,position,original,z,var_pg,var_pg_identity,var_ps,var_oracle,mc_mean_ps,mc_var_ps\n";
  for (const auto& r : rows) {
    os << r.batch << ',' << r.position << ',' << r.original << ',' << fmt(r.z) << ',' << fmt(r.var_pg) << ','
       << fmt(r.var_pg_identity) << ',' << fmt(r.var_ps) << ',' << fmt(r.var_oracle) << ',' << fmt(r.mc_mean_ps) << ','
       << fmt(r.mc_var_ps) << '\n';
  }
}

void write_variance_text(std::ostream& os, std::span<const VarianceRow> rows) {
  double sg = 0.0, ss = 0.0, so = 0.0, mo = 0.0;
  for (const auto& r : rows) {
    sg += r.var_pg;
    ss += r.var_ps;
    so += r.var_oracle;
    mo = std::max(mo, r.var_oracle);
  }
  const double n = rows.empty() ? 1.0 : static_cast<double>(rows.size());
  os << "positions analyzed: " << rows.size() << '\n';
  os << "mean Var under p_g:            " << fmt(sg / n) << '\n';
  os << "mean Var weighted, model p_s:  " << fmt(ss / n) << '\n';
  os << "mean Var weighted, oracle p_s: " << fmt(so / n) << "  (max " << fmt(mo) << ")\n";
}

}  // namespace rtd::analysis
