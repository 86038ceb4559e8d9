#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rtd/analysis/analysis.hpp"
#include "rtd/core/errors.hpp"
#include "rtd/train/trainer.hpp"

using namespace rtd;
using namespace rtd::analysis;

namespace {

train::TrainConfig micro_config(const std::string& variant) {
  return train::parse_config_text(R"({"variant": ")" + variant + R"(",
    "model": {"preset": "tiny", "layers": 1, "hidden": 16, "ffn_hidden": 32, "heads": 2, "embed_dim": 16,
              "max_len": 32, "generator_ratio": 0.5},
    "data": {"synthetic_documents": 60, "synthetic_heldout_documents": 24, "synthetic_micro": true,
             "max_len": 32, "batch_size": 4},
    "optim": {"total_steps": 10, "warmup": 2}})");
}

struct Fixture {
  train::TrainConfig cfg;
  train::Corpora corpora;
  std::unique_ptr<model::ModelPair> models;
  std::vector<data::Batch> batches;
  explicit Fixture(const std::string& variant) : cfg(micro_config(variant)), corpora(train::load_corpora(cfg)) {
    models = std::make_unique<model::ModelPair>(train::build_model_config(cfg, corpora.vocab.size()), 5);
    batches = heldout_batches(corpora.heldout, 4, 32);
  }
};

}  // namespace

TEST_SUITE("analysis") {
  TEST_CASE("histogram binning") {
    CHECK(maxprob_bin(0.0) == 0);
    CHECK(maxprob_bin(0.05) == 0);
    CHECK(maxprob_bin(1.0 / 11.0) == 0);
    CHECK(maxprob_bin(0.15) == 1);
    CHECK(maxprob_bin(0.95) == 9);
    CHECK(maxprob_bin(1.0) == 9);
    std::vector<double> m{0.95, 0.99, 0.5, 0.02, 1.0};
    auto h = histogram_of(m, "ps");
    CHECK(h.samples == 5);
    CHECK(h.counts[9] == 3);
    CHECK(h.top_bin_fraction() == doctest::Approx(0.6));
    double s = 0.0;
    for (std::size_t b = 0; b < kHistogramBins; ++b) s += h.fraction(b);
    CHECK(std::abs(s - 1.0) < 1e-9);
    std::ostringstream os;
    std::vector<HistogramReport> reps{h};
    write_histogram_csv(os, reps);
    CHECK(os.str().rfind("bin_lo,bin_hi,count,fraction,scheme\n", 0) == 0);
  }

  TEST_CASE("correlation statistics") {
    std::vector<double> x{1, 2, 3, 4, 5, 6}, y, z, w;
    for (double v : x) {
      y.push_back(3.0 * v + 1.0);
      z.push_back(-2.0 * v + 4.0);
      w.push_back(v * v * v);
    }
    CHECK(pearson(x, y) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(pearson(x, z) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(pearson(x, w) < 1.0);
    CHECK(spearman(x, w) == doctest::Approx(1.0).epsilon(1e-12));
    std::vector<double> noisy{1.0, 2.5, 2.0, 4.2, 4.0, 7.0}, scaled;
    for (double v : noisy) scaled.push_back(-0.3 * v + 9.0);
    CHECK(std::abs(pearson(x, scaled)) == doctest::Approx(std::abs(pearson(x, noisy))).epsilon(1e-12));
    std::vector<double> flat(6, 2.0);
    CHECK_THROWS_AS(pearson(x, flat), UndefinedCorrelation);
    // ties get average ranks
    std::vector<double> a{1, 2, 2, 3}, b{10, 20, 20, 30};
    CHECK(spearman(a, b) == doctest::Approx(1.0));

    std::vector<std::uint8_t> orig{1, 1, 1, 0, 0, 0};
    auto rep = correlation_of(x, y, orig);
    CHECK(rep.n_original == 3);
    CHECK(rep.n_replaced == 3);
    CHECK(rep.n_all == 6);
    CHECK(rep.r_all == doctest::Approx(1.0));
    std::vector<std::uint8_t> lonely{1, 0, 0, 0, 0, 0};
    CHECK_THROWS_AS(correlation_of(x, y, lonely), UndefinedCorrelation);
  }

  TEST_CASE("accuracy with an undecided discriminator equals the original fraction") {
    std::vector<double> d(8, 0.5);
    std::vector<std::uint8_t> orig{1, 1, 0, 1, 0, 1, 1, 1}, inc{1, 1, 1, 1, 1, 1, 0, 0};
    CHECK(accuracy_of(d, orig, inc) == doctest::Approx(4.0 / 6.0));
    std::vector<double> sharp{0.9, 0.8, 0.1, 0.7, 0.2, 0.6, 0.0, 0.0};
    CHECK(accuracy_of(sharp, orig, inc) == 1.0);

    Fixture f("hp_loss");
    for (auto& p : f.models->params().all())
      if (p.name.rfind("disc.head", 0) == 0)
        for (auto& v : p.tensor.mutable_values()) v = 0.0;
    const auto s = settings_from(f.cfg, 7);
    for (auto sc : {Scheme::kPg, Scheme::kPs}) {
      auto r = detection_accuracy(*f.models, f.batches, sc, s);
      CHECK(r.n_masked > 0);
      CHECK(r.masked == doctest::Approx(r.original_fraction_masked).epsilon(1e-12));
      CHECK(r.all >= r.masked);
    }
  }

  TEST_CASE("reports do not depend on example order") {
    Fixture f("hp_loss");
    const auto s = settings_from(f.cfg, 7);
    auto base = maxprob_histogram(*f.models, f.batches, s);
    auto acc = detection_accuracy(*f.models, f.batches, Scheme::kPs, s);
    auto perm = f.corpora.heldout;
    std::reverse(perm.begin(), perm.end());
    std::rotate(perm.begin(), perm.begin() + 5, perm.end());
    auto pb = heldout_batches(perm, 3, 32);
    auto other = maxprob_histogram(*f.models, pb, s);
    CHECK(other.pg.counts == base.pg.counts);
    CHECK(other.ps.counts == base.ps.counts);
    auto acc2 = detection_accuracy(*f.models, pb, Scheme::kPs, s);
    CHECK(acc2.n_masked == acc.n_masked);
    CHECK(acc2.masked == doctest::Approx(acc.masked).epsilon(1e-12));
    CHECK(base.pg.samples == base.ps.samples);
  }

  TEST_CASE("estimation correlation needs the loss-predicting head") {
    Fixture d("hp_dist");
    const auto s = settings_from(d.cfg, 7);
    CHECK_THROWS_AS(estimation_samples(*d.models, d.batches, s), ConfigError);
    Fixture f("hp_loss");
    auto smp = estimation_samples(*f.models, f.batches, settings_from(f.cfg, 7));
    CHECK(smp.estimate.size() == smp.actual.size());
    CHECK(smp.estimate.size() > 10);
    for (double v : smp.estimate) CHECK(v > 0.0);
  }

  TEST_CASE("variance report on a micro vocabulary") {
    for (const char* v : {"hp_loss", "hp_dist", "none"}) {
      Fixture f(v);
      REQUIRE(f.corpora.vocab.size() <= kVarianceVocabLimit);
      auto rows = variance_report(*f.models, f.batches, settings_from(f.cfg, 7), 20000, 12);
      CHECK(rows.size() == 12);
      for (const auto& r : rows) {
        CHECK(std::isfinite(r.var_ps));
        CHECK(r.var_oracle < 1e-10);
        CHECK(r.var_pg == doctest::Approx(r.var_pg_identity).epsilon(1e-9));
        CHECK(std::abs(r.mc_mean_ps - r.z) < 4.0 * std::sqrt(r.var_ps / 20000.0) + 1e-12);
        if (std::string(v) == "none") CHECK(r.var_ps == doctest::Approx(r.var_pg).epsilon(1e-9));
      }
    }
    auto big = train::parse_config_text(R"({"model": {"preset": "tiny", "layers": 1, "hidden": 16, "ffn_hidden": 32,
        "heads": 2, "embed_dim": 16, "max_len": 32}, "data": {"synthetic_documents": 60, "max_len": 32}})");
    auto corp = train::load_corpora(big);
    REQUIRE(corp.vocab.size() > kVarianceVocabLimit);
    model::ModelPair m(train::build_model_config(big, corp.vocab.size()), 1);
    auto b = heldout_batches(corp.heldout, 4, 32, 1);
    CHECK_THROWS_AS(variance_report(m, b, settings_from(big, 7), 10), VocabTooLarge);
  }
}
