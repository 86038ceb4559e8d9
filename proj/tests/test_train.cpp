#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rtd/core/errors.hpp"
#include "rtd/core/schedule.hpp"
#include "rtd/losses/losses.hpp"
#include "rtd/train/trainer.hpp"
#include "test_util.hpp"

using namespace rtd;
using namespace rtd::train;
using rtd::model::Variant;

namespace {

std::string small_config(const std::string& variant, const std::string& extra = "", double dropout = 0.1) {
  return R"({"variant": ")" + variant + R"(",
    "model": {"preset": "tiny", "layers": 1, "hidden": 16, "ffn_hidden": 32, "heads": 2, "embed_dim": 16,
              "max_len": 32, "generator_ratio": 0.5, "dropout": )" +
         std::to_string(dropout) + R"(},
    "data": {"synthetic_documents": 120, "synthetic_heldout_documents": 16, "synthetic_micro": true,
             "max_len": 32, "batch_size": 4},
    "optim": {"total_steps": 120, "warmup": 10, "peak_lr": 2e-3},
    "checkpoint_every": 40, "eval_every": 60, "eval_batches": 2)" +
         extra + "}";
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Trainer make_trainer(const TrainConfig& cfg) {
  auto corp = load_corpora(cfg);
  return Trainer(cfg, corp.vocab, std::move(corp.train));
}

std::string metrics_text(Trainer& t, int steps) {
  std::ostringstream os;
  write_metrics_header(os);
  for (int i = 0; i < steps; ++i) write_metrics_row(os, t.train_step());
  return os.str();
}

std::vector<std::vector<double>> group_values(const model::ModelPair& m, ParamGroup g) {
  std::vector<std::vector<double>> out;
  for (const auto& p : m.params().all())
    if (p.group == g) out.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
  return out;
}

}  // namespace

TEST_SUITE("train") {
  TEST_CASE("fixed seed reproduces 100-step metric logs exactly") {
    for (const char* v : {"hp_loss", "hp_dist"}) {
      auto cfg = parse_config_text(small_config(v, R"(, "focal": {"gamma": 1})"));
      auto a = make_trainer(cfg);
      auto b = make_trainer(cfg);
      const auto ma = metrics_text(a, 100);
      const auto mb = metrics_text(b, 100);
      CHECK(ma == mb);
      CHECK(ma.find("nan") == std::string::npos);
      // a different seed gives a different log
      auto cfg2 = parse_config_text(small_config(v, R"(, "focal": {"gamma": 1}, "seed": 2)"));
      auto c = make_trainer(cfg2);
      auto d = make_trainer(cfg);
      CHECK(metrics_text(c, 5) != metrics_text(d, 5));
    }
  }

  TEST_CASE("learning rate starts at zero and metrics stay in range") {
    auto cfg = parse_config_text(small_config("hp_loss"));
    auto t = make_trainer(cfg);
    auto m0 = t.train_step();
    CHECK(m0.step == 0);
    CHECK(m0.lr == 0.0);
    auto m1 = t.train_step();
    CHECK(m1.lr == doctest::Approx(lr_at(1, 2e-3, 10, 120)));
    for (double a : {m1.mlm_accuracy, m1.disc_accuracy, m1.disc_accuracy_masked, m1.original_fraction}) {
      CHECK(a >= 0.0);
      CHECK(a <= 1.0);
    }
  }

  TEST_CASE("tied embedding views survive optimization") {
    auto cfg = parse_config_text(small_config("hp_dist"));
    auto t = make_trainer(cfg);
    const std::vector<double> before(t.models().token_embedding().values().begin(),
                                     t.models().token_embedding().values().end());
    for (int i = 0; i < 15; ++i) t.train_step();
    auto& m = t.models();
    CHECK(m.mlm_output_projection().same_storage(m.token_embedding()));
    CHECK(m.sampling_projection().same_storage(m.token_embedding()));
    CHECK(std::vector<double>(m.token_embedding().values().begin(), m.token_embedding().values().end()) != before);
    std::size_t tables = 0;
    for (const auto& p : m.params().all())
      if (p.tensor.same_storage(m.token_embedding())) ++tables;
    CHECK(tables == 1);
  }

  TEST_CASE("disabled loss terms leave their parameters untouched") {
    SUBCASE("lambda1 = 0 freezes the sampling head") {
      for (const char* v : {"hp_loss", "hp_dist"}) {
        auto cfg = parse_config_text(small_config(v, R"(, "lambda1": 0)"));
        auto t = make_trainer(cfg);
        const auto before = group_values(t.models(), ParamGroup::kSamplingHead);
        CHECK_FALSE(before.empty());
        for (int i = 0; i < 12; ++i) t.train_step();
        for (const auto& p : t.models().params().all())
          if (p.group == ParamGroup::kSamplingHead)
            for (double g : p.tensor.grad()) CHECK(g == 0.0);
        CHECK(group_values(t.models(), ParamGroup::kSamplingHead) == before);
        CHECK(group_values(t.models(), ParamGroup::kGenerator) != group_values(make_trainer(cfg).models(),
                                                                                ParamGroup::kGenerator));
      }
    }
    SUBCASE("lambda2 = 0 freezes the discriminator") {
      auto cfg = parse_config_text(small_config("hp_loss", R"(, "lambda2": 0)"));
      auto t = make_trainer(cfg);
      const auto before = group_values(t.models(), ParamGroup::kDiscriminator);
      for (int i = 0; i < 12; ++i) t.train_step();
      CHECK(group_values(t.models(), ParamGroup::kDiscriminator) == before);
    }
  }

  TEST_CASE("baseline objective is MLM cross-entropy plus 50 times the detection loss") {
    auto cfg = parse_config_text(small_config("none", R"(, "lambda1": 0)", 0.0));
    auto t = make_trainer(cfg);
    for (int i = 0; i < 5; ++i) {
      const auto batch = t.stream().at_step(t.step());
      PipelineSettings ps;
      ps.mask_frac = cfg.data.mask_frac;
      ps.ngram_max = cfg.data.ngram_max;
      ps.scheme = Scheme::kPg;
      ps.seed = cfg.seed;
      ps.salt = static_cast<std::uint64_t>(t.step());
      double ce = 0.0, ld = 0.0;
      {
        NoGradGuard ng;
        auto res = run_pipeline(t.models(), batch, ps, nullptr);
        CHECK_FALSE(res.gen.has_sampling());
        for (std::size_t r = 0; r < res.targets.size(); ++r) {
          std::vector<double> row(res.gen.mlm_logits.values().begin() + r * res.gen.mlm_logits.dim(1),
                                  res.gen.mlm_logits.values().begin() + (r + 1) * res.gen.mlm_logits.dim(1));
          ce += losses::mlm_cross_entropy(sampling::mlm_distribution(row)[res.targets[r]]);
        }
        ce /= static_cast<double>(res.targets.size());
        ld = losses::discriminator_loss(res.disc.probability, res.is_original, res.disc.valid);
      }
      const auto m = t.train_step();
      CHECK(m.scheme == Scheme::kPg);
      CHECK(m.losses.sampling == 0.0);
      CHECK(m.losses.lambda1 == 0.0);
      CHECK(m.losses.generator == doctest::Approx(ce).epsilon(1e-10));
      CHECK(m.losses.discriminator == doctest::Approx(ld).epsilon(1e-8));
      CHECK(m.losses.total == doctest::Approx(m.losses.generator + 50.0 * m.losses.discriminator).epsilon(1e-14));
    }
  }

  TEST_CASE("checkpoint round trip, tamper detection and hash refusal") {
    const auto dir = test::temp_dir("ckpt");
    auto cfg = parse_config_text(small_config("hp_loss"));
    auto t = make_trainer(cfg);
    for (int i = 0; i < 3; ++i) t.train_step();
    const std::string a = dir + "/a.ckpt", b = dir + "/b.ckpt";
    save_checkpoint(a, cfg, t.vocab(), t.models(), t.optimizer().state());
    auto ck = load_checkpoint(a, t.hash());
    CHECK(ck.step == 3);
    CHECK(ck.hash == t.hash());
    auto models = models_from_checkpoint(ck);
    auto adam = load_adam_state(*models, ck.container);
    save_checkpoint(b, ck.config, ck.vocab, *models, adam);
    CHECK(slurp(a) == slurp(b));

    // restored trainer continues exactly like the original
    auto u = make_trainer(cfg);
    u.restore(ck.container);
    CHECK(metrics_text(u, 4) == metrics_text(t, 4));

    std::string bytes = slurp(a);
    bytes[bytes.size() / 2] ^= 0x20;
    const std::string bad = dir + "/bad.ckpt";
    std::ofstream(bad, std::ios::binary) << bytes;
    CHECK_THROWS_AS(load_checkpoint(bad), CheckpointError);
    CHECK_THROWS_AS(load_checkpoint(dir + "/missing.ckpt"), CheckpointError);

    CHECK_THROWS_AS(load_checkpoint(a, "00000000"), ConfigHashMismatch);
    try {
      load_checkpoint(a, "00000000");
    } catch (const ConfigHashMismatch& e) {
      const std::string msg = e.what();
      CHECK(msg.find("00000000") != std::string::npos);
      CHECK(msg.find(t.hash()) != std::string::npos);
    }
    auto other = parse_config_text(small_config("hp_loss", R"(, "seed": 9)"));
    auto w = make_trainer(other);
    CHECK_THROWS_AS(w.restore(ck.container), ConfigHashMismatch);
  }

  TEST_CASE("resumed pretraining matches the uninterrupted run exactly") {
    const auto full = test::temp_dir("pretrain_full");
    const auto split = test::temp_dir("pretrain_split");
    auto cfg = parse_config_text(small_config("hp_dist", R"(, "focal": {"mode": "piecewise"})"));
    auto r1 = pretrain(cfg, {full, false, -1, nullptr, 0});
    CHECK(r1.end_step == 120);
    PretrainOptions first{split, false, 50, nullptr, 0};
    auto r2a = pretrain(cfg, first);
    CHECK(r2a.end_step == 50);
    PretrainOptions second{split, true, -1, nullptr, 0};
    auto r2b = pretrain(cfg, second);
    CHECK(r2b.start_step == 50);
    CHECK(r2b.end_step == 120);
    CHECK(slurp(r1.metrics_csv) == slurp(r2b.metrics_csv));
    CHECK(slurp(r1.eval_csv) == slurp(r2b.eval_csv));
    CHECK(slurp(r1.final_checkpoint) == slurp(r2b.final_checkpoint));
    CHECK(slurp(r1.manifest).size() > 0);
    for (const char* f : {"config.json", "vocab.txt", "metrics.csv", "eval.csv", "manifest.json"})
      CHECK(std::filesystem::exists(std::filesystem::path(full) / f));
    CHECK(std::filesystem::exists(std::filesystem::path(full) / "checkpoints" / checkpoint_name(40)));
    CHECK(latest_checkpoint(full) == r1.final_checkpoint);
    // resuming a finished run is a no-op
    auto again = pretrain(cfg, second);
    CHECK(again.start_step == 120);
    CHECK(slurp(again.metrics_csv) == slurp(r1.metrics_csv));
    // a different config cannot resume this run
    auto altered = parse_config_text(small_config("hp_dist", R"(, "lambda1": 2)"));
    CHECK_THROWS_AS(pretrain(altered, second), ConfigHashMismatch);
  }
}
