#include "rtd/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "rtd/analysis/analysis.hpp"
#include "rtd/core/errors.hpp"
#include "rtd/core/ops.hpp"
#include "rtd/core/schedule.hpp"
#include "rtd/data/synthetic.hpp"

namespace fs = std::filesystem;

namespace rtd::train {

namespace {

constexpr const char* kFormat = "rtdlab-checkpoint";

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> synthetic_docs(const TrainConfig& cfg, bool heldout) {
  data::SyntheticCorpusConfig sc;
  sc.documents = heldout ? cfg.data.synthetic_heldout_documents : cfg.data.synthetic_documents;
  sc.micro = cfg.data.synthetic_micro;
  // heldout text comes from a different seed so it never repeats training documents verbatim
  return data::generate_corpus(sc, heldout ? mix64(cfg.data.synthetic_seed ^ 0x4845u) : cfg.data.synthetic_seed);
}

struct Docs {
  std::vector<std::string> train;
  std::vector<std::string> heldout;
};

Docs read_docs(const TrainConfig& cfg) {
  Docs d;
  if (cfg.data.corpus.empty()) {
    d.train = synthetic_docs(cfg, false);
    if (cfg.data.heldout.empty() && cfg.data.synthetic_heldout_documents > 0) d.heldout = synthetic_docs(cfg, true);
  } else {
    d.train = data::read_corpus(cfg.resolve(cfg.data.corpus));
  }
  if (!cfg.data.heldout.empty()) d.heldout = data::read_corpus(cfg.resolve(cfg.data.heldout));
  return d;
}

Corpora prepare(const TrainConfig& cfg, const Docs& docs, data::Vocab vocab) {
  Corpora c;
  auto tr = data::prepare_sequences(docs.train, vocab, cfg.data.max_len, cfg.data.mask_frac);
  if (tr.sequences.empty()) throw DataError("training corpus has no sequences long enough to mask");
  c.train = std::move(tr.sequences);
  c.skipped_short = tr.skipped_short;
  if (!docs.heldout.empty()) {
    c.heldout = data::prepare_sequences(docs.heldout, vocab, cfg.data.max_len, cfg.data.mask_frac).sequences;
  }
  c.vocab = std::move(vocab);
  return c;
}

double accuracy(std::span<const double> d, std::span<const std::uint8_t> orig, std::span<const std::uint8_t> keep) {
  std::size_t n = 0, ok = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!keep[i]) continue;
    ++n;
    ok += ((d[i] >= 0.5) == (orig[i] != 0)) ? 1 : 0;
  }
  return n ? static_cast<double>(ok) / static_cast<double>(n) : 0.0;
}

}  // namespace

void write_metrics_header(std::ostream& os) {
  os << "step,L_G_fc,L_S,L_D,total,mlm_accuracy,disc_accuracy,disc_accuracy_masked,original_fraction,lr,scheme,"
        "clamp_incidents\n";
}

void write_metrics_row(std::ostream& os, const StepMetrics& m) {
  os << m.step << ',' << fmt(m.losses.generator) << ',' << fmt(m.losses.sampling) << ',' << fmt(m.losses.discriminator)
     << ',' << fmt(m.losses.total) << ',' << fmt(m.mlm_accuracy) << ',' << fmt(m.disc_accuracy) << ','
     << fmt(m.disc_accuracy_masked) << ',' << fmt(m.original_fraction) << ',' << fmt(m.lr) << ','
     << scheme_name(m.scheme) << ',' << m.clamp_incidents << '\n';
}

Corpora load_corpora(const TrainConfig& cfg) {
  Docs docs = read_docs(cfg);
  data::Vocab vocab = cfg.data.vocab.empty()
                          ? data::Vocab::build(docs.train, cfg.data.vocab_size, cfg.data.min_freq)
                          : data::Vocab::load(cfg.resolve(cfg.data.vocab));
  return prepare(cfg, docs, std::move(vocab));
}

Corpora load_corpora(const TrainConfig& cfg, const data::Vocab& vocab) { return prepare(cfg, read_docs(cfg), vocab); }

Trainer::Trainer(TrainConfig cfg, data::Vocab vocab, std::vector<std::vector<TokenId>> train_sequences)
    : cfg_(std::move(cfg)),
      hash_(config_hash(cfg_)),
      vocab_(std::move(vocab)),
      models_(std::make_unique<model::ModelPair>(build_model_config(cfg_, vocab_.size()), cfg_.seed)),
      adam_(cfg_.optim.adam),
      stream_(std::move(train_sequences), cfg_.data.batch_size, cfg_.data.max_len, cfg_.seed) {}

StepMetrics Trainer::train_step() { return train_step(stream_.at_step(step())); }

StepMetrics Trainer::train_step(const data::Batch& batch) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::int64_t s = step();
  RTD_REQUIRE(s < cfg_.optim.total_steps, "train_step: schedule already finished");
  const auto variant = cfg_.variant;

  StepMetrics m;
  m.step = s;
  m.lr = lr_at(s, cfg_.optim.peak_lr, cfg_.optim.warmup, cfg_.optim.total_steps);
  m.scheme = (variant != model::Variant::kNone && s >= cfg_.sampling_delay) ? Scheme::kPs : Scheme::kPg;

  PipelineSettings ps;
  ps.mask_frac = cfg_.data.mask_frac;
  ps.ngram_max = cfg_.data.ngram_max;
  ps.scheme = m.scheme;
  ps.seed = cfg_.seed;
  ps.salt = static_cast<std::uint64_t>(s);
  Rng dropout(cfg_.seed, Stream::kDropout, static_cast<std::uint64_t>(s));

  models_->params().zero_grad();
  PipelineResult res = run_pipeline(*models_, batch, ps, cfg_.model.dropout > 0.0 ? &dropout : nullptr);
  const std::size_t M = res.targets.size();

  Tensor lg = losses::focal_mlm_loss(res.gen.mlm_logits, res.targets, cfg_.focal);
  Tensor ld = losses::discriminator_loss_from_logits(res.disc.logits, res.is_original, res.disc.valid);
  Tensor ls;
  if (variant == model::Variant::kHpLoss) {
    std::vector<double> target(M);
    for (std::size_t i = 0; i < M; ++i) target[i] = res.disc.probability[res.masked.mask_positions[i]];
    ls = losses::hp_loss_sampling_loss(res.gen.sampling_logits, res.sampled, target);
  } else if (variant == model::Variant::kHpDist) {
    std::vector<double> pg(M), q(M), actual(M);
    for (std::size_t i = 0; i < M; ++i) {
      const auto& d = res.replacement.decisions[i];
      const double D = res.disc.probability[d.position];
      pg[i] = d.p_g;
      q[i] = d.p_s;
      actual[i] = d.is_original ? -std::log(D) : -std::log(1.0 - D);
    }
    auto hd = losses::hp_dist_sampling_loss(res.gen.sampling_logits, res.sampled, pg, q, actual);
    ls = hd.loss;
    m.clamp_incidents = hd.clamp_incidents;
  }
  auto obj = losses::combined_objective(lg, ls, ld, cfg_.effective_lambda1(), cfg_.lambda2, variant);
  m.losses = obj.bundle;
  for (double v : {m.losses.generator, m.losses.sampling, m.losses.discriminator, m.losses.total}) {
    if (!std::isfinite(v)) throw NumericFault("train_step", "non-finite loss at step " + std::to_string(s));
  }
  backward(obj.total);
  adam_.step(models_->params(), m.lr);

  // metrics
  const std::size_t V = models_->config().vocab_size;
  const auto logits = res.gen.mlm_logits.values();
  std::size_t hits = 0, same = 0;
  for (std::size_t i = 0; i < M; ++i) {
    const auto row = logits.subspan(i * V, V);
    const auto arg = static_cast<TokenId>(std::max_element(row.begin(), row.end()) - row.begin());
    hits += arg == res.targets[i] ? 1 : 0;
    same += res.replacement.decisions[i].is_original ? 1 : 0;
  }
  m.mlm_accuracy = M ? static_cast<double>(hits) / static_cast<double>(M) : 0.0;
  m.original_fraction = M ? static_cast<double>(same) / static_cast<double>(M) : 0.0;
  m.disc_accuracy = accuracy(res.disc.probability, res.is_original, res.disc.valid);
  m.disc_accuracy_masked = accuracy(res.disc.probability, res.is_original, res.is_masked);
  m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return m;
}

Container Trainer::to_container() const { return make_checkpoint(cfg_, vocab_, *models_, adam_.state()); }

void Trainer::restore(const Container& c) {
  const std::string& found = c.meta_at("config_hash");
  if (found != hash_) throw ConfigHashMismatch(hash_, found);
  load_parameters(*models_, c);
  adam_.state() = load_adam_state(*models_, c);
}

Container make_checkpoint(const TrainConfig& cfg, const data::Vocab& vocab, const model::ModelPair& models,
                          const AdamState& adam) {
  Container c;
  c.meta["format"] = kFormat;
  c.meta["config"] = canonical_config_text(cfg);
  c.meta["config_hash"] = config_hash(cfg);
  c.meta["vocab"] = vocab.serialize();
  c.meta["step"] = std::to_string(adam.step);
  const auto& params = models.params().all();
  for (const auto& p : params) {
    const auto v = p.tensor.values();
    c.arrays.push_back({"param/" + p.name, p.tensor.shape(), std::vector<double>(v.begin(), v.end())});
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::size_t n = params[i].tensor.size();
    std::vector<double> m = adam.m.empty() ? std::vector<double>(n, 0.0) : adam.m[i];
    std::vector<double> v = adam.v.empty() ? std::vector<double>(n, 0.0) : adam.v[i];
    c.arrays.push_back({"adam.m/" + params[i].name, params[i].tensor.shape(), std::move(m)});
    c.arrays.push_back({"adam.v/" + params[i].name, params[i].tensor.shape(), std::move(v)});
  }
  return c;
}

void save_checkpoint(const std::string& path, const TrainConfig& cfg, const data::Vocab& vocab,
                     const model::ModelPair& models, const AdamState& adam) {
  write_container(path, make_checkpoint(cfg, vocab, models, adam));
}

LoadedCheckpoint load_checkpoint(const std::string& path, const std::string& expected_hash) {
  LoadedCheckpoint ck;
  ck.container = read_container(path);
  const auto& meta = ck.container.meta;
  auto need = [&](const char* k) -> const std::string& {
    auto it = meta.find(k);
    if (it == meta.end()) throw CheckpointError(path + ": missing metadata '" + k + "'");
    return it->second;
  };
  if (need("format") != kFormat) throw CheckpointError(path + ": not a training checkpoint");
  ck.hash = need("config_hash");
  if (!expected_hash.empty() && expected_hash != ck.hash) throw ConfigHashMismatch(expected_hash, ck.hash);
  try {
    ck.config = parse_config_text(need("config"));
  } catch (const ConfigError& e) {
    throw CheckpointError(path + ": embedded config is invalid: " + e.what());
  }
  if (config_hash(ck.config) != ck.hash) throw CheckpointError(path + ": embedded config does not match its hash");
  ck.vocab = data::Vocab::parse(need("vocab"));
  try {
    ck.step = std::stoll(need("step"));
  } catch (const std::exception&) {
    throw CheckpointError(path + ": bad step field");
  }
  return ck;
}

void load_parameters(model::ModelPair& models, const Container& c) {
  for (auto& p : models.params().all()) {
    const NamedArray* a = c.find("param/" + p.name);
    if (!a) throw CheckpointError("checkpoint lacks parameter " + p.name);
    if (a->shape != p.tensor.shape()) throw CheckpointError("checkpoint shape mismatch for " + p.name);
    auto dst = p.tensor.mutable_values();
    std::copy(a->data.begin(), a->data.end(), dst.begin());
  }
}

AdamState load_adam_state(const model::ModelPair& models, const Container& c) {
  AdamState st;
  st.step = std::stoll(c.meta_at("step"));
  for (const auto& p : models.params().all()) {
    const NamedArray* m = c.find("adam.m/" + p.name);
    const NamedArray* v = c.find("adam.v/" + p.name);
    if (!m || !v) throw CheckpointError("checkpoint lacks optimizer state for " + p.name);
    if (m->data.size() != p.tensor.size() || v->data.size() != p.tensor.size())
      throw CheckpointError("optimizer state shape mismatch for " + p.name);
    st.m.push_back(m->data);
    st.v.push_back(v->data);
  }
  return st;
}

std::unique_ptr<model::ModelPair> models_from_checkpoint(const LoadedCheckpoint& ck) {
  auto models = std::make_unique<model::ModelPair>(build_model_config(ck.config, ck.vocab.size()), ck.config.seed);
  load_parameters(*models, ck.container);
  return models;
}

std::string checkpoint_name(std::int64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "step_%08lld.ckpt", static_cast<long long>(step));
  return buf;
}

std::string latest_checkpoint(const std::string& run_dir) {
  const fs::path dir = fs::path(run_dir) / "checkpoints";
  if (!fs::is_directory(dir)) return "";
  std::string best;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name.rfind("step_", 0) == 0 && e.path().extension() == ".ckpt" && name > fs::path(best).filename().string())
      best = e.path().string();
  }
  return best;
}

std::string default_run_dir(const std::string& root, const TrainConfig& cfg) {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char ts[32];
  std::strftime(ts, sizeof ts, "%Y%m%dT%H%M%SZ", &tm);
  return (fs::path(root) / (config_hash(cfg) + "-" + ts)).string();
}

namespace {

// Keeps the header plus rows whose leading step satisfies `keep`.
void truncate_csv(const std::string& path, const std::function<bool(long long)>& keep, const std::string& header) {
  std::vector<std::string> lines;
  if (std::ifstream in(path); in) {
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
      if (first) {
        first = false;
        continue;
      }
      if (line.empty()) continue;
      long long s = 0;
      try {
        s = std::stoll(line.substr(0, line.find(',')));
      } catch (const std::exception&) {
        continue;
      }
      if (keep(s)) lines.push_back(line);
    }
  }
  std::ofstream out(path, std::ios::trunc);
  out << header;
  for (const auto& l : lines) out << l << '\n';
}

void write_eval_rows(std::ostream& os, std::int64_t step, const model::ModelPair& models,
                     std::span<const data::Batch> batches, const TrainConfig& cfg) {
  const auto s = analysis::settings_from(cfg, cfg.eval_seed);
  std::vector<Scheme> schemes{Scheme::kPg};
  if (cfg.variant != model::Variant::kNone) schemes.push_back(Scheme::kPs);
  for (Scheme sc : schemes) {
    const auto r = analysis::detection_accuracy(models, batches, sc, s);
    os << step << ',' << scheme_name(sc) << ",masked," << fmt(r.masked) << ',' << r.n_masked << '\n';
    os << step << ',' << scheme_name(sc) << ",all," << fmt(r.all) << ',' << r.n_all << '\n';
  }
}

}  // namespace

PretrainResult pretrain(const TrainConfig& cfg, const PretrainOptions& opts) {
  RTD_REQUIRE(!opts.run_dir.empty(), "pretrain: run_dir is required");
  PretrainResult out;
  out.run_dir = opts.run_dir;
  out.hash = config_hash(cfg);
  const fs::path dir(opts.run_dir);
  fs::create_directories(dir / "checkpoints");

  std::optional<LoadedCheckpoint> ck;
  if (opts.resume) {
    const std::string last = latest_checkpoint(opts.run_dir);
    if (!last.empty()) ck = load_checkpoint(last, out.hash);
  }
  Corpora corpora = ck ? load_corpora(cfg, ck->vocab) : load_corpora(cfg);
  const auto heldout =
      analysis::heldout_batches(corpora.heldout, cfg.data.batch_size, cfg.data.max_len, cfg.eval_batches);

  Trainer trainer(cfg, corpora.vocab, std::move(corpora.train));
  if (ck) trainer.restore(ck->container);
  out.start_step = trainer.step();

  {
    std::ofstream c(dir / "config.json");
    c << config_to_json(cfg).dump(2) << '\n';
  }
  corpora.vocab.save((dir / "vocab.txt").string());

  out.metrics_csv = (dir / "metrics.csv").string();
  out.eval_csv = (dir / "eval.csv").string();
  const std::string eval_header = "step,scheme,positions,accuracy,count\n";
  std::stringstream mh;
  write_metrics_header(mh);
  const long long start = out.start_step;
  truncate_csv(out.metrics_csv, [&](long long s) { return s < start; }, mh.str());
  truncate_csv(out.eval_csv, [&](long long s) { return s <= start; }, eval_header);
  std::ofstream metrics(out.metrics_csv, std::ios::app);
  std::ofstream eval(out.eval_csv, std::ios::app);

  const std::int64_t total = cfg.optim.total_steps;
  const std::int64_t stop = opts.stop_after >= 0 ? std::min(opts.stop_after, total) : total;
  const auto t0 = std::chrono::steady_clock::now();
  while (trainer.step() < stop) {
    StepMetrics m;
    try {
      m = trainer.train_step();
    } catch (const NumericFault&) {
      // parameters are still the pre-step values; keep them for post-mortem
      metrics.flush();
      const auto dump = dir / "checkpoints" / ("fault_" + std::to_string(trainer.step()) + ".ckpt");
      write_container(dump.string(), trainer.to_container());
      throw;
    }
    write_metrics_row(metrics, m);
    const std::int64_t done = trainer.step();
    if (opts.log && opts.log_every > 0 && (done % opts.log_every == 0 || done == stop)) {
      const double el = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      *opts.log << "step " << done << "/" << total << "  total " << std::setprecision(5) << m.losses.total << "  L_G "
                << m.losses.generator << "  L_S " << m.losses.sampling << "  L_D " << m.losses.discriminator
                << "  disc_acc " << m.disc_accuracy << "  " << std::setprecision(3) << el << "s" << std::endl;
    }
    if (!heldout.empty() && ((cfg.eval_every > 0 && done % cfg.eval_every == 0) || done == total)) {
      write_eval_rows(eval, done, trainer.models(), heldout, cfg);
      eval.flush();
    }
    if (done % cfg.checkpoint_every == 0 || done == total || done == stop) {
      metrics.flush();
      const std::string path = (dir / "checkpoints" / checkpoint_name(done)).string();
      write_container(path, trainer.to_container());
      out.final_checkpoint = path;
    }
  }
  if (out.final_checkpoint.empty()) out.final_checkpoint = latest_checkpoint(opts.run_dir);
  out.end_step = trainer.step();

  nlohmann::json man;
  man["config_hash"] = out.hash;
  man["seed"] = cfg.seed;
  man["preset"] = cfg.model.preset;
  man["variant"] = std::string(model::variant_name(cfg.variant));
  man["start_step"] = out.start_step;
  man["end_step"] = out.end_step;
  man["total_steps"] = total;
  man["train_sequences"] = trainer.stream().size();
  man["skipped_short_chunks"] = corpora.skipped_short;
  man["vocab_size"] = trainer.vocab().size();
  man["parameters"] = trainer.models().params().total_elements();
  man["artifacts"] = {{"config", "config.json"},
                      {"vocab", "vocab.txt"},
                      {"metrics", "metrics.csv"},
                      {"eval", "eval.csv"},
                      {"final_checkpoint", fs::relative(out.final_checkpoint, dir).string()}};
  out.manifest = (dir / "manifest.json").string();
  std::ofstream(out.manifest) << man.dump(2) << '\n';
  return out;
}

}  // namespace rtd::train
