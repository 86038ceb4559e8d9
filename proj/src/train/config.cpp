#include "rtd/train/config.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "rtd/core/container.hpp"
#include "rtd/core/errors.hpp"

namespace rtd::train {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, _] : j.items()) {
    if (!ok.count(k)) throw ConfigError("unknown config key '" + (where.empty() ? k : where + "." + k) + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + (where.empty() ? std::string(key) : where + "." + key) + "' has the wrong type");
  }
}

losses::FocalSpec focal_from_json(const json& j) {
  reject_unknown(j, "focal", {"mode", "gamma", "threshold", "gamma_hi", "gamma_lo", "differentiable"});
  std::string mode = "constant";
  read(j, "mode", mode, "focal");
  losses::FocalSpec s;
  if (mode == "constant") {
    s = losses::FocalSpec::constant(1.0);
  } else if (mode == "piecewise") {
    s = losses::FocalSpec::piecewise();
  } else {
    throw ConfigError("focal.mode must be constant or piecewise");
  }
  read(j, "gamma", s.gamma, "focal");
  read(j, "threshold", s.threshold, "focal");
  read(j, "gamma_hi", s.gamma_hi, "focal");
  read(j, "gamma_lo", s.gamma_lo, "focal");
  read(j, "differentiable", s.differentiable_factor, "focal");
  return s;
}

}  // namespace

double TrainConfig::effective_lambda1() const {
  if (variant == model::Variant::kNone) return 0.0;
  return lambda1 ? *lambda1 : losses::default_lambda1(variant);
}

std::string TrainConfig::resolve(const std::string& path) const {
  if (path.empty() || base_dir.empty()) return path;
  std::filesystem::path p(path);
  if (p.is_absolute()) return path;
  return (std::filesystem::path(base_dir) / p).string();
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (precision != "float64") fail("precision: only float64 is supported");
  focal.validate();
  if (lambda1 && *lambda1 < 0.0) fail("lambda1 must be >= 0");
  if (lambda2 < 0.0) fail("lambda2 must be >= 0");
  if (sampling_delay < 0) fail("sampling_delay must be >= 0");
  if (!(data.mask_frac > 0.0 && data.mask_frac < 1.0)) fail("data.mask_frac must lie in (0,1)");
  if (data.ngram_max < 1) fail("data.ngram_max must be >= 1");
  if (data.batch_size < 1) fail("data.batch_size must be >= 1");
  if (data.max_len < 2) fail("data.max_len must be >= 2");
  if (data.vocab_size <= 5) fail("data.vocab_size must exceed the special tokens");
  if (data.corpus.empty() && data.synthetic_documents == 0) fail("data.synthetic_documents must be positive");
  if (optim.total_steps < 1) fail("optim.total_steps must be positive");
  if (!(optim.warmup > 0 && optim.warmup < optim.total_steps)) fail("optim.warmup must lie in (0, total_steps)");
  if (!(optim.peak_lr > 0.0)) fail("optim.peak_lr must be positive");
  if (!(optim.adam.beta1 >= 0.0 && optim.adam.beta1 < 1.0 && optim.adam.beta2 >= 0.0 && optim.adam.beta2 < 1.0))
    fail("optim betas must lie in [0,1)");
  if (!(optim.adam.eps > 0.0)) fail("optim.eps must be positive");
  if (checkpoint_every < 1) fail("checkpoint_every must be positive");
  if (eval_every < 0) fail("eval_every must be >= 0");
  if (!(model.dropout >= 0.0 && model.dropout < 1.0)) fail("model.dropout must lie in [0,1)");
  if (model.generator_ratio != -1.0 && !(model.generator_ratio > 0.0 && model.generator_ratio <= 1.0))
    fail("model.generator_ratio must lie in (0,1]");
  (void)model::preset(model.preset, 16, variant);  // throws on unknown names
}

TrainConfig config_from_json(const json& j) {
  reject_unknown(j, "", {"model", "variant", "focal", "lambda1", "lambda2", "sampling_delay", "data", "optim", "seed",
                         "checkpoint_every", "eval_every", "eval_batches", "eval_seed", "precision"});
  TrainConfig c;
  if (auto it = j.find("model"); it != j.end()) {
    const json& m = *it;
    reject_unknown(m, "model", {"preset", "layers", "hidden", "ffn_hidden", "heads", "embed_dim", "max_len",
                                "generator_ratio", "dropout", "tie_hp_loss_projection", "sampling_stop_gradient"});
    read(m, "preset", c.model.preset, "model");
    read(m, "layers", c.model.layers, "model");
    read(m, "hidden", c.model.hidden, "model");
    read(m, "ffn_hidden", c.model.ffn_hidden, "model");
    read(m, "heads", c.model.heads, "model");
    read(m, "embed_dim", c.model.embed_dim, "model");
    read(m, "max_len", c.model.max_len, "model");
    read(m, "generator_ratio", c.model.generator_ratio, "model");
    read(m, "dropout", c.model.dropout, "model");
    read(m, "tie_hp_loss_projection", c.model.tie_hp_loss_projection, "model");
    read(m, "sampling_stop_gradient", c.model.sampling_stop_gradient, "model");
  }
  if (auto it = j.find("variant"); it != j.end()) {
    if (!it->is_string()) throw ConfigError("config key 'variant' has the wrong type");
    try {
      c.variant = model::parse_variant(it->get<std::string>());
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
  }
  // Without a focal block the baseline keeps plain cross-entropy and the HP variants use gamma 1.
  if (auto it = j.find("focal"); it != j.end()) {
    c.focal = focal_from_json(*it);
  } else if (c.variant != model::Variant::kNone) {
    c.focal = losses::FocalSpec::constant(1.0);
  }
  if (auto it = j.find("lambda1"); it != j.end() && !it->is_null()) {
    double l = 0.0;
    read(j, "lambda1", l, "");
    c.lambda1 = l;
  }
  read(j, "lambda2", c.lambda2, "");
  read(j, "sampling_delay", c.sampling_delay, "");
  if (auto it = j.find("data"); it != j.end()) {
    const json& d = *it;
    reject_unknown(d, "data", {"corpus", "heldout", "vocab", "synthetic_documents", "synthetic_heldout_documents",
                               "synthetic_micro", "synthetic_seed", "vocab_size", "min_freq", "max_len", "mask_frac",
                               "ngram_max", "batch_size"});
    read(d, "corpus", c.data.corpus, "data");
    read(d, "heldout", c.data.heldout, "data");
    read(d, "vocab", c.data.vocab, "data");
    read(d, "synthetic_documents", c.data.synthetic_documents, "data");
    read(d, "synthetic_heldout_documents", c.data.synthetic_heldout_documents, "data");
    read(d, "synthetic_micro", c.data.synthetic_micro, "data");
    read(d, "synthetic_seed", c.data.synthetic_seed, "data");
    read(d, "vocab_size", c.data.vocab_size, "data");
    read(d, "min_freq", c.data.min_freq, "data");
    read(d, "max_len", c.data.max_len, "data");
    read(d, "mask_frac", c.data.mask_frac, "data");
    read(d, "ngram_max", c.data.ngram_max, "data");
    read(d, "batch_size", c.data.batch_size, "data");
  }
  if (auto it = j.find("optim"); it != j.end()) {
    const json& o = *it;
    reject_unknown(o, "optim", {"total_steps", "warmup", "peak_lr", "beta1", "beta2", "eps"});
    read(o, "total_steps", c.optim.total_steps, "optim");
    read(o, "warmup", c.optim.warmup, "optim");
    read(o, "peak_lr", c.optim.peak_lr, "optim");
    read(o, "beta1", c.optim.adam.beta1, "optim");
    read(o, "beta2", c.optim.adam.beta2, "optim");
    read(o, "eps", c.optim.adam.eps, "optim");
  }
  read(j, "seed", c.seed, "");
  read(j, "checkpoint_every", c.checkpoint_every, "");
  read(j, "eval_every", c.eval_every, "");
  read(j, "eval_batches", c.eval_batches, "");
  read(j, "eval_seed", c.eval_seed, "");
  read(j, "precision", c.precision, "");
  c.validate();
  return c;
}

json config_to_json(const TrainConfig& c) {
  json j;
  j["model"] = {{"preset", c.model.preset},
                {"layers", c.model.layers},
                {"hidden", c.model.hidden},
                {"ffn_hidden", c.model.ffn_hidden},
                {"heads", c.model.heads},
                {"embed_dim", c.model.embed_dim},
                {"max_len", c.model.max_len},
                {"generator_ratio", c.model.generator_ratio},
                {"dropout", c.model.dropout},
                {"tie_hp_loss_projection", c.model.tie_hp_loss_projection},
                {"sampling_stop_gradient", c.model.sampling_stop_gradient}};
  j["variant"] = std::string(model::variant_name(c.variant));
  json f;
  if (c.focal.mode == losses::FocalSpec::Mode::kConstant) {
    f = {{"mode", "constant"}, {"gamma", c.focal.gamma}};
  } else {
    f = {{"mode", "piecewise"},
         {"threshold", c.focal.threshold},
         {"gamma_hi", c.focal.gamma_hi},
         {"gamma_lo", c.focal.gamma_lo}};
  }
  f["differentiable"] = c.focal.differentiable_factor;
  j["focal"] = f;
  j["lambda1"] = c.effective_lambda1();
  j["lambda2"] = c.lambda2;
  j["sampling_delay"] = c.sampling_delay;
  j["data"] = {{"corpus", c.data.corpus},
               {"heldout", c.data.heldout},
               {"vocab", c.data.vocab},
               {"synthetic_documents", c.data.synthetic_documents},
               {"synthetic_heldout_documents", c.data.synthetic_heldout_documents},
               {"synthetic_micro", c.data.synthetic_micro},
               {"synthetic_seed", c.data.synthetic_seed},
               {"vocab_size", c.data.vocab_size},
               {"min_freq", c.data.min_freq},
               {"max_len", c.data.max_len},
               {"mask_frac", c.data.mask_frac},
               {"ngram_max", c.data.ngram_max},
               {"batch_size", c.data.batch_size}};
  j["optim"] = {{"total_steps", c.optim.total_steps}, {"warmup", c.optim.warmup},   {"peak_lr", c.optim.peak_lr},
                {"beta1", c.optim.adam.beta1},         {"beta2", c.optim.adam.beta2}, {"eps", c.optim.adam.eps}};
  j["seed"] = c.seed;
  j["checkpoint_every"] = c.checkpoint_every;
  j["eval_every"] = c.eval_every;
  j["eval_batches"] = c.eval_batches;
  j["eval_seed"] = c.eval_seed;
  j["precision"] = c.precision;
  return j;
}

std::string canonical_config_text(const TrainConfig& cfg) { return config_to_json(cfg).dump(); }

std::string config_hash(const TrainConfig& cfg) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", crc32_of(canonical_config_text(cfg)));
  return buf;
}

TrainConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  TrainConfig c = parse_config_text(ss.str());
  c.base_dir = std::filesystem::absolute(path).parent_path().string();
  return c;
}

model::ModelConfig build_model_config(const TrainConfig& cfg, std::size_t vocab_size) {
  model::ModelConfig m = model::preset(cfg.model.preset, vocab_size, cfg.variant);
  model::EncoderConfig d = m.discriminator;
  if (cfg.model.layers) d.layers = cfg.model.layers;
  if (cfg.model.heads) d.heads = cfg.model.heads;
  if (cfg.model.hidden) d.hidden = cfg.model.hidden;
  if (cfg.model.hidden || cfg.model.heads) {
    if (d.hidden % d.heads != 0) throw ConfigError("model.hidden must be divisible by model.heads");
    d.head_dim = d.hidden / d.heads;
  }
  if (cfg.model.ffn_hidden) d.ffn_hidden = cfg.model.ffn_hidden;
  if (cfg.model.embed_dim) d.embed_dim = cfg.model.embed_dim;
  if (cfg.model.max_len) d.max_len = cfg.model.max_len;
  d.dropout = cfg.model.dropout;
  const double ratio =
      cfg.model.generator_ratio > 0.0 ? cfg.model.generator_ratio : model::preset_generator_ratio(cfg.model.preset);
  m.discriminator = d;
  m.generator = model::scale_generator(d, ratio);
  m.tie_hp_loss_projection = cfg.model.tie_hp_loss_projection;
  m.sampling_stop_gradient = cfg.model.sampling_stop_gradient;
  if (cfg.data.max_len > d.max_len) throw ConfigError("data.max_len exceeds the model's position table");
  m.validate();
  return m;
}

}  // namespace rtd::train
