#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

#include "rtd/core/adam.hpp"
#include "rtd/losses/losses.hpp"
#include "rtd/model/config.hpp"

namespace rtd::train {

struct ModelSection {
  std::string preset = "tiny";
  // Overrides applied to the preset's discriminator shape; 0 / negative keeps the preset value.
  std::size_t layers = 0;
  std::size_t hidden = 0;
  std::size_t ffn_hidden = 0;
  std::size_t heads = 0;
  std::size_t embed_dim = 0;
  std::size_t max_len = 0;
  double generator_ratio = -1.0;
  double dropout = 0.1;
  bool tie_hp_loss_projection = true;
  bool sampling_stop_gradient = false;
};

struct DataSection {
  std::string corpus;   // one document per line; empty means synthetic
  std::string heldout;  // empty means synthetic (or none when corpus is a file)
  std::string vocab;    // optional vocab file; built from the corpus otherwise
  std::size_t synthetic_documents = 2000;
  std::size_t synthetic_heldout_documents = 200;
  bool synthetic_micro = false;
  std::uint64_t synthetic_seed = 20240101;
  std::size_t vocab_size = 8192;
  std::size_t min_freq = 1;
  std::size_t max_len = 64;
  double mask_frac = 0.15;
  int ngram_max = 3;
  std::size_t batch_size = 16;
};

struct OptimSection {
  std::int64_t total_steps = 2000;
  std::int64_t warmup = 200;
  double peak_lr = 5e-4;
  AdamConfig adam;
};

struct TrainConfig {
  ModelSection model;
  model::Variant variant = model::Variant::kNone;
  losses::FocalSpec focal = losses::FocalSpec::constant(0.0);  // gamma 1 for HP variants when unset
  std::optional<double> lambda1;  // default depends on the variant
  double lambda2 = losses::kDefaultLambda2;
  std::int64_t sampling_delay = 0;
  DataSection data;
  OptimSection optim;
  std::uint64_t seed = 1;
  std::int64_t checkpoint_every = 1000;
  std::int64_t eval_every = 500;
  std::size_t eval_batches = 8;
  std::uint64_t eval_seed = 7;
  std::string precision = "float64";

  // Directory that relative data paths resolve against. Not part of the hash.
  std::string base_dir;

  double effective_lambda1() const;
  std::string resolve(const std::string& path) const;
  // Every field is range-checked; ConfigError names the offending key.
  void validate() const;
};

TrainConfig config_from_json(const nlohmann::json& j);
// Canonical form with every default filled in.
nlohmann::json config_to_json(const TrainConfig& cfg);
std::string canonical_config_text(const TrainConfig& cfg);
// crc32 of the canonical text, 8 lowercase hex digits.
std::string config_hash(const TrainConfig& cfg);

TrainConfig load_config(const std::string& path);
TrainConfig parse_config_text(const std::string& text);

model::ModelConfig build_model_config(const TrainConfig& cfg, std::size_t vocab_size);

}  // namespace rtd::train
