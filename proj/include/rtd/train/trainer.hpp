#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "rtd/core/adam.hpp"
#include "rtd/core/container.hpp"
#include "rtd/data/batching.hpp"
#include "rtd/data/vocab.hpp"
#include "rtd/losses/losses.hpp"
#include "rtd/model/model_pair.hpp"
#include "rtd/train/config.hpp"
#include "rtd/train/pipeline.hpp"

namespace rtd::train {

struct StepMetrics {
  std::int64_t step = 0;  // 0-based index of the step just taken
  double lr = 0.0;
  losses::LossBundle losses;
  double mlm_accuracy = 0.0;          // argmax p_g == x at masked positions
  double disc_accuracy = 0.0;         // all valid positions
  double disc_accuracy_masked = 0.0;
  double original_fraction = 0.0;     // sampled replacements equal to x
  std::size_t clamp_incidents = 0;
  Scheme scheme = Scheme::kPg;
  double wall_seconds = 0.0;
};

void write_metrics_header(std::ostream& os);
// Every field except wall-clock, with round-trip precision.
void write_metrics_row(std::ostream& os, const StepMetrics& m);

struct Corpora {
  data::Vocab vocab;
  std::vector<std::vector<TokenId>> train;
  std::vector<std::vector<TokenId>> heldout;
  std::size_t skipped_short = 0;
};

// Reads (or synthesizes) the corpora named by the config and builds / loads the vocab.
Corpora load_corpora(const TrainConfig& cfg);
// Same, but with a fixed vocab (resume, analysis).
Corpora load_corpora(const TrainConfig& cfg, const data::Vocab& vocab);

class Trainer {
 public:
  Trainer(TrainConfig cfg, data::Vocab vocab, std::vector<std::vector<TokenId>> train_sequences);

  // One optimizer step on the stream's batch for the current step.
  StepMetrics train_step();
  // One optimizer step on an explicit batch.
  StepMetrics train_step(const data::Batch& batch);

  std::int64_t step() const { return adam_.state().step; }
  const TrainConfig& config() const { return cfg_; }
  const std::string& hash() const { return hash_; }
  const data::Vocab& vocab() const { return vocab_; }
  model::ModelPair& models() { return *models_; }
  const model::ModelPair& models() const { return *models_; }
  Adam& optimizer() { return adam_; }
  const data::BatchStream& stream() const { return stream_; }

  Container to_container() const;
  // Restores parameters and optimizer state; verifies the config hash.
  void restore(const Container& c);

 private:
  TrainConfig cfg_;
  std::string hash_;
  data::Vocab vocab_;
  std::unique_ptr<model::ModelPair> models_;
  Adam adam_;
  data::BatchStream stream_;
};

// Checkpoint = container with metadata {format, config, config_hash, vocab, step}
// and arrays param/<name>, adam.m/<name>, adam.v/<name>.
Container make_checkpoint(const TrainConfig& cfg, const data::Vocab& vocab, const model::ModelPair& models,
                          const AdamState& adam);
void save_checkpoint(const std::string& path, const TrainConfig& cfg, const data::Vocab& vocab,
                     const model::ModelPair& models, const AdamState& adam);

struct LoadedCheckpoint {
  TrainConfig config;
  std::string hash;
  data::Vocab vocab;
  std::int64_t step = 0;
  Container container;
};
// Throws CheckpointError on a bad file and ConfigHashMismatch when `expected_hash` differs.
LoadedCheckpoint load_checkpoint(const std::string& path, const std::string& expected_hash = "");
// Builds a model pair and copies the stored parameters into it.
std::unique_ptr<model::ModelPair> models_from_checkpoint(const LoadedCheckpoint& ck);
void load_parameters(model::ModelPair& models, const Container& c);
AdamState load_adam_state(const model::ModelPair& models, const Container& c);

struct PretrainOptions {
  std::string run_dir;        // created if missing
  bool resume = false;        // continue from the newest checkpoint in run_dir
  std::int64_t stop_after = -1;  // stop early once this many steps are done (tests)
  std::ostream* log = nullptr;   // progress lines
  std::int64_t log_every = 100;
};

struct PretrainResult {
  std::string run_dir;
  std::string hash;
  std::int64_t start_step = 0;
  std::int64_t end_step = 0;
  std::string final_checkpoint;
  std::string metrics_csv;
  std::string eval_csv;
  std::string manifest;
};

PretrainResult pretrain(const TrainConfig& cfg, const PretrainOptions& opts);

// "<hash>-<UTC timestamp>" under `root`.
std::string default_run_dir(const std::string& root, const TrainConfig& cfg);
std::string checkpoint_name(std::int64_t step);
// Newest step_*.ckpt under run_dir/checkpoints, or empty.
std::string latest_checkpoint(const std::string& run_dir);

}  // namespace rtd::train
