#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "rtd/core/parameters.hpp"
#include "rtd/model/config.hpp"
#include "rtd/model/encoder.hpp"

namespace rtd::model {

struct GeneratorOutput {
  Tensor hidden;           // h_G for every token, [rows * seq_len, gen hidden]
  Tensor mlm_logits;       // at masked positions only, [M, V]
  // Sampling head at masked positions, [M, V]: logits of D-hat (HP_LOSS) or of
  // p_s (HP_DIST). Undefined for the baseline.
  Tensor sampling_logits;
  Tensor sampling_hidden;  // h_S, [M, embed]
  bool has_sampling() const { return sampling_logits.defined(); }
};

struct DiscriminatorOutput {
  Tensor logits;                    // [rows * seq_len]
  std::vector<double> probability;  // D, clamped to [1e-6, 1 - 1e-6]
  std::vector<std::uint8_t> valid;  // 0 at PAD positions (excluded)
};

inline constexpr double kProbClamp = 1e-6;

// Generator (encoder + MLM head + optional sampling head) and discriminator
// (encoder + binary head) over one shared token-embedding table.
class ModelPair {
 public:
  // Truncated-normal(0.02) weights, zero biases, unit LayerNorm gains.
  ModelPair(const ModelConfig& cfg, std::uint64_t seed);

  ModelPair(const ModelPair&) = delete;
  ModelPair& operator=(const ModelPair&) = delete;

  // `corrupted` is c (rows * seq_len), `mask_positions` are flat indices into it.
  GeneratorOutput generator_forward(std::span<const TokenId> corrupted, std::span<const std::size_t> mask_positions,
                                    const TokenLayout& layout, Rng* dropout) const;

  DiscriminatorOutput discriminator_forward(std::span<const TokenId> replaced, const TokenLayout& layout,
                                            Rng* dropout) const;

  const ModelConfig& config() const { return cfg_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }
  const Tensor& token_embedding() const { return embedding_; }
  const Tensor& mlm_output_projection() const { return embedding_; }
  // w(x') for HP_LOSS, or e(x') for HP_DIST. Undefined for the baseline.
  const Tensor& sampling_projection() const { return sampling_projection_; }
  const Encoder& generator_encoder() const { return *gen_; }
  const Encoder& discriminator_encoder() const { return *disc_; }

 private:
  ModelConfig cfg_;
  ParameterStore store_;
  Tensor embedding_;
  std::unique_ptr<Encoder> gen_;
  std::unique_ptr<Encoder> disc_;
  Dense mlm_dense_;
  LayerNorm mlm_ln_;
  Tensor mlm_bias_;
  Dense sampling_dense_;
  LayerNorm sampling_ln_;
  Tensor sampling_projection_;
  Dense disc_dense_;
  Dense disc_out_;
};

void initialize_parameters(ParameterStore& store, std::uint64_t seed);

}  // namespace rtd::model
