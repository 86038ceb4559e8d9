#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "rtd/core/ops.hpp"
#include "rtd/core/parameters.hpp"
#include "rtd/model/config.hpp"

namespace rtd::model {

// Bidirectional bucket of key position minus query position: exact buckets for
// small offsets, log-spaced up to max_distance, sign in the top half.
std::int32_t relative_bucket(std::int64_t relative_position, std::size_t num_buckets, std::size_t max_distance);

struct Dense {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]
  Tensor operator()(const Tensor& x) const { return add_bias(matmul(x, weight), bias); }
};

struct LayerNorm {
  Tensor gain;
  Tensor bias;
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias); }
};

Dense make_dense(ParameterStore& store, const std::string& name, ParamGroup group, std::size_t in, std::size_t out);
LayerNorm make_layer_norm(ParameterStore& store, const std::string& name, ParamGroup group, std::size_t dim);

// Token block layout shared by both towers.
struct TokenLayout {
  std::size_t rows = 0;
  std::size_t seq_len = 0;
  std::span<const std::uint8_t> valid;
};

// Post-LN transformer encoder over a shared token-embedding table, with learned
// absolute positions and a per-encoder relative-position attention bias.
class Encoder {
 public:
  Encoder(const std::string& prefix, const EncoderConfig& cfg, ParamGroup group, ParameterStore& store,
          Tensor token_embedding);

  // ids: rows * seq_len. Returns [rows * seq_len, hidden]. `dropout` == nullptr
  // disables dropout.
  Tensor forward(std::span<const TokenId> ids, const TokenLayout& layout, Rng* dropout) const;

  const EncoderConfig& config() const { return cfg_; }
  const Tensor& rel_table() const { return rel_table_; }

 private:
  struct Layer {
    Dense q, k, v, o;
    LayerNorm ln_attn;
    Dense ffn_in, ffn_out;
    LayerNorm ln_ffn;
  };

  const std::vector<std::int32_t>& buckets(std::size_t seq_len) const;

  EncoderConfig cfg_;
  Tensor token_embedding_;
  Tensor position_embedding_;
  LayerNorm ln_embed_;
  bool has_projection_ = false;
  Dense embed_projection_;
  Tensor rel_table_;
  std::vector<Layer> layers_;
  mutable std::map<std::size_t, std::vector<std::int32_t>> bucket_cache_;
};

}  // namespace rtd::model
