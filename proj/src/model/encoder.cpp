#include "rtd/model/encoder.hpp"

#include <cmath>

#include "rtd/core/errors.hpp"

namespace rtd::model {

std::int32_t relative_bucket(std::int64_t relative_position, std::size_t num_buckets, std::size_t max_distance) {
  const auto half = static_cast<std::int64_t>(num_buckets / 2);
  std::int64_t ret = relative_position > 0 ? half : 0;
  const std::int64_t n = std::abs(relative_position);
  const std::int64_t max_exact = std::max<std::int64_t>(1, half / 2);
  if (n < max_exact) return static_cast<std::int32_t>(ret + n);
  const double scaled = std::log(static_cast<double>(n) / static_cast<double>(max_exact)) /
                        std::log(static_cast<double>(max_distance) / static_cast<double>(max_exact)) *
                        static_cast<double>(half - max_exact);
  const std::int64_t large = std::min<std::int64_t>(half - 1, max_exact + static_cast<std::int64_t>(scaled));
  return static_cast<std::int32_t>(ret + large);
}

Dense make_dense(ParameterStore& store, const std::string& name, ParamGroup group, std::size_t in, std::size_t out) {
  return {store.add(name + ".w", group, {in, out}), store.add(name + ".b", group, {out})};
}

LayerNorm make_layer_norm(ParameterStore& store, const std::string& name, ParamGroup group, std::size_t dim) {
  return {store.add(name + ".gain", group, {dim}), store.add(name + ".bias", group, {dim})};
}

Encoder::Encoder(const std::string& prefix, const EncoderConfig& cfg, ParamGroup group, ParameterStore& store,
                 Tensor token_embedding)
    : cfg_(cfg), token_embedding_(std::move(token_embedding)) {
  cfg_.validate(prefix);
  RTD_REQUIRE(token_embedding_.rank() == 2 && token_embedding_.dim(1) == cfg_.embed_dim,
              prefix + ": token embedding width must equal embed_dim");
  position_embedding_ = store.add(prefix + ".position_embedding", group, {cfg_.max_len, cfg_.embed_dim});
  ln_embed_ = make_layer_norm(store, prefix + ".embed_ln", group, cfg_.embed_dim);
  has_projection_ = cfg_.embed_dim != cfg_.hidden;
  if (has_projection_) embed_projection_ = make_dense(store, prefix + ".embed_proj", group, cfg_.embed_dim, cfg_.hidden);
  rel_table_ = store.add(prefix + ".rel_table", group, {cfg_.heads, cfg_.rel_buckets});
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const std::string p = prefix + ".layer" + std::to_string(l);
    Layer layer;
    layer.q = make_dense(store, p + ".attn.q", group, cfg_.hidden, cfg_.hidden);
    layer.k = make_dense(store, p + ".attn.k", group, cfg_.hidden, cfg_.hidden);
    layer.v = make_dense(store, p + ".attn.v", group, cfg_.hidden, cfg_.hidden);
    layer.o = make_dense(store, p + ".attn.o", group, cfg_.hidden, cfg_.hidden);
    layer.ln_attn = make_layer_norm(store, p + ".attn_ln", group, cfg_.hidden);
    layer.ffn_in = make_dense(store, p + ".ffn.in", group, cfg_.hidden, cfg_.ffn_hidden);
    layer.ffn_out = make_dense(store, p + ".ffn.out", group, cfg_.ffn_hidden, cfg_.hidden);
    layer.ln_ffn = make_layer_norm(store, p + ".ffn_ln", group, cfg_.hidden);
    layers_.push_back(std::move(layer));
  }
}

const std::vector<std::int32_t>& Encoder::buckets(std::size_t seq_len) const {
  auto it = bucket_cache_.find(seq_len);
  if (it != bucket_cache_.end()) return it->second;
  std::vector<std::int32_t> map(seq_len * seq_len);
  for (std::size_t i = 0; i < seq_len; ++i) {
    for (std::size_t j = 0; j < seq_len; ++j) {
      map[i * seq_len + j] = relative_bucket(static_cast<std::int64_t>(j) - static_cast<std::int64_t>(i),
                                             cfg_.rel_buckets, cfg_.rel_max_distance);
    }
  }
  return bucket_cache_.emplace(seq_len, std::move(map)).first->second;
}

Tensor Encoder::forward(std::span<const TokenId> ids, const TokenLayout& layout, Rng* dropout) const {
  const std::size_t L = layout.seq_len;
  RTD_REQUIRE(ids.size() == layout.rows * L, "encoder: ids do not match layout");
  RTD_REQUIRE(layout.valid.size() == ids.size(), "encoder: validity mask does not match layout");
  RTD_REQUIRE(L <= cfg_.max_len, "encoder: sequence length " + std::to_string(L) + " exceeds max_len " +
                                     std::to_string(cfg_.max_len));
  const double p = dropout ? cfg_.dropout : 0.0;
  auto drop = [&](const Tensor& t) { return p > 0.0 ? rtd::dropout(t, p, *dropout) : t; };

  std::vector<std::size_t> positions(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) positions[i] = i % L;
  Tensor x = add(embedding(token_embedding_, ids), gather_rows(position_embedding_, positions));
  x = drop(ln_embed_(x));
  if (has_projection_) x = embed_projection_(x);

  AttentionSpec spec;
  spec.batch = layout.rows;
  spec.seq_len = L;
  spec.heads = cfg_.heads;
  spec.head_dim = cfg_.head_dim;
  spec.buckets = buckets(L);
  spec.key_valid = layout.valid;

  for (const Layer& layer : layers_) {
    Tensor a = attention(layer.q(x), layer.k(x), layer.v(x), rel_table_, spec);
    x = layer.ln_attn(add(x, drop(layer.o(a))));
    Tensor f = layer.ffn_out(gelu(layer.ffn_in(x)));
    x = layer.ln_ffn(add(x, drop(f)));
  }
  return x;
}

}  // namespace rtd::model
