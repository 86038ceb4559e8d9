#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace rtd::model {

enum class Variant { kNone, kHpLoss, kHpDist };

std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view s);

struct EncoderConfig {
  std::size_t layers = 0;
  std::size_t hidden = 0;
  std::size_t ffn_hidden = 0;
  std::size_t heads = 0;
  std::size_t head_dim = 0;
  std::size_t embed_dim = 0;
  double dropout = 0.1;
  std::size_t rel_buckets = 32;
  std::size_t rel_max_distance = 128;
  std::size_t max_len = 128;

  // hidden == heads * head_dim and all extents positive; ConfigError otherwise.
  void validate(std::string_view what) const;
};

struct ModelConfig {
  std::size_t vocab_size = 0;
  EncoderConfig discriminator;
  EncoderConfig generator;
  Variant variant = Variant::kNone;
  // HP_Loss projection w(x') aliases the token-embedding table when true.
  bool tie_hp_loss_projection = true;
  // Detach encoder states before the sampling head (ablation).
  bool sampling_stop_gradient = false;

  void validate() const;
};

// Generator: same depth, width scaled by `ratio`, head size kept where possible.
EncoderConfig scale_generator(const EncoderConfig& disc, double ratio);

// Named presets: "small" (12/256/1024/4, embed 128, generator 1/4),
// "base" (12/768/3072/12, embed 768, generator 1/3) and "tiny"
// (4/128/512/2, embed 128, generator 1/4).
ModelConfig preset(std::string_view name, std::size_t vocab_size, Variant variant);
double preset_generator_ratio(std::string_view name);

}  // namespace rtd::model
