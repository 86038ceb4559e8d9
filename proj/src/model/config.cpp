#include "rtd/model/config.hpp"

#include <cmath>

#include "rtd/core/errors.hpp"

namespace rtd::model {

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::kNone: return "none";
    case Variant::kHpLoss: return "hp_loss";
    case Variant::kHpDist: return "hp_dist";
  }
  return "?";
}

Variant parse_variant(std::string_view s) {
  if (s == "none" || s == "baseline") return Variant::kNone;
  if (s == "hp_loss") return Variant::kHpLoss;
  if (s == "hp_dist") return Variant::kHpDist;
  throw ConfigError("unknown variant '" + std::string(s) + "' (expected none|hp_loss|hp_dist)");
}

void EncoderConfig::validate(std::string_view what) const {
  const std::string w(what);
  if (layers == 0 || hidden == 0 || ffn_hidden == 0 || heads == 0 || head_dim == 0 || embed_dim == 0 || max_len == 0 ||
      rel_buckets < 2) {
    throw ConfigError(w + ": all extents must be positive");
  }
  if (hidden != heads * head_dim) {
    throw ConfigError(w + ": hidden (" + std::to_string(hidden) + ") != heads x head_dim (" + std::to_string(heads) + " x " +
                      std::to_string(head_dim) + ")");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError(w + ": dropout must be in [0, 1)");
}

void ModelConfig::validate() const {
  if (vocab_size <= 5) throw ConfigError("model: vocab_size must exceed the special tokens");
  discriminator.validate("discriminator");
  generator.validate("generator");
  if (generator.embed_dim != discriminator.embed_dim) throw ConfigError("model: tied embeddings need equal embed_dim");
  if (generator.max_len != discriminator.max_len) throw ConfigError("model: generator/discriminator max_len differ");
}

EncoderConfig scale_generator(const EncoderConfig& disc, double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("generator ratio must be in (0, 1]");
  const double h = static_cast<double>(disc.hidden) * ratio;
  const double f = static_cast<double>(disc.ffn_hidden) * ratio;
  if (std::abs(h - std::round(h)) > 1e-9 || std::abs(f - std::round(f)) > 1e-9) {
    throw ConfigError("generator ratio does not divide the discriminator widths");
  }
  EncoderConfig g = disc;
  g.hidden = static_cast<std::size_t>(std::llround(h));
  g.ffn_hidden = static_cast<std::size_t>(std::llround(f));
  g.head_dim = std::min(disc.head_dim, g.hidden);
  if (g.hidden % g.head_dim != 0) throw ConfigError("generator hidden not divisible by head size");
  g.heads = g.hidden / g.head_dim;
  return g;
}

double preset_generator_ratio(std::string_view name) {
  if (name == "small" || name == "tiny") return 0.25;
  if (name == "base") return 1.0 / 3.0;
  throw ConfigError("unknown model preset '" + std::string(name) + "' (expected tiny|small|base)");
}

ModelConfig preset(std::string_view name, std::size_t vocab_size, Variant variant) {
  EncoderConfig d;
  if (name == "small") {
    d.layers = 12, d.hidden = 256, d.ffn_hidden = 1024, d.heads = 4, d.head_dim = 64, d.embed_dim = 128;
    d.max_len = 128;
  } else if (name == "base") {
    d.layers = 12, d.hidden = 768, d.ffn_hidden = 3072, d.heads = 12, d.head_dim = 64, d.embed_dim = 768;
    d.max_len = 512;
  } else if (name == "tiny") {
    d.layers = 4, d.hidden = 128, d.ffn_hidden = 512, d.heads = 2, d.head_dim = 64, d.embed_dim = 128;
    d.max_len = 128;
  } else {
    throw ConfigError("unknown model preset '" + std::string(name) + "' (expected tiny|small|base)");
  }
  ModelConfig m;
  m.vocab_size = vocab_size;
  m.discriminator = d;
  m.generator = scale_generator(d, preset_generator_ratio(name));
  m.variant = variant;
  return m;
}

}  // namespace rtd::model
