#include "rtd/model/model_pair.hpp"

#include <algorithm>
#include <cmath>
#include <string_view>

#include "rtd/core/errors.hpp"

namespace rtd::model {

namespace {

bool ends_with(std::string_view s, std::string_view suffix) { return s.ends_with(suffix); }

}  // namespace

void initialize_parameters(ParameterStore& store, std::uint64_t seed) {
  Rng rng(seed, Stream::kInit);
  for (auto& p : store.all()) {
    auto v = p.tensor.mutable_values();
    if (ends_with(p.name, ".gain")) {
      std::fill(v.begin(), v.end(), 1.0);
    } else if (ends_with(p.name, ".b") || ends_with(p.name, "bias")) {
      std::fill(v.begin(), v.end(), 0.0);
    } else {
      for (double& x : v) x = rng.truncated_normal(0.02);
    }
  }
}

ModelPair::ModelPair(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  const std::size_t V = cfg_.vocab_size;
  const std::size_t E = cfg_.discriminator.embed_dim;
  embedding_ = store_.add("shared.token_embedding", ParamGroup::kShared, {V, E});

  gen_ = std::make_unique<Encoder>("gen", cfg_.generator, ParamGroup::kGenerator, store_, embedding_);
  mlm_dense_ = make_dense(store_, "gen.mlm_head.dense", ParamGroup::kGenerator, cfg_.generator.hidden, E);
  mlm_ln_ = make_layer_norm(store_, "gen.mlm_head.ln", ParamGroup::kGenerator, E);
  mlm_bias_ = store_.add("gen.mlm_head.output_bias", ParamGroup::kGenerator, {V});

  if (cfg_.variant != Variant::kNone) {
    sampling_dense_ = make_dense(store_, "sampling_head.dense", ParamGroup::kSamplingHead, cfg_.generator.hidden, E);
    sampling_ln_ = make_layer_norm(store_, "sampling_head.ln", ParamGroup::kSamplingHead, E);
    if (cfg_.variant == Variant::kHpLoss && !cfg_.tie_hp_loss_projection) {
      sampling_projection_ = store_.add("sampling_head.projection", ParamGroup::kSamplingHead, {V, E});
    } else {
      sampling_projection_ = embedding_;
    }
  }

  disc_ = std::make_unique<Encoder>("disc", cfg_.discriminator, ParamGroup::kDiscriminator, store_, embedding_);
  disc_dense_ = make_dense(store_, "disc.head.dense", ParamGroup::kDiscriminator, cfg_.discriminator.hidden,
                           cfg_.discriminator.hidden);
  disc_out_ = make_dense(store_, "disc.head.out", ParamGroup::kDiscriminator, cfg_.discriminator.hidden, 1);

  initialize_parameters(store_, seed);
}

GeneratorOutput ModelPair::generator_forward(std::span<const TokenId> corrupted,
                                             std::span<const std::size_t> mask_positions, const TokenLayout& layout,
                                             Rng* dropout) const {
  for (std::size_t p : mask_positions) {
    RTD_REQUIRE(p < corrupted.size(), "generator_forward: mask position out of range");
    RTD_REQUIRE(layout.valid[p], "generator_forward: mask position on padding");
  }
  GeneratorOutput out;
  out.hidden = gen_->forward(corrupted, layout, dropout);
  Tensor at_mask = gather_rows(out.hidden, mask_positions);

  Tensor h = mlm_ln_(gelu(mlm_dense_(at_mask)));
  out.mlm_logits = add_bias(matmul_nt(h, embedding_), mlm_bias_);

  if (cfg_.variant != Variant::kNone) {
    Tensor in = cfg_.sampling_stop_gradient ? detach(at_mask) : at_mask;
    out.sampling_hidden = sampling_ln_(gelu(sampling_dense_(in)));
    out.sampling_logits = matmul_nt(out.sampling_hidden, sampling_projection_);
  }
  return out;
}

DiscriminatorOutput ModelPair::discriminator_forward(std::span<const TokenId> replaced, const TokenLayout& layout,
                                                     Rng* dropout) const {
  Tensor h = disc_->forward(replaced, layout, dropout);
  Tensor z = disc_out_(gelu(disc_dense_(h)));
  DiscriminatorOutput out;
  out.logits = reshape(z, {z.size()});
  out.probability.resize(z.size());
  const auto zv = out.logits.values();
  for (std::size_t i = 0; i < zv.size(); ++i) {
    const double d = zv[i] >= 0 ? 1.0 / (1.0 + std::exp(-zv[i])) : std::exp(zv[i]) / (1.0 + std::exp(zv[i]));
    out.probability[i] = std::clamp(d, kProbClamp, 1.0 - kProbClamp);
  }
  out.valid.assign(layout.valid.begin(), layout.valid.end());
  return out;
}

}  // namespace rtd::model
