// The three architectures behind one prediction interface: the transformer
// sequence model (TTM/STM/BTM presets), the fully connected bottleneck
// baseline, and the plain mesh autoencoder. All share the same spiral
// encoder/decoder; predictions are deformations added to a subject's
// reference mesh (the autoencoder deforms the population template instead).
#pragma once
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "transformesh/errors.hpp"
#include "transformesh/hash.hpp"
#include "transformesh/hierarchy.hpp"
#include "transformesh/layers.hpp"
#include "transformesh/optim.hpp"
#include "transformesh/tensor.hpp"

namespace tfm {

enum class ModelVariant { TransforMesh, Fcbn, MeshAe };

inline ModelVariant parse_variant(const std::string& name) {
  if (name == "transformesh" || name == "ttm" || name == "stm" || name == "btm")
    return ModelVariant::TransforMesh;
  if (name == "fcbn") return ModelVariant::Fcbn;
  if (name == "meshae") return ModelVariant::MeshAe;
  throw ConfigError("unknown variant '" + name + "'");
}

inline std::string variant_name(ModelVariant v) {
  switch (v) {
    case ModelVariant::TransforMesh: return "transformesh";
    case ModelVariant::Fcbn: return "fcbn";
    default: return "meshae";
  }
}

struct ModelConfig {
  ModelVariant variant = ModelVariant::TransforMesh;
  int depth = 1;   // encoder blocks; the ttm/stm/btm presets are 1/3/12
  int width = 64;  // latent dimension D
  int heads = 4;
  int slots = 8;  // S, maximum visits per subject
  int mlp_ratio = 4;
  bool final_layer_norm = true;
  int fcbn_bottleneck = 0;            // 0 means width
  bool missing_stop_gradient = false; // detach the missing-slot reference embedding
  // feed the sequence encoder shape-minus-reference (re-based onto the
  // template) instead of the raw shape, so latents carry the deformation
  bool reference_relative_inputs = false;
  std::vector<int> channels = {8, 16};
  unsigned long long seed = 42;

  void validate(int n_levels) const {
    if (slots < 2) throw ConfigError("slots must be >= 2");
    if (width % heads != 0) throw ConfigError("width must be divisible by heads");
    if (depth < 0) throw ConfigError("depth must be >= 0");
    if (static_cast<int>(channels.size()) != n_levels - 1)
      throw ConfigError("need one channel width per pooled level: " +
                        std::to_string(n_levels - 1) + " levels, got " +
                        std::to_string(channels.size()));
  }
};

// Named presets from the experiment naming: depths 1, 3, 12.
inline int preset_depth(const std::string& name) {
  if (name == "ttm") return 1;
  if (name == "stm") return 3;
  if (name == "btm") return 12;
  return -1;
}

enum class SlotStatus { Observed, Missing, Augmented };

struct SequenceSlot {
  SlotStatus status = SlotStatus::Missing;
  std::vector<double> input_vertices;  // flattened N*3; arbitrary for missing slots
  std::vector<double> true_vertices;   // supervision target for observed/augmented
  int month = 0;
};

struct SequenceBatch {
  std::vector<double> reference;  // flattened N*3, the t=0 mesh
  std::vector<SequenceSlot> slots;

  void validate(int n_vertices, int n_slots) const {
    const size_t want = static_cast<size_t>(n_vertices) * 3;
    if (reference.size() != want)
      throw ShapeError("batch reference has " + std::to_string(reference.size() / 3) +
                       " vertices, template has " + std::to_string(n_vertices));
    if (static_cast<int>(slots.size()) != n_slots)
      throw ShapeError("batch has " + std::to_string(slots.size()) + " slots, model expects " +
                       std::to_string(n_slots));
    if (slots[0].status == SlotStatus::Missing)
      throw ValidationError("slot 0 is the reference and must be observed");
    for (size_t t = 0; t < slots.size(); ++t) {
      const auto& s = slots[t];
      if (s.status != SlotStatus::Missing &&
          (s.input_vertices.size() != want || s.true_vertices.size() != want))
        throw ShapeError("slot " + std::to_string(t) + " vertex buffers mismatch template");
    }
  }
};

class Model {
 public:
  Model(ModelConfig cfg, std::shared_ptr<const MeshHierarchy> hierarchy)
      : cfg_(std::move(cfg)), hierarchy_(std::move(hierarchy)) {
    cfg_.validate(hierarchy_->n_levels());
    const int levels = hierarchy_->n_levels();
    std::mt19937_64 rng(cfg_.seed);

    for (int k = 0; k < levels; ++k) {
      tables_.push_back(spiral_index_table(hierarchy_->levels[k].spirals));
      if (k + 1 < levels)
        pools_.push_back(PoolPair::create(hierarchy_->levels[k].down, hierarchy_->levels[k].up));
    }

    // encoder: conv+pool per level, then affine to the latent width
    for (int k = 0; k + 1 < levels; ++k) {
      const int c_in = k == 0 ? 3 : cfg_.channels[k - 1];
      enc_convs_.push_back(SpiralConvLayer::create(tables_[k], c_in, cfg_.channels[k], rng));
    }
    flat_width_ = hierarchy_->coarsest_mesh().n_vertices() *
                  (levels > 1 ? cfg_.channels.back() : 3);
    if (levels == 1) throw ConfigError("hierarchy needs at least one pooled level");
    enc_affine_ = Linear::create(flat_width_, cfg_.width, rng);

    // decoder mirrors it; the output head starts at zero so the initial
    // prediction is the reference itself
    dec_affine_ = Linear::create(cfg_.width, flat_width_, rng);
    for (int k = levels - 2; k >= 1; --k)
      dec_convs_.push_back(
          SpiralConvLayer::create(tables_[k], cfg_.channels[k], cfg_.channels[k - 1], rng));
    dec_out_ = SpiralConvLayer::zeros(tables_[0], cfg_.channels[0], 3);

    if (cfg_.variant == ModelVariant::TransforMesh) {
      pos_ = PositionEmbedding::create(cfg_.slots, cfg_.width, rng);
      for (int b = 0; b < cfg_.depth; ++b)
        blocks_.push_back(TransformerBlock::create(cfg_.width, cfg_.heads, cfg_.mlp_ratio, rng));
      if (cfg_.final_layer_norm) final_ln_ = LayerNormParams::create(cfg_.width);
    } else if (cfg_.variant == ModelVariant::Fcbn) {
      const int bottleneck = cfg_.fcbn_bottleneck > 0 ? cfg_.fcbn_bottleneck : cfg_.width;
      fc_in_ = Linear::create(cfg_.slots * cfg_.width, bottleneck, rng);
      fc_out_ = Linear::create(bottleneck, cfg_.slots * cfg_.width, rng);
    }

    register_parameters();
    check_unique_names(params_);
  }

  const ModelConfig& config() const { return cfg_; }
  const MeshHierarchy& hierarchy() const { return *hierarchy_; }
  int n_vertices() const { return hierarchy_->template_mesh().n_vertices(); }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }

  long long parameter_count() const {
    long long total = 0;
    for (const auto& p : params_) total += static_cast<long long>(p.tensor.size());
    return total;
  }

  // [N,3] -> [1,D]. Inputs are centered on the template so the convolutions
  // see displacement fields instead of the much larger absolute coordinates.
  Tensor encode_mesh(const Tensor& vertices) const {
    if (vertices.ndim() != 2 || vertices.dim(0) != n_vertices() || vertices.dim(1) != 3)
      throw ShapeError("encode_mesh: " + detail::shape_str(vertices.shape()) + " vs [" +
                       std::to_string(n_vertices()) + ",3]");
    Tensor x = sub(vertices, template_tensor());
    for (size_t k = 0; k < enc_convs_.size(); ++k) x = pool(enc_convs_[k](x), pools_[k]);
    return enc_affine_(reshape(x, {1, flat_width_}));
  }

  // [1,D] -> deformation field [N,3]
  Tensor decode_deformation(const Tensor& latent) const {
    if (latent.ndim() != 2 || latent.dim(0) != 1 || latent.dim(1) != cfg_.width)
      throw ShapeError("decode_deformation: " + detail::shape_str(latent.shape()) + " vs [1," +
                       std::to_string(cfg_.width) + "]");
    const int levels = hierarchy_->n_levels();
    Tensor x = reshape(dec_affine_(latent),
                       {hierarchy_->coarsest_mesh().n_vertices(), cfg_.channels.back()});
    for (int k = levels - 2; k >= 1; --k)
      x = dec_convs_[levels - 2 - k](unpool(x, pools_[k]));
    return dec_out_(unpool(x, pools_[0]));
  }

  struct Forward {
    std::vector<Tensor> predictions;           // per slot, reference + delta
    std::vector<Tensor> deltas;                // per slot, the deformation field
    std::vector<bool> key_mask;                // true = missing, ignored by attention
    std::vector<std::uint64_t> input_hashes;   // hash of the vertices each slot encoded
  };

  // Sequence forward for the temporal variants. Missing slots encode the
  // reference and are masked out of attention; augmented slots encode the
  // reference but stay visible.
  Forward forward(const SequenceBatch& batch) const {
    if (cfg_.variant == ModelVariant::MeshAe)
      throw ConfigError("meshae has no sequence forward; use reconstruct()");
    batch.validate(n_vertices(), cfg_.slots);
    const int s = cfg_.slots;

    Forward out;
    out.key_mask.assign(s, false);
    Tensor reference = Tensor::from({n_vertices(), 3}, batch.reference);
    // optional re-basing: encode template + (shape - reference), so the
    // reference itself maps onto the template
    auto rebase = [&](const std::vector<double>& verts) {
      if (!cfg_.reference_relative_inputs) return verts;
      std::vector<double> out_v(verts.size());
      const auto& tmpl = template_tensor().values();
      for (size_t i = 0; i < verts.size(); ++i)
        out_v[i] = tmpl[i] + verts[i] - batch.reference[i];
      return out_v;
    };
    Tensor reference_latent;
    std::vector<Tensor> latents;
    latents.reserve(s);
    for (int t = 0; t < s; ++t) {
      if (batch.slots[t].status == SlotStatus::Missing) {
        out.key_mask[t] = true;
        if (!reference_latent.defined()) {
          reference_latent = encode_mesh(Tensor::from({n_vertices(), 3}, rebase(batch.reference)));
          if (cfg_.missing_stop_gradient)
            reference_latent = Tensor::from(reference_latent.shape(), reference_latent.values());
        }
        latents.push_back(reference_latent);
        out.input_hashes.push_back(fnv1a64(batch.reference));
      } else {
        latents.push_back(encode_mesh(
            Tensor::from({n_vertices(), 3}, rebase(batch.slots[t].input_vertices))));
        out.input_hashes.push_back(fnv1a64(batch.slots[t].input_vertices));
      }
    }

    Tensor stacked = concat(latents, 0);  // [S,D]
    Tensor encoded;
    if (cfg_.variant == ModelVariant::TransforMesh) {
      encoded = transformer_encode(stacked, out.key_mask, blocks_, pos_,
                                   cfg_.final_layer_norm ? &final_ln_ : nullptr);
    } else {
      Tensor flat = reshape(stacked, {1, s * cfg_.width});
      encoded = reshape(fc_out_(gelu(fc_in_(flat))), {s, cfg_.width});
    }

    for (int t = 0; t < s; ++t) {
      Tensor delta = decode_deformation(slice(encoded, 0, t, 1));
      out.deltas.push_back(delta);
      out.predictions.push_back(add(delta, reference));
    }
    return out;
  }

  // Autoencoder path: reconstruct a shape as template + decoded deformation.
  Tensor reconstruct(const Tensor& vertices) const {
    return add(decode_deformation(encode_mesh(vertices)), template_tensor());
  }

  // The template vertices as a constant tensor, cached across forwards.
  Tensor template_tensor() const {
    if (!template_tensor_.defined()) {
      std::vector<double> tmpl;
      tmpl.reserve(static_cast<size_t>(n_vertices()) * 3);
      for (const auto& v : hierarchy_->template_mesh().vertices) {
        tmpl.push_back(v.x);
        tmpl.push_back(v.y);
        tmpl.push_back(v.z);
      }
      template_tensor_ = Tensor::from({n_vertices(), 3}, std::move(tmpl));
    }
    return template_tensor_;
  }

 private:
  void register_parameters() {
    for (size_t k = 0; k < enc_convs_.size(); ++k)
      enc_convs_[k].register_into(params_, "encoder/conv" + std::to_string(k));
    enc_affine_.register_into(params_, "encoder/to_latent");
    dec_affine_.register_into(params_, "decoder/from_latent");
    for (size_t k = 0; k < dec_convs_.size(); ++k)
      dec_convs_[k].register_into(params_, "decoder/conv" + std::to_string(k));
    dec_out_.register_into(params_, "decoder/out");
    if (cfg_.variant == ModelVariant::TransforMesh) {
      pos_.register_into(params_, "temporal/pos");
      for (size_t b = 0; b < blocks_.size(); ++b)
        blocks_[b].register_into(params_, "temporal/block" + std::to_string(b));
      if (cfg_.final_layer_norm) final_ln_.register_into(params_, "temporal/final_ln");
    } else if (cfg_.variant == ModelVariant::Fcbn) {
      fc_in_.register_into(params_, "temporal/fc_in");
      fc_out_.register_into(params_, "temporal/fc_out");
    }
  }

  ModelConfig cfg_;
  std::shared_ptr<const MeshHierarchy> hierarchy_;
  std::vector<std::shared_ptr<const IndexTable>> tables_;
  std::vector<PoolPair> pools_;
  std::vector<SpiralConvLayer> enc_convs_;
  Linear enc_affine_;
  Linear dec_affine_;
  std::vector<SpiralConvLayer> dec_convs_;
  SpiralConvLayer dec_out_;
  int flat_width_ = 0;
  PositionEmbedding pos_;
  std::vector<TransformerBlock> blocks_;
  LayerNormParams final_ln_;
  Linear fc_in_, fc_out_;
  std::vector<Parameter> params_;
  mutable Tensor template_tensor_;
};

// Parameter count from dimensions alone, no allocation; `level_sizes` are the
// per-level vertex counts and `spiral_lengths` the per-level spiral lengths.
inline long long count_parameters(const ModelConfig& cfg, const std::vector<int>& level_sizes,
                                  const std::vector<int>& spiral_lengths) {
  const int levels = static_cast<int>(level_sizes.size());
  auto linear = [](long long in, long long out) { return in * out + out; };
  long long total = 0;
  for (int k = 0; k + 1 < levels; ++k) {
    const int c_in = k == 0 ? 3 : cfg.channels[k - 1];
    total += linear(static_cast<long long>(spiral_lengths[k]) * c_in, cfg.channels[k]);
  }
  const long long flat = static_cast<long long>(level_sizes.back()) * cfg.channels.back();
  total += linear(flat, cfg.width);
  total += linear(cfg.width, flat);
  for (int k = levels - 2; k >= 1; --k)
    total += linear(static_cast<long long>(spiral_lengths[k]) * cfg.channels[k],
                    cfg.channels[k - 1]);
  total += linear(static_cast<long long>(spiral_lengths[0]) * cfg.channels[0], 3);

  if (cfg.variant == ModelVariant::TransforMesh) {
    total += static_cast<long long>(cfg.slots) * cfg.width;  // positions
    const long long d = cfg.width;
    long long block = 2 * (2 * d);                       // two layer norms
    block += 4 * linear(d, d);                           // q,k,v,o
    block += linear(d, d * cfg.mlp_ratio) + linear(d * cfg.mlp_ratio, d);
    total += cfg.depth * block;
    if (cfg.final_layer_norm) total += 2 * d;
  } else if (cfg.variant == ModelVariant::Fcbn) {
    const long long bottleneck = cfg.fcbn_bottleneck > 0 ? cfg.fcbn_bottleneck : cfg.width;
    total += linear(static_cast<long long>(cfg.slots) * cfg.width, bottleneck);
    total += linear(bottleneck, static_cast<long long>(cfg.slots) * cfg.width);
  }
  return total;
}

}  // namespace tfm
