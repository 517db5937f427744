// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aple/archive.hpp"
#include "aple/image.hpp"
#include "aple/image_adapter.hpp"
#include "aple/tensor.hpp"
#include "aple/tokenizer.hpp"

namespace aple {

/// How prompt tokens behave past the first prompted layer.
enum class DeepMode {
  fresh,    // each prompted layer replaces the prompt positions with its own learnable tokens
  carried,  // one set of tokens joins at the first prompted layer and flows through
};

struct ModelConfig {
  std::size_t vocab_size = 64;
  std::size_t max_text_len = 8;
  std::size_t d_lang = 32;
  std::size_t d_vis = 48;
  std::size_t d_joint = 32;
  std::size_t n_layers = 4;      // K
  std::size_t prompt_depth = 1;  // S; prompts enter at layer S+1
  std::size_t n_heads = 4;
  std::size_t patch_grid = 4;  // M patches per side
  std::size_t patch_size = 8;
  std::size_t channels = 3;
  std::size_t mlp_ratio = 4;
  float temperature = 0.01f;
  float ln_eps = 1e-5f;
  DeepMode deep_mode = DeepMode::fresh;

  std::size_t image_side() const { return patch_grid * patch_size; }
  std::size_t num_patches() const { return patch_grid * patch_grid; }
  std::size_t patch_dim() const { return channels * patch_size * patch_size; }
  /// Number of layers that see prompt tokens, K - S.
  std::size_t prompted_layers() const { return n_layers - prompt_depth; }

  /// Laptop-scale preset used by the defaults and tests.
  static ModelConfig desk();
  /// 512/768/512 widths, 14x14 patches of 16 px, K = 12, S = 8.
  static ModelConfig vit_b16();

  /// Throws ConfigError listing every invalid field.
  void validate() const;
};

struct LayerWeights {
  Tensor ln1_gain, ln1_bias;
  Tensor qkv_w, qkv_b;  // [d x 3d], [3d]
  Tensor out_w, out_b;  // [d x d], [d]
  Tensor ln2_gain, ln2_bias;
  Tensor fc_w, fc_b;      // [d x r*d], [r*d]
  Tensor proj_w, proj_b;  // [r*d x d], [d]
};

struct TextWeights {
  Tensor token_embedding;  // [vocab x d_lang]
  Tensor positional;       // [T x d_lang]
  std::vector<LayerWeights> layers;
  Tensor ln_final_gain, ln_final_bias;
  Tensor projection;  // TextProj, [d_lang x d_joint]

  static TextWeights init(const ModelConfig& cfg, std::uint64_t seed);
};

struct VisionWeights {
  Tensor patch_embedding;  // [C*p*p x d_vis]
  Tensor class_token;      // [1 x d_vis]
  Tensor positional;       // [(1 + M^2) x d_vis]
  Tensor ln_pre_gain, ln_pre_bias;
  std::vector<LayerWeights> layers;
  Tensor ln_post_gain, ln_post_bias;
  Tensor projection;  // ImageProj, [d_vis x d_joint]

  static VisionWeights init(const ModelConfig& cfg, std::uint64_t seed);
};

/// Backbone parameters. Frozen (trainable = false) everywhere outside the
/// backbone warm-up utility.
struct EncoderWeights {
  TextWeights text;
  VisionWeights vision;

  static EncoderWeights init(const ModelConfig& cfg, std::uint64_t seed);

  std::vector<NamedTensor> named() const;
  static EncoderWeights from_named(const ModelConfig& cfg, std::span<const NamedTensor> entries);

  std::vector<Tensor> tensors() const;
  void set_trainable(bool on);
  /// Hash over every tensor, in named() order.
  std::uint64_t checksum() const;
  EncoderWeights clone() const;
};

/// The learnable prompt tokens: language side D and vision side G, one
/// [m x d] tensor per prompted layer (layers S+1..K). In carried mode only
/// the first tensor of each side is read. m = 0 means no prompts.
struct PromptPack {
  std::size_t length = 0;
  std::vector<Tensor> text;
  std::vector<Tensor> vision;

  bool empty() const { return length == 0; }
  void set_text_trainable(bool on);
  void set_vision_trainable(bool on);
  void clear_grads();

  std::uint64_t text_checksum() const;
  std::uint64_t vision_checksum() const;

  PromptPack clone() const;
  std::vector<NamedTensor> named() const;
  static PromptPack from_named(const ModelConfig& cfg, std::span<const NamedTensor> entries);

  /// Throws DimensionError if the pack does not fit `cfg`.
  void check(const ModelConfig& cfg) const;
};

enum class PromptInit { random_gauss, embed_text };

/// random_gauss: every token ~ N(0, 0.02^2).
/// embed_text: the first language tensor takes the token embeddings of
/// "a photo of a" (truncated, or padded with N(0, 0.02^2) rows); everything
/// else is random_gauss. embed_text needs `weights` and `vocab`.
PromptPack init_prompts(const ModelConfig& cfg, std::size_t length, std::uint64_t seed,
                        PromptInit mode, const EncoderWeights* weights = nullptr,
                        const Vocabulary* vocab = nullptr);

/// Token embedding plus positional embedding, [T x d_lang].
Tensor tokenize_embed(Graph* g, const TextWeights& w, const ModelConfig& cfg,
                      const TokenizedQuery& query);

/// Text feature in the joint space, [d_joint]. prompts == nullptr or an empty
/// pack gives the plain hand-crafted-prompt pipeline.
Tensor encode_text(Graph* g, const EncoderWeights& w, const ModelConfig& cfg,
                   const TokenizedQuery& query, const PromptPack* prompts);

/// Stacked text features for a class set, [C x d_joint].
Tensor encode_class_texts(Graph* g, const EncoderWeights& w, const ModelConfig& cfg,
                          const ClassPromptSet& classes, const PromptPack* prompts);

/// Non-overlapping patches flattened as (channel, row, col), [M^2 x C*p*p].
Tensor patchify(const ImageGrid& img, const ModelConfig& cfg);

/// Image feature in the joint space, [d_joint]. When `adapter` is given the
/// image is replaced by adapt(img) before patch embedding.
Tensor encode_image(Graph* g, const EncoderWeights& w, const ModelConfig& cfg,
                    const ImageGrid& img, const PromptPack* prompts,
                    const AdapterConfig* adapter);

/// Same as encode_image on an image the caller has already adapted (or not).
Tensor encode_image_prepared(Graph* g, const EncoderWeights& w, const ModelConfig& cfg,
                             const ImageGrid& img, const PromptPack* prompts);

const char* to_string(DeepMode m);
const char* to_string(PromptInit m);

}  // namespace aple
