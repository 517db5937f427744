// SPDX-License-Identifier: Apache-2.0
#include "aple/encoders.hpp"

#include <cmath>

#include "aple/checksum.hpp"
#include "aple/error.hpp"
#include "aple/ops.hpp"
#include "aple/rng.hpp"

namespace aple {
namespace {

constexpr float kPromptInitStd = 0.02f;
constexpr float kMaskedScore = -1e9f;

Tensor normal(Rng& rng, Shape shape, double stddev) {
  std::vector<float> v(shape_numel(shape));
  for (float& x : v) x = static_cast<float>(rng.normal(0.0, stddev));
  return Tensor(std::move(shape), std::move(v));
}

LayerWeights init_layer(Rng& rng, std::size_t d, std::size_t ratio, std::size_t depth) {
  const double attn_std = 1.0 / std::sqrt(static_cast<double>(d));
  const double resid_std = attn_std / std::sqrt(2.0 * static_cast<double>(depth));
  const double fc_std = 1.0 / std::sqrt(2.0 * static_cast<double>(d));
  LayerWeights w;
  w.ln1_gain = Tensor::full({d}, 1.0f);
  w.ln1_bias = Tensor::zeros({d});
  w.qkv_w = normal(rng, {d, 3 * d}, attn_std);
  w.qkv_b = Tensor::zeros({3 * d});
  w.out_w = normal(rng, {d, d}, resid_std);
  w.out_b = Tensor::zeros({d});
  w.ln2_gain = Tensor::full({d}, 1.0f);
  w.ln2_bias = Tensor::zeros({d});
  w.fc_w = normal(rng, {d, ratio * d}, fc_std);
  w.fc_b = Tensor::zeros({ratio * d});
  w.proj_w = normal(rng, {ratio * d, d}, resid_std);
  w.proj_b = Tensor::zeros({d});
  return w;
}

void push_layer(std::vector<NamedTensor>& out, const std::string& p, const LayerWeights& w) {
  out.push_back({p + ".ln1.gain", w.ln1_gain});
  out.push_back({p + ".ln1.bias", w.ln1_bias});
  out.push_back({p + ".attn.qkv.w", w.qkv_w});
  out.push_back({p + ".attn.qkv.b", w.qkv_b});
  out.push_back({p + ".attn.out.w", w.out_w});
  out.push_back({p + ".attn.out.b", w.out_b});
  out.push_back({p + ".ln2.gain", w.ln2_gain});
  out.push_back({p + ".ln2.bias", w.ln2_bias});
  out.push_back({p + ".mlp.fc.w", w.fc_w});
  out.push_back({p + ".mlp.fc.b", w.fc_b});
  out.push_back({p + ".mlp.proj.w", w.proj_w});
  out.push_back({p + ".mlp.proj.b", w.proj_b});
}

Tensor expect(std::span<const NamedTensor> entries, const std::string& name, const Shape& shape) {
  Tensor t = find_tensor(entries, name).clone();
  if (t.shape() != shape) {
    throw DimensionError("weight '" + name + "' has shape " + shape_str(t.shape()) + ", expected " +
                         shape_str(shape));
  }
  t.set_trainable(false);
  return t;
}

LayerWeights load_layer(std::span<const NamedTensor> e, const std::string& p, std::size_t d,
                        std::size_t r) {
  LayerWeights w;
  w.ln1_gain = expect(e, p + ".ln1.gain", {d});
  w.ln1_bias = expect(e, p + ".ln1.bias", {d});
  w.qkv_w = expect(e, p + ".attn.qkv.w", {d, 3 * d});
  w.qkv_b = expect(e, p + ".attn.qkv.b", {3 * d});
  w.out_w = expect(e, p + ".attn.out.w", {d, d});
  w.out_b = expect(e, p + ".attn.out.b", {d});
  w.ln2_gain = expect(e, p + ".ln2.gain", {d});
  w.ln2_bias = expect(e, p + ".ln2.bias", {d});
  w.fc_w = expect(e, p + ".mlp.fc.w", {d, r * d});
  w.fc_b = expect(e, p + ".mlp.fc.b", {r * d});
  w.proj_w = expect(e, p + ".mlp.proj.w", {r * d, d});
  w.proj_b = expect(e, p + ".mlp.proj.b", {d});
  return w;
}

Tensor attention(Graph* g, const LayerWeights& w, const Tensor& x, std::size_t heads,
                 const Tensor* mask) {
  const std::size_t d = x.dim(1);
  const std::size_t dh = d / heads;
  const float score_scale = 1.0f / std::sqrt(static_cast<float>(dh));
  const Tensor qkv = ops::linear(g, x, w.qkv_w, w.qkv_b);
  std::vector<Tensor> per_head;
  per_head.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor q = ops::slice(g, qkv, 1, h * dh, dh);
    const Tensor k = ops::slice(g, qkv, 1, d + h * dh, dh);
    const Tensor v = ops::slice(g, qkv, 1, 2 * d + h * dh, dh);
    Tensor scores = ops::scale(g, ops::matmul(g, q, ops::transpose(g, k)), score_scale);
    if (mask) scores = ops::add(g, scores, *mask);
    per_head.push_back(ops::matmul(g, ops::softmax(g, scores, 1), v));
  }
  const Tensor merged = heads == 1 ? per_head[0] : ops::concat(g, per_head, 1);
  return ops::linear(g, merged, w.out_w, w.out_b);
}

// Pre-norm residual block: x + attn(ln1(x)), then x + mlp(ln2(x)).
Tensor block(Graph* g, const LayerWeights& w, Tensor x, std::size_t heads, const Tensor* mask,
             float eps) {
  x = ops::add(g, x, attention(g, w, ops::layernorm(g, x, w.ln1_gain, w.ln1_bias, eps), heads, mask));
  const Tensor h = ops::gelu(g, ops::linear(g, ops::layernorm(g, x, w.ln2_gain, w.ln2_bias, eps),
                                            w.fc_w, w.fc_b));
  return ops::add(g, x, ops::linear(g, h, w.proj_w, w.proj_b));
}

// Additive key mask hiding the padding positions (end, T) of a text sequence
// of total length n. Returns an undefined tensor when nothing is padded.
Tensor padding_mask(std::size_t n, std::size_t text_len, std::size_t end_position) {
  if (end_position + 1 >= text_len) return {};
  std::vector<float> m(n * n, 0.0f);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = end_position + 1; j < text_len; ++j) m[i * n + j] = kMaskedScore;
  }
  return Tensor({n, n}, std::move(m));
}

// Runs the K layers, joining prompt tokens at layer S+1 per the deep mode.
Tensor run_layers(Graph* g, const std::vector<LayerWeights>& layers, const ModelConfig& cfg,
                  Tensor x, std::span<const Tensor> prompts, std::size_t base_len,
                  const Tensor& plain_mask, const Tensor& prompt_mask) {
  const bool use_prompts = !prompts.empty();
  for (std::size_t j = 0; j < layers.size(); ++j) {
    bool prompted = false;
    if (use_prompts && j >= cfg.prompt_depth) {
      const std::size_t idx = j - cfg.prompt_depth;
      if (idx == 0) {
        const Tensor parts[] = {x, prompts[0]};
        x = ops::concat(g, parts, 0);
      } else if (cfg.deep_mode == DeepMode::fresh) {
        const Tensor parts[] = {ops::slice(g, x, 0, 0, base_len), prompts[idx]};
        x = ops::concat(g, parts, 0);
      }
      prompted = true;
    }
    const Tensor& mask = prompted ? prompt_mask : plain_mask;
    x = block(g, layers[j], x, cfg.n_heads, mask.defined() ? &mask : nullptr, cfg.ln_eps);
  }
  return x;
}

std::uint64_t hash_tensors(std::span<const Tensor> ts) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Tensor& t : ts) {
    const std::uint64_t c = checksum(t);
    h = fnv1a64(std::as_bytes(std::span<const std::uint64_t>(&c, 1)), h);
  }
  return h;
}

}  // namespace

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::vit_b16() {
  ModelConfig c;
  c.vocab_size = 49408;
  c.max_text_len = 77;
  c.d_lang = 512;
  c.d_vis = 768;
  c.d_joint = 512;
  c.n_layers = 12;
  c.prompt_depth = 8;
  c.n_heads = 8;
  c.patch_grid = 14;
  c.patch_size = 16;
  c.channels = 3;
  return c;
}

void ModelConfig::validate() const {
  std::vector<std::string> issues;
  auto positive = [&](std::size_t v, const char* name) {
    if (v == 0) issues.push_back(std::string("model.") + name + " must be positive");
  };
  positive(vocab_size, "vocab_size");
  positive(max_text_len, "max_text_len");
  positive(d_lang, "d_lang");
  positive(d_vis, "d_vis");
  positive(d_joint, "d_joint");
  positive(n_layers, "n_layers");
  positive(n_heads, "n_heads");
  positive(patch_grid, "patch_grid");
  positive(patch_size, "patch_size");
  positive(mlp_ratio, "mlp_ratio");
  if (prompt_depth >= n_layers) issues.push_back("model.prompt_depth must be < model.n_layers");
  if (n_heads && d_lang % n_heads) issues.push_back("model.d_lang must be divisible by model.n_heads");
  if (n_heads && d_vis % n_heads) issues.push_back("model.d_vis must be divisible by model.n_heads");
  if (channels != 1 && channels != 3) issues.push_back("model.channels must be 1 or 3");
  if (!(temperature > 0.0f) || !std::isfinite(temperature)) {
    issues.push_back("model.temperature must be > 0");
  }
  if (!(ln_eps > 0.0f)) issues.push_back("model.ln_eps must be > 0");
  if (!issues.empty()) throw ConfigError(std::move(issues));
}

TextWeights TextWeights::init(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(derive_seed(seed, {1}));
  const std::size_t d = cfg.d_lang;
  TextWeights w;
  w.token_embedding = normal(rng, {cfg.vocab_size, d}, 0.02);
  w.positional = normal(rng, {cfg.max_text_len, d}, 0.01);
  for (std::size_t i = 0; i < cfg.n_layers; ++i) {
    w.layers.push_back(init_layer(rng, d, cfg.mlp_ratio, cfg.n_layers));
  }
  w.ln_final_gain = Tensor::full({d}, 1.0f);
  w.ln_final_bias = Tensor::zeros({d});
  w.projection = normal(rng, {d, cfg.d_joint}, 1.0 / std::sqrt(static_cast<double>(d)));
  return w;
}

VisionWeights VisionWeights::init(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(derive_seed(seed, {2}));
  const std::size_t d = cfg.d_vis;
  const double width_std = 1.0 / std::sqrt(static_cast<double>(d));
  VisionWeights w;
  w.patch_embedding =
      normal(rng, {cfg.patch_dim(), d}, 1.0 / std::sqrt(static_cast<double>(cfg.patch_dim())));
  w.class_token = normal(rng, {1, d}, width_std);
  w.positional = normal(rng, {cfg.num_patches() + 1, d}, width_std);
  w.ln_pre_gain = Tensor::full({d}, 1.0f);
  w.ln_pre_bias = Tensor::zeros({d});
  for (std::size_t i = 0; i < cfg.n_layers; ++i) {
    w.layers.push_back(init_layer(rng, d, cfg.mlp_ratio, cfg.n_layers));
  }
  w.ln_post_gain = Tensor::full({d}, 1.0f);
  w.ln_post_bias = Tensor::zeros({d});
  w.projection = normal(rng, {d, cfg.d_joint}, width_std);
  return w;
}

EncoderWeights EncoderWeights::init(const ModelConfig& cfg, std::uint64_t seed) {
  return {TextWeights::init(cfg, seed), VisionWeights::init(cfg, seed)};
}

std::vector<NamedTensor> EncoderWeights::named() const {
  std::vector<NamedTensor> out;
  out.push_back({"text.token_embedding", text.token_embedding});
  out.push_back({"text.positional", text.positional});
  for (std::size_t i = 0; i < text.layers.size(); ++i) {
    push_layer(out, "text.layers." + std::to_string(i), text.layers[i]);
  }
  out.push_back({"text.ln_final.gain", text.ln_final_gain});
  out.push_back({"text.ln_final.bias", text.ln_final_bias});
  out.push_back({"text.projection", text.projection});
  out.push_back({"vision.patch_embedding", vision.patch_embedding});
  out.push_back({"vision.class_token", vision.class_token});
  out.push_back({"vision.positional", vision.positional});
  out.push_back({"vision.ln_pre.gain", vision.ln_pre_gain});
  out.push_back({"vision.ln_pre.bias", vision.ln_pre_bias});
  for (std::size_t i = 0; i < vision.layers.size(); ++i) {
    push_layer(out, "vision.layers." + std::to_string(i), vision.layers[i]);
  }
  out.push_back({"vision.ln_post.gain", vision.ln_post_gain});
  out.push_back({"vision.ln_post.bias", vision.ln_post_bias});
  out.push_back({"vision.projection", vision.projection});
  return out;
}

EncoderWeights EncoderWeights::from_named(const ModelConfig& cfg,
                                          std::span<const NamedTensor> e) {
  cfg.validate();
  EncoderWeights w;
  const std::size_t dl = cfg.d_lang, dv = cfg.d_vis, r = cfg.mlp_ratio;
  w.text.token_embedding = expect(e, "text.token_embedding", {cfg.vocab_size, dl});
  w.text.positional = expect(e, "text.positional", {cfg.max_text_len, dl});
  for (std::size_t i = 0; i < cfg.n_layers; ++i) {
    w.text.layers.push_back(load_layer(e, "text.layers." + std::to_string(i), dl, r));
  }
  w.text.ln_final_gain = expect(e, "text.ln_final.gain", {dl});
  w.text.ln_final_bias = expect(e, "text.ln_final.bias", {dl});
  w.text.projection = expect(e, "text.projection", {dl, cfg.d_joint});
  w.vision.patch_embedding = expect(e, "vision.patch_embedding", {cfg.patch_dim(), dv});
  w.vision.class_token = expect(e, "vision.class_token", {1, dv});
  w.vision.positional = expect(e, "vision.positional", {cfg.num_patches() + 1, dv});
  w.vision.ln_pre_gain = expect(e, "vision.ln_pre.gain", {dv});
  w.vision.ln_pre_bias = expect(e, "vision.ln_pre.bias", {dv});
  for (std::size_t i = 0; i < cfg.n_layers; ++i) {
    w.vision.layers.push_back(load_layer(e, "vision.layers." + std::to_string(i), dv, r));
  }
  w.vision.ln_post_gain = expect(e, "vision.ln_post.gain", {dv});
  w.vision.ln_post_bias = expect(e, "vision.ln_post.bias", {dv});
  w.vision.projection = expect(e, "vision.projection", {dv, cfg.d_joint});
  return w;
}

std::vector<Tensor> EncoderWeights::tensors() const {
  std::vector<Tensor> out;
  for (auto& n : named()) out.push_back(n.tensor);
  return out;
}

void EncoderWeights::set_trainable(bool on) {
  for (Tensor& t : tensors()) t.set_trainable(on);
}

std::uint64_t EncoderWeights::checksum() const { return hash_tensors(tensors()); }

EncoderWeights EncoderWeights::clone() const {
  std::vector<NamedTensor> copies;
  for (auto& n : named()) copies.push_back({n.name, n.tensor.clone()});
  // Shapes are already consistent, so rebuild from the copies without a config.
  EncoderWeights w;
  std::size_t i = 0;
  auto next = [&]() { return copies[i++].tensor; };
  auto layer = [&]() {
    LayerWeights l;
    l.ln1_gain = next(); l.ln1_bias = next();
    l.qkv_w = next(); l.qkv_b = next();
    l.out_w = next(); l.out_b = next();
    l.ln2_gain = next(); l.ln2_bias = next();
    l.fc_w = next(); l.fc_b = next();
    l.proj_w = next(); l.proj_b = next();
    return l;
  };
  w.text.token_embedding = next();
  w.text.positional = next();
  for (std::size_t k = 0; k < text.layers.size(); ++k) w.text.layers.push_back(layer());
  w.text.ln_final_gain = next();
  w.text.ln_final_bias = next();
  w.text.projection = next();
  w.vision.patch_embedding = next();
  w.vision.class_token = next();
  w.vision.positional = next();
  w.vision.ln_pre_gain = next();
  w.vision.ln_pre_bias = next();
  for (std::size_t k = 0; k < vision.layers.size(); ++k) w.vision.layers.push_back(layer());
  w.vision.ln_post_gain = next();
  w.vision.ln_post_bias = next();
  w.vision.projection = next();
  return w;
}

void PromptPack::set_text_trainable(bool on) {
  for (Tensor& t : text) t.set_trainable(on);
}

void PromptPack::set_vision_trainable(bool on) {
  for (Tensor& t : vision) t.set_trainable(on);
}

void PromptPack::clear_grads() {
  for (Tensor& t : text) t.clear_grad();
  for (Tensor& t : vision) t.clear_grad();
}

std::uint64_t PromptPack::text_checksum() const { return hash_tensors(text); }
std::uint64_t PromptPack::vision_checksum() const { return hash_tensors(vision); }

PromptPack PromptPack::clone() const {
  PromptPack p;
  p.length = length;
  for (const Tensor& t : text) p.text.push_back(t.clone());
  for (const Tensor& t : vision) p.vision.push_back(t.clone());
  return p;
}

std::vector<NamedTensor> PromptPack::named() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < text.size(); ++i) out.push_back({"prompt.text." + std::to_string(i), text[i]});
  for (std::size_t i = 0; i < vision.size(); ++i) {
    out.push_back({"prompt.vision." + std::to_string(i), vision[i]});
  }
  return out;
}

PromptPack PromptPack::from_named(const ModelConfig& cfg, std::span<const NamedTensor> entries) {
  PromptPack p;
  if (entries.empty()) return p;
  p.length = find_tensor(entries, "prompt.text.0").dim(0);
  for (std::size_t i = 0; i < cfg.prompted_layers(); ++i) {
    Tensor t = expect(entries, "prompt.text." + std::to_string(i), {p.length, cfg.d_lang});
    t.set_trainable(true);
    p.text.push_back(t);
  }
  for (std::size_t i = 0; i < cfg.prompted_layers(); ++i) {
    Tensor t = expect(entries, "prompt.vision." + std::to_string(i), {p.length, cfg.d_vis});
    t.set_trainable(true);
    p.vision.push_back(t);
  }
  return p;
}

void PromptPack::check(const ModelConfig& cfg) const {
  if (length == 0) {
    if (!text.empty() || !vision.empty()) throw DimensionError("empty prompt pack holds tensors");
    return;
  }
  const std::size_t n = cfg.prompted_layers();
  if (text.size() != n || vision.size() != n) {
    throw DimensionError("prompt pack has " + std::to_string(text.size()) + "/" +
                         std::to_string(vision.size()) + " layers of tokens, config needs " +
                         std::to_string(n));
  }
  for (const Tensor& t : text) {
    if (t.shape() != Shape{length, cfg.d_lang}) {
      throw DimensionError("language prompt shape " + shape_str(t.shape()) + " does not match [" +
                           std::to_string(length) + "x" + std::to_string(cfg.d_lang) + "]");
    }
  }
  for (const Tensor& t : vision) {
    if (t.shape() != Shape{length, cfg.d_vis}) {
      throw DimensionError("vision prompt shape " + shape_str(t.shape()) + " does not match [" +
                           std::to_string(length) + "x" + std::to_string(cfg.d_vis) + "]");
    }
  }
}

PromptPack init_prompts(const ModelConfig& cfg, std::size_t length, std::uint64_t seed,
                        PromptInit mode, const EncoderWeights* weights, const Vocabulary* vocab) {
  cfg.validate();
  PromptPack p;
  p.length = length;
  if (length == 0) return p;
  Rng rng(derive_seed(seed, {3}));
  for (std::size_t i = 0; i < cfg.prompted_layers(); ++i) {
    p.text.push_back(normal(rng, {length, cfg.d_lang}, kPromptInitStd));
  }
  for (std::size_t i = 0; i < cfg.prompted_layers(); ++i) {
    p.vision.push_back(normal(rng, {length, cfg.d_vis}, kPromptInitStd));
  }
  if (mode == PromptInit::embed_text) {
    if (!weights || !vocab) throw UsageError("init_prompts: embed_text needs weights and vocabulary");
    const auto words = split_words("a photo of a");
    auto dst = p.text[0].mutable_data();
    auto table = weights->text.token_embedding.data();
    for (std::size_t i = 0; i < std::min(length, words.size()); ++i) {
      const TokenId id = vocab->id(words[i]);
      if (id >= cfg.vocab_size) throw DimensionError("token id exceeds model.vocab_size");
      std::copy_n(table.data() + id * cfg.d_lang, cfg.d_lang, dst.data() + i * cfg.d_lang);
    }
  }
  p.set_text_trainable(true);
  p.set_vision_trainable(true);
  return p;
}

Tensor tokenize_embed(Graph* g, const TextWeights& w, const ModelConfig& cfg,
                      const TokenizedQuery& query) {
  const std::size_t T = cfg.max_text_len, d = cfg.d_lang;
  if (query.ids.size() != T) {
    throw DimensionError("query has " + std::to_string(query.ids.size()) +
                         " tokens, model.max_text_len is " + std::to_string(T));
  }
  auto table = w.token_embedding.data();
  auto pos = w.positional.data();
  std::vector<float> x(T * d);
  for (std::size_t t = 0; t < T; ++t) {
    const TokenId id = query.ids[t];
    if (id >= cfg.vocab_size) {
      throw DimensionError("token id " + std::to_string(id) + " exceeds model.vocab_size");
    }
    for (std::size_t j = 0; j < d; ++j) x[t * d + j] = table[id * d + j] + pos[t * d + j];
  }
  (void)g;  // the embedding tables are frozen, so nothing here needs recording
  return Tensor({T, d}, std::move(x));
}

Tensor encode_text(Graph* g, const EncoderWeights& w, const ModelConfig& cfg,
                   const TokenizedQuery& query, const PromptPack* prompts) {
  const bool use_prompts = prompts && !prompts->empty();
  if (use_prompts) prompts->check(cfg);
  const std::size_t T = cfg.max_text_len;
  const std::size_t m = use_prompts ? prompts->length : 0;
  Tensor x = tokenize_embed(g, w.text, cfg, query);
  const Tensor plain_mask = padding_mask(T, T, query.end_position);
  const Tensor prompt_mask = use_prompts ? padding_mask(T + m, T, query.end_position) : Tensor{};
  std::span<const Tensor> tokens;
  if (use_prompts) tokens = prompts->text;
  x = run_layers(g, w.text.layers, cfg, x, tokens, T, plain_mask, prompt_mask);
  Tensor row = ops::slice(g, x, 0, query.end_position, 1);
  row = ops::layernorm(g, row, w.text.ln_final_gain, w.text.ln_final_bias, cfg.ln_eps);
  return ops::reshape(g, ops::matmul(g, row, w.text.projection), {cfg.d_joint});
}

Tensor encode_class_texts(Graph* g, const EncoderWeights& w, const ModelConfig& cfg,
                          const ClassPromptSet& classes, const PromptPack* prompts) {
  if (classes.size() == 0) throw UsageError("encode_class_texts: empty class set");
  std::vector<Tensor> rows;
  rows.reserve(classes.size());
  for (const auto& q : classes.queries) {
    rows.push_back(ops::reshape(g, encode_text(g, w, cfg, q, prompts), {1, cfg.d_joint}));
  }
  return rows.size() == 1 ? rows[0] : ops::concat(g, rows, 0);
}

Tensor patchify(const ImageGrid& img, const ModelConfig& cfg) {
  const std::size_t side = cfg.image_side();
  if (img.height != side || img.width != side || img.channels != cfg.channels) {
    throw DimensionError("image is " + std::to_string(img.channels) + "x" +
                         std::to_string(img.height) + "x" + std::to_string(img.width) +
                         ", model expects " + std::to_string(cfg.channels) + "x" +
                         std::to_string(side) + "x" + std::to_string(side));
  }
  const std::size_t M = cfg.patch_grid, p = cfg.patch_size, dim = cfg.patch_dim();
  std::vector<float> out(M * M * dim);
  for (std::size_t py = 0; py < M; ++py) {
    for (std::size_t px = 0; px < M; ++px) {
      float* dst = out.data() + (py * M + px) * dim;
      for (std::size_t c = 0; c < cfg.channels; ++c) {
        for (std::size_t y = 0; y < p; ++y) {
          for (std::size_t x = 0; x < p; ++x) {
            *dst++ = img.at(c, py * p + y, px * p + x);
          }
        }
      }
    }
  }
  return Tensor({M * M, dim}, std::move(out));
}

Tensor encode_image_prepared(Graph* g, const EncoderWeights& w, const ModelConfig& cfg,
                             const ImageGrid& img, const PromptPack* prompts) {
  const bool use_prompts = prompts && !prompts->empty();
  if (use_prompts) prompts->check(cfg);
  const Tensor patches = patchify(img, cfg);
  const Tensor embedded = ops::matmul(g, patches, w.vision.patch_embedding);
  const Tensor parts[] = {w.vision.class_token, embedded};
  Tensor x = ops::add(g, ops::concat(g, parts, 0), w.vision.positional);
  x = ops::layernorm(g, x, w.vision.ln_pre_gain, w.vision.ln_pre_bias, cfg.ln_eps);
  std::span<const Tensor> tokens;
  if (use_prompts) tokens = prompts->vision;
  x = run_layers(g, w.vision.layers, cfg, x, tokens, cfg.num_patches() + 1, Tensor{}, Tensor{});
  Tensor cls = ops::slice(g, x, 0, 0, 1);
  cls = ops::layernorm(g, cls, w.vision.ln_post_gain, w.vision.ln_post_bias, cfg.ln_eps);
  return ops::reshape(g, ops::matmul(g, cls, w.vision.projection), {cfg.d_joint});
}

Tensor encode_image(Graph* g, const EncoderWeights& w, const ModelConfig& cfg,
                    const ImageGrid& img, const PromptPack* prompts, const AdapterConfig* adapter) {
  if (adapter) return encode_image_prepared(g, w, cfg, adapt(img, *adapter), prompts);
  return encode_image_prepared(g, w, cfg, img, prompts);
}

const char* to_string(DeepMode m) { return m == DeepMode::fresh ? "fresh" : "carried"; }
const char* to_string(PromptInit m) {
  return m == PromptInit::random_gauss ? "random_gauss" : "embed_text";
}

}  // namespace aple
