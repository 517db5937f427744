// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "aple/checksum.hpp"
#include "aple/clip_head.hpp"
#include "aple/dataset.hpp"
#include "aple/encoders.hpp"
#include "aple/error.hpp"
#include "aple/ops.hpp"
#include "aple/rng.hpp"
#include "aple/tokenizer.hpp"

using namespace aple;

namespace {

struct Fixture {
  ModelConfig cfg = ModelConfig::desk();
  DatasetSpec spec = DatasetSpec::desk();
  EncoderWeights w = EncoderWeights::init(cfg, 3);
  Vocabulary vocab = Vocabulary::for_classes(spec.class_names());
  ImageGrid img = render_image(spec, 2, 9, 0);
  TokenizedQuery query = tokenize(vocab, class_query("blue checker"), cfg.max_text_len);
};

bool same_bits(const Tensor& a, const Tensor& b) { return checksum(a) == checksum(b); }

}  // namespace

// ---------------------------------------------------------------- tokenizer

TEST(Tokenizer, TemplateAndPadding) {
  const Vocabulary v = Vocabulary::for_classes(std::vector<std::string>{"red disc", "blue square"});
  const TokenizedQuery q = tokenize(v, class_query("Red disc"), 8);
  ASSERT_EQ(q.ids.size(), 8u);
  EXPECT_EQ(q.end_position, 5u);  // a photo of red disc END
  EXPECT_EQ(q.ids[5], kEndToken);
  EXPECT_EQ(q.ids[7], kPadToken);
  EXPECT_EQ(q.ids[3], v.id("red"));
  EXPECT_FALSE(q.truncated);
  EXPECT_EQ(tokenize(v, "a photo of zebra", 8).ids[3], kUnkToken);
  const TokenizedQuery t = tokenize(v, "a photo of a red blue disc square", 5);
  EXPECT_TRUE(t.truncated);
  EXPECT_EQ(t.end_position, 4u);
}

TEST(Tokenizer, VocabularyIsOrderIndependent) {
  const Vocabulary a = Vocabulary::for_classes(std::vector<std::string>{"red disc", "blue square"});
  const Vocabulary b = Vocabulary::for_classes(std::vector<std::string>{"blue square", "red disc"});
  EXPECT_EQ(a.words(), b.words());
  EXPECT_EQ(split_words("A, photo.of"), (std::vector<std::string>{"a", "photo", "of"}));
}

// ---------------------------------------------------------------- encoders

TEST(Encoders, ShapesAndDeterministicInit) {
  Fixture f;
  EXPECT_EQ(encode_text(nullptr, f.w, f.cfg, f.query, nullptr).shape(), (Shape{f.cfg.d_joint}));
  EXPECT_EQ(encode_image(nullptr, f.w, f.cfg, f.img, nullptr, nullptr).shape(), (Shape{f.cfg.d_joint}));
  EXPECT_EQ(patchify(f.img, f.cfg).shape(), (Shape{16, 3 * 8 * 8}));
  EXPECT_EQ(EncoderWeights::init(f.cfg, 3).checksum(), f.w.checksum());
  EXPECT_NE(EncoderWeights::init(f.cfg, 4).checksum(), f.w.checksum());
}

TEST(Encoders, PatchifyOrder) {
  ModelConfig cfg = ModelConfig::desk();
  ImageGrid img = ImageGrid::zeros(32, 32, 3);
  img.at(1, 9, 2) = 0.5f;  // patch (row 1, col 0), channel 1, local (1, 2)
  const Tensor p = patchify(img, cfg);
  EXPECT_EQ(p.at(4 * 192 + 64 + 1 * 8 + 2), 0.5f);
}

TEST(Encoders, EmptyPromptsReproduceZeroShotBitwise) {
  Fixture f;
  const PromptPack none = init_prompts(f.cfg, 0, 1, PromptInit::random_gauss);
  EXPECT_TRUE(none.empty());
  EXPECT_TRUE(same_bits(encode_text(nullptr, f.w, f.cfg, f.query, nullptr),
                        encode_text(nullptr, f.w, f.cfg, f.query, &none)));
  EXPECT_TRUE(same_bits(encode_image(nullptr, f.w, f.cfg, f.img, nullptr, nullptr),
                        encode_image(nullptr, f.w, f.cfg, f.img, &none, nullptr)));
}

TEST(Encoders, PromptsChangeFeaturesOnBothSides) {
  Fixture f;
  const PromptPack p = init_prompts(f.cfg, 2, 1, PromptInit::random_gauss);
  ASSERT_EQ(p.text.size(), f.cfg.prompted_layers());
  EXPECT_EQ(p.text[0].shape(), (Shape{2, f.cfg.d_lang}));
  EXPECT_EQ(p.vision[0].shape(), (Shape{2, f.cfg.d_vis}));
  EXPECT_FALSE(same_bits(encode_text(nullptr, f.w, f.cfg, f.query, nullptr),
                         encode_text(nullptr, f.w, f.cfg, f.query, &p)));
  EXPECT_FALSE(same_bits(encode_image(nullptr, f.w, f.cfg, f.img, nullptr, nullptr),
                         encode_image(nullptr, f.w, f.cfg, f.img, &p, nullptr)));
}

TEST(Encoders, TextIgnoresPaddingContent) {
  // Changing the token at a padded position must not move the feature.
  Fixture f;
  TokenizedQuery q = f.query;
  ASSERT_LT(q.end_position + 1, q.ids.size());
  TokenizedQuery other = q;
  other.ids.back() = f.vocab.id("red");
  EXPECT_TRUE(same_bits(encode_text(nullptr, f.w, f.cfg, q, nullptr), encode_text(nullptr, f.w, f.cfg, other, nullptr)));
}

TEST(Encoders, AdapterChangesOnlyTheImagePath) {
  Fixture f;
  const AdapterConfig ad;
  EXPECT_FALSE(same_bits(encode_image(nullptr, f.w, f.cfg, f.img, nullptr, &ad),
                         encode_image(nullptr, f.w, f.cfg, f.img, nullptr, nullptr)));
  EXPECT_TRUE(same_bits(encode_image(nullptr, f.w, f.cfg, f.img, nullptr, &ad),
                        encode_image_prepared(nullptr, f.w, f.cfg, adapt(f.img, ad), nullptr)));
}

TEST(Encoders, GradientsReachOnlyPrompts) {
  Fixture f;
  PromptPack p = init_prompts(f.cfg, 2, 1, PromptInit::random_gauss);
  p.set_text_trainable(true);
  Graph g;
  const Tensor z = encode_text(&g, f.w, f.cfg, f.query, &p);
  g.backward(ops::sum(&g, z));
  for (const Tensor& t : p.text) EXPECT_TRUE(t.has_grad());
  for (const Tensor& t : p.vision) EXPECT_FALSE(t.has_grad());
  for (const Tensor& t : f.w.tensors()) EXPECT_FALSE(t.has_grad());
}

TEST(Encoders, WeightsAndPromptsRoundTripThroughArchive) {
  Fixture f;
  const EncoderWeights back = EncoderWeights::from_named(f.cfg, f.w.named());
  EXPECT_EQ(back.checksum(), f.w.checksum());
  const PromptPack p = init_prompts(f.cfg, 3, 2, PromptInit::embed_text, &f.w, &f.vocab);
  const PromptPack q = PromptPack::from_named(f.cfg, p.named());
  EXPECT_EQ(q.length, 3u);
  EXPECT_EQ(q.text_checksum(), p.text_checksum());
  EXPECT_EQ(q.vision_checksum(), p.vision_checksum());
  ModelConfig other = f.cfg;
  other.d_lang = 16;
  other.n_heads = 4;
  EXPECT_THROW(p.check(other), DimensionError);
}

TEST(Encoders, EmbedTextInitCopiesTemplateEmbeddings) {
  Fixture f;
  const PromptPack p = init_prompts(f.cfg, 2, 2, PromptInit::embed_text, &f.w, &f.vocab);
  const std::size_t d = f.cfg.d_lang;
  const std::size_t row_a = f.vocab.id("a"), row_photo = f.vocab.id("photo");
  for (std::size_t j = 0; j < d; ++j) {
    EXPECT_EQ(p.text[0].at(j), f.w.text.token_embedding.at(row_a * d + j));
    EXPECT_EQ(p.text[0].at(d + j), f.w.text.token_embedding.at(row_photo * d + j));
  }
  EXPECT_THROW(init_prompts(f.cfg, 2, 2, PromptInit::embed_text), UsageError);
}

TEST(Encoders, CarriedModeReadsFirstTensorOnly) {
  Fixture f;
  f.cfg.deep_mode = DeepMode::carried;
  PromptPack p = init_prompts(f.cfg, 2, 1, PromptInit::random_gauss);
  const Tensor before = encode_text(nullptr, f.w, f.cfg, f.query, &p);
  p.text[1].mutable_data()[0] += 1.0f;
  EXPECT_TRUE(same_bits(before, encode_text(nullptr, f.w, f.cfg, f.query, &p)));
  p.text[0].mutable_data()[0] += 1.0f;
  EXPECT_FALSE(same_bits(before, encode_text(nullptr, f.w, f.cfg, f.query, &p)));
}

TEST(Encoders, ConfigValidationListsEveryIssue) {
  ModelConfig c = ModelConfig::desk();
  c.prompt_depth = 9;
  c.d_lang = 30;  // not divisible by 4 heads
  c.temperature = 0.0f;
  try {
    c.validate();
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.issues().size(), 3u);
  }
  EXPECT_NO_THROW(ModelConfig::vit_b16().validate());
}

// ---------------------------------------------------------------- clip head

TEST(ClipHead, SimilarityIsCosine) {
  const Tensor z({2, 3}, {1, 0, 0, 1, 1, 0});
  const Tensor f({3}, {2, 0, 0});
  const Logits l = similarity(z, f);
  EXPECT_DOUBLE_EQ(l.scores[0], 1.0);
  EXPECT_NEAR(l.scores[1], 1.0 / std::sqrt(2.0), 1e-7);
  EXPECT_THROW(similarity(Tensor({2, 3}, {1, 0, 0, 0, 0, 0}), f), NumericError);
}

TEST(ClipHead, PredictIsTemperatureSoftmax) {
  Logits l;
  l.scores = {0.3, -0.1, 0.2};
  const Prediction p = predict(l, 0.1);
  double z = 0.0;
  for (double s : l.scores) z += std::exp(s / 0.1);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(p.probs[i], std::exp(l.scores[i] / 0.1) / z, 1e-14);
    EXPECT_NEAR(p.log_probs[i], l.scores[i] / 0.1 - std::log(z), 1e-12);
  }
  EXPECT_EQ(p.argmax(), 0u);
  EXPECT_THROW(predict(l, 0.0), ConfigError);
  // Large score gaps at tau = 0.01 stay finite in log space.
  l.scores = {1.0, -1.0, 0.0};
  const Prediction sharp = predict(l, 0.01);
  EXPECT_NEAR(sharp.log_probs[1], -200.0, 1e-9);
  EXPECT_TRUE(std::isfinite(ce_loss(sharp, 1)));
}

TEST(ClipHead, LossIdentities) {
  Rng rng(9);
  for (int t = 0; t < 1000; ++t) {
    Logits a, b;
    for (int c = 0; c < 4; ++c) {
      a.scores.push_back(rng.uniform() * 2 - 1);
      b.scores.push_back(rng.uniform() * 2 - 1);
    }
    const Prediction p = predict(a, 0.05), q = predict(b, 0.05);
    EXPECT_LE(std::abs(kl_loss(p, p)), 1e-9);
    EXPECT_GE(kl_loss(p, q), -1e-9);
    EXPECT_GE(kl_loss(p, q, KlDirection::student_first), -1e-9);
    EXPECT_EQ(stage1_loss(p, 2, q, 0.0), ce_loss(p, 2));
    EXPECT_DOUBLE_EQ(stage1_loss(p, 2, q, 0.5), ce_loss(p, 2) + 0.5 * kl_loss(p, q));
    EXPECT_EQ(stage2_loss(p, 1), ce_loss(p, 1));
  }
  // One-hot with the correct label gives zero CE.
  const Prediction hot = Prediction::from_probs({0.0, 1.0});
  EXPECT_EQ(ce_loss(hot, 1), 0.0);
  EXPECT_THROW(ce_loss(hot, 2), UsageError);
}

TEST(ClipHead, GraphLossesMatchValueLevel) {
  Rng rng(10);
  std::vector<float> fv(3 * 5), zv(4 * 5);
  for (float& v : fv) v = static_cast<float>(rng.normal(0, 1));
  for (float& v : zv) v = static_cast<float>(rng.normal(0, 1));
  const Tensor f({3, 5}, fv), z({4, 5}, zv);
  const std::size_t labels[] = {1, 0, 3};
  const double tau = 0.1;
  const Tensor logits = scaled_cosine_logits(nullptr, f, z, tau);

  std::vector<Prediction> student, teacher;
  double ce = 0.0, kl_tf = 0.0, kl_sf = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    const Tensor row({5}, std::vector<float>(fv.begin() + i * 5, fv.begin() + i * 5 + 5));
    student.push_back(predict(similarity(z, row), tau));
    Logits t;
    for (int c = 0; c < 4; ++c) t.scores.push_back(rng.uniform());
    teacher.push_back(predict(t, tau));
    ce += ce_loss(student.back(), labels[i]) / 3;
    kl_tf += kl_loss(student.back(), teacher.back()) / 3;
    kl_sf += kl_loss(student.back(), teacher.back(), KlDirection::student_first) / 3;
  }
  const Prediction* tp[] = {&teacher[0], &teacher[1], &teacher[2]};
  EXPECT_NEAR(batch_ce(nullptr, logits, labels).item(), ce, 1e-4);
  EXPECT_NEAR(batch_kl(nullptr, logits, tp, KlDirection::teacher_first).item(), kl_tf, 1e-4);
  EXPECT_NEAR(batch_kl(nullptr, logits, tp, KlDirection::student_first).item(), kl_sf, 1e-4);
  const LossTerms s1 = batch_stage1_loss(nullptr, logits, labels, tp, 0.5, KlDirection::teacher_first);
  EXPECT_NEAR(s1.total.item(), s1.ce.item() + 0.5 * s1.kl.item(), 1e-6);
  const LossTerms s2 = batch_stage2_loss(nullptr, logits, labels);
  EXPECT_FALSE(s2.kl.defined());
  EXPECT_EQ(s2.total.item(), s2.ce.item());
}
