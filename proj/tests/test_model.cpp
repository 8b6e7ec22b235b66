#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "xfer/model/bundle.hpp"
#include "xfer/model/checkpoint.hpp"
#include "model_fixtures.hpp"

using namespace xfer;
using namespace xfer::model;
using corpus::TaskFormat;
using corpus::TokenId;
using fixtures::batch_of;
using fixtures::tiny_config;

namespace {

template <typename T>
Mat<T> logits_of(const ModelBundle<T>& m, TaskFormat f, const corpus::TokenizedBatch& b, const HeadInputs& in = {}) {
  const auto fw = m.forward(b);
  return m.head_forward(f, fw, b, in).logits;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("xfer_test_" + name);
}

}  // namespace

TEST(InitEncoder, DeterministicAndSeedSensitive) {
  const auto a = init_encoder<float>(tiny_config(), 1);
  const auto b = init_encoder<float>(tiny_config(), 1);
  const auto c = init_encoder<float>(tiny_config(), 2);
  EXPECT_EQ(a.fingerprint(), b.fingerprint());
  EXPECT_NE(a.fingerprint(), c.fingerprint());
}

TEST(InitEncoder, InvalidConfigRejected) {
  auto c = tiny_config();
  c.num_attention_heads = 3;
  EXPECT_THROW(init_encoder<float>(c, 1), ConfigError);
  c = tiny_config();
  c.vocab_size = 0;
  EXPECT_THROW(init_encoder<float>(c, 1), ConfigError);
}

TEST(Forward, HiddenStateShapeForThreeTokens) {
  const auto m = init_encoder<float>(tiny_config(), 3);
  const auto fw = m.forward(batch_of({{5, 6, 7}}));
  const auto dense = dense_hidden_states<float>(fw);
  ASSERT_EQ(dense.size(), 3u);  // layers + 1
  for (const auto& layer : dense) {
    ASSERT_EQ(layer.size(), 1u);
    EXPECT_EQ(layer[0].rows(), 3);
    EXPECT_EQ(layer[0].cols(), 8);
  }
}

TEST(Forward, BatchShape) {
  const auto m = init_encoder<float>(tiny_config(), 3);
  const auto fw = m.forward(batch_of({{5, 6, 7, 8, 9}, {5, 6}}));
  for (const auto& layer : dense_hidden_states<float>(fw)) {
    ASSERT_EQ(layer.size(), 2u);
    for (const auto& row : layer) {
      EXPECT_EQ(row.rows(), 5);
      EXPECT_EQ(row.cols(), 8);
    }
  }
}

TEST(Forward, DuplicatedExamplesGiveIdenticalRows) {
  const auto m = init_encoder<float>(tiny_config(), 4);
  const auto fw = m.forward(batch_of({{5, 9, 11, 2}, {5, 9, 11, 2}}));
  for (std::size_t l = 0; l < fw.hidden.size(); ++l)
    for (std::size_t t = 0; t < 4; ++t) EXPECT_EQ(fw.at(l, 0, t), fw.at(l, 1, t));
}

TEST(Forward, PadLengthInvariance) {
  auto c = tiny_config();
  c.hidden_size = 16;
  c.num_attention_heads = 4;
  const auto m = init_encoder<float>(c, 5);
  const std::vector<TokenId> row = {1, 7, 8, 9, 2};
  const auto short_fw = m.forward(batch_of({row}, 5));
  const auto long_fw = m.forward(batch_of({row, {1, 3, 3, 3, 3, 3, 3, 3, 2}}, 9));
  for (std::size_t l = 0; l < short_fw.hidden.size(); ++l)
    for (std::size_t t = 0; t < row.size(); ++t)
      EXPECT_LE((short_fw.at(l, 0, t) - long_fw.at(l, 0, t)).cwiseAbs().maxCoeff(), 1e-5f);
}

TEST(Forward, OverlongSequenceIsTruncatedAndFlagged) {
  auto c = tiny_config();
  c.max_sequence_length = 4;
  const auto m = init_encoder<float>(c, 5);
  const auto fw = m.forward(batch_of({{1, 5, 6, 7, 8, 2}}));
  EXPECT_TRUE(fw.layout.truncated);
  EXPECT_EQ(fw.layout.row_length(0), 4u);
}

TEST(Forward, OutOfVocabularyIdRejected) {
  const auto m = init_encoder<float>(tiny_config(), 5);
  EXPECT_THROW(m.forward(batch_of({{1, 99}})), ConfigError);
}

TEST(Heads, MissingHeadIsLifecycleError) {
  const auto m = init_encoder<float>(tiny_config(), 6);
  const auto b = batch_of({{1, 5, 2}});
  const auto fw = m.forward(b);
  try {
    m.head_forward(TaskFormat::tagging, fw, b);
    FAIL();
  } catch (const LifecycleError& e) {
    EXPECT_NE(std::string(e.what()).find("reinit_head"), std::string::npos);
  }
}

TEST(Heads, TaggingGathersOneRowPerWord) {
  auto m = init_encoder<float>(tiny_config(), 7);
  m.reinit_head(TaskFormat::tagging, 1, {"A", "B", "C"});
  // 4 words over 7 subwords: [CLS] w0 w0' w1 w2 w2' w3 w3' [SEP] -> starts 1,3,4,6
  const auto b = batch_of({{1, 5, 6, 7, 8, 9, 10, 11, 2}}, 0, {{1, 3, 4, 6}});
  const auto fw = m.forward(b);
  const auto out = m.head_forward(TaskFormat::tagging, fw, b);
  ASSERT_EQ(out.logits.rows(), 4);
  EXPECT_EQ(out.logits.cols(), 3);
  EXPECT_EQ(out.rows, (std::vector<std::size_t>{1, 3, 4, 6}));
}

TEST(Heads, IdenticalChoicesGiveUniformSoftmax) {
  auto m = init_encoder<float>(tiny_config(), 8);
  m.reinit_head(TaskFormat::multiple_choice, 2);
  const std::vector<TokenId> pair = {1, 5, 6, 2, 9, 10, 2};
  HeadInputs in;
  in.num_choices = 4;
  const auto logits = logits_of(m, TaskFormat::multiple_choice, batch_of({pair, pair, pair, pair}), in);
  ASSERT_EQ(logits.rows(), 1);
  ASSERT_EQ(logits.cols(), 4);
  const Mat<float> p = log_softmax_rows<float>(logits).array().exp().matrix();
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(p(0, i), 0.25f, 1e-6f);
}

TEST(Heads, SpanLogitsAndConstrainedDecoding) {
  auto m = init_encoder<float>(tiny_config(), 9);
  m.reinit_head(TaskFormat::span_extraction, 3);
  const auto b = batch_of({{1, 5, 6, 7, 8, 2}});
  const auto fw = m.forward(b);
  const auto out = m.head_forward(TaskFormat::span_extraction, fw, b);
  EXPECT_EQ(out.logits.cols(), 6);
  EXPECT_EQ(out.end_logits.cols(), 6);

  Mat<float> start(1, 6), end(1, 6);
  start << 0, 1, 0, 0, 9, 0;
  end << 0, 0, 5, 0, 0, 0;  // best unconstrained pair would be start=4, end=2
  const std::vector<bool> allowed(6, true);
  const auto pred = decode_span(start, end, 0, allowed, 30);
  EXPECT_LE(pred.start, pred.end);
  EXPECT_EQ(pred.start, 4u);
  EXPECT_EQ(pred.end, 4u);
  // brute force over all valid pairs
  double best = -1e9;
  for (int s = 0; s < 6; ++s)
    for (int e = s; e < 6; ++e) best = std::max(best, double(start(0, s) + end(0, e)));
  EXPECT_DOUBLE_EQ(pred.score, best);
  EXPECT_EQ(decode_span(start, end, 0, allowed, 1).end, 4u);
}

TEST(SentenceEmbed, MeanOfTwoTokenStates) {
  const auto m = init_encoder<double>(tiny_config(), 10);
  const auto b = batch_of({{7, 8}});
  const auto fw = m.forward(b);
  for (std::size_t layer = 0; layer <= 2; ++layer) {
    const auto e = m.sentence_embed(fw, EmbeddingExtractor{layer});
    const RowVec<double> expect = (fw.at(layer, 0, 0) + fw.at(layer, 0, 1)) / 2.0;
    EXPECT_LE((e.row(0) - expect).cwiseAbs().maxCoeff(), 1e-12);
  }
  EXPECT_THROW(m.sentence_embed(fw, EmbeddingExtractor{3}), ConfigError);
}

TEST(SentenceEmbed, PaddingDoesNotChangeEmbedding) {
  const auto m = init_encoder<float>(tiny_config(), 11);
  const std::vector<TokenId> row = {1, 12, 13, 14, 2};
  const auto a = m.sentence_embed(batch_of({row}, 5), EmbeddingExtractor{2});
  const auto b = m.sentence_embed(batch_of({row, {1, 2}}, 12), EmbeddingExtractor{2});
  EXPECT_LE((a.row(0) - b.row(0)).cwiseAbs().maxCoeff(), 1e-6f);
}

TEST(SentenceEmbed, LayerZeroConstantTokenEqualsItsVector) {
  auto m = init_encoder<double>(tiny_config(), 12);
  m.encoder().position_embedding().value.setZero();
  m.encoder().type_embedding().value.setZero();
  const auto e = m.sentence_embed(batch_of({{9, 9, 9, 9}}), EmbeddingExtractor{0});
  EXPECT_LE((e.row(0) - m.encoder().token_embedding().value.row(9)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(ReinitHead, PreservesEncoderAndOtherHeads) {
  auto m = init_encoder<float>(tiny_config(), 13);
  m.reinit_head(TaskFormat::classification, 1, {"x", "y"});
  m.reinit_head(TaskFormat::span_extraction, 1);
  const auto b = batch_of({{1, 5, 6, 7, 2}, {1, 8, 2}});
  const auto fp = m.fingerprint();
  const auto cls_before = logits_of(m, TaskFormat::classification, b);
  const auto span_before = logits_of(m, TaskFormat::span_extraction, b);

  m.reinit_head(TaskFormat::span_extraction, 2);
  EXPECT_EQ(m.fingerprint(), fp);
  EXPECT_EQ(logits_of(m, TaskFormat::classification, b), cls_before);
  EXPECT_NE(logits_of(m, TaskFormat::span_extraction, b), span_before);
}

TEST(ReinitHead, EqualSeedFromSameStateIsIdentical) {
  auto m = init_encoder<float>(tiny_config(), 14);
  m.reinit_head(TaskFormat::tagging, 5, {"a", "b"});
  const auto b = batch_of({{1, 5, 6, 2}}, 0, {{1, 2}});
  const auto first = logits_of(m, TaskFormat::tagging, b);
  m.reinit_head(TaskFormat::tagging, 5);
  EXPECT_EQ(logits_of(m, TaskFormat::tagging, b), first);
  EXPECT_EQ(m.head(TaskFormat::tagging).labels(), (std::vector<std::string>{"a", "b"}));
}

TEST(Checkpoint, RoundTripIsBitExact) {
  auto m = init_encoder<float>(tiny_config(), 15);
  m.reinit_head(TaskFormat::classification, 3, {"p", "q", "r"});
  m.reinit_head(TaskFormat::mlm, 3);
  const auto path = temp_path("roundtrip.ckpt");
  save_checkpoint(m, path);
  const auto back = load_checkpoint<float>(path);
  EXPECT_EQ(back.fingerprint(), m.fingerprint());
  const auto b = batch_of({{1, 5, 6, 2}});
  EXPECT_EQ(logits_of(back, TaskFormat::classification, b), logits_of(m, TaskFormat::classification, b));
  EXPECT_EQ(serialize_checkpoint(back), serialize_checkpoint(m));
  std::filesystem::remove(path);
}

TEST(Checkpoint, TruncatedFileFailsChecksum) {
  const auto m = init_encoder<float>(tiny_config(), 16);
  std::string bytes = serialize_checkpoint(m);
  EXPECT_THROW(deserialize_checkpoint<float>(bytes.substr(0, bytes.size() / 2)), CheckpointError);
  bytes[bytes.size() / 2] ^= 0x5A;
  EXPECT_THROW(deserialize_checkpoint<float>(bytes), CheckpointError);
  EXPECT_THROW(deserialize_checkpoint<float>(std::string("XFER")), CheckpointError);
}

TEST(Checkpoint, VersionMismatchIsMigrationError) {
  std::string bytes = serialize_checkpoint(init_encoder<float>(tiny_config(), 17));
  bytes[8] = 9;  // version field follows the 8-byte magic
  EXPECT_THROW(deserialize_checkpoint<float>(bytes), CheckpointVersionError);
}

TEST(Checkpoint, ConfigGuardPrintsBothConfigs) {
  const auto bytes = serialize_checkpoint(init_encoder<float>(tiny_config(), 18));
  auto other = tiny_config();
  other.hidden_size = 16;
  try {
    deserialize_checkpoint<float>(bytes, &other);
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("\"hidden_size\":8"), std::string::npos);
    EXPECT_NE(msg.find("\"hidden_size\":16"), std::string::npos);
  }
}

TEST(Checkpoint, FloatCheckpointLoadsIntoDoubleBundle) {
  const auto m = init_encoder<float>(tiny_config(), 19);
  const auto d = deserialize_checkpoint<double>(serialize_checkpoint(m));
  const auto b = batch_of({{1, 4, 2}});
  EXPECT_LE((d.sentence_embed(b, {2}).cast<float>() - m.sentence_embed(b, {2})).cwiseAbs().maxCoeff(), 1e-5f);
}

class GradientCheck : public ::testing::TestWithParam<std::size_t> {};

TEST_P(GradientCheck, AnalyticMatchesCentralDifferences) {
  const auto samples = fixtures::gradient_samples(GetParam());
  ASSERT_EQ(samples.size(), 20u);
  for (const auto& g : samples)
    EXPECT_LT(g.relative_error(), 1e-3) << g.name << "[" << g.index << "] analytic=" << g.analytic
                                        << " numeric=" << g.numeric;
}

INSTANTIATE_TEST_SUITE_P(AllHeads, GradientCheck, ::testing::Range<std::size_t>(0, 5),
                         [](const auto& info) {
                           return std::string(corpus::to_string(fixtures::grad_cases().at(info.param).format));
                         });

TEST(EncoderImmutability, HeadOperationsNeverTouchEncoder) {
  auto m = init_encoder<float>(tiny_config(), 20);
  const auto fp = m.fingerprint();
  const auto b = batch_of({{1, 5, 6, 2}}, 0, {{1, 2}});
  for (auto f : {TaskFormat::classification, TaskFormat::tagging, TaskFormat::span_extraction, TaskFormat::mlm,
                 TaskFormat::multiple_choice}) {
    m.reinit_head(f, 3, {"l0", "l1"});
    HeadInputs in;
    in.num_choices = 1;
    in.mlm_positions = {{0, 1}};
    m.head_forward(f, m.forward(b), b, in);
    EXPECT_EQ(m.fingerprint(), fp);
  }
  m.remove_head(TaskFormat::mlm);
  EXPECT_EQ(m.fingerprint(), fp);
}
