#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "xfer/corpus/jsonl.hpp"
#include "xfer/corpus/synthetic.hpp"
#include "xfer/corpus/tokenizer.hpp"

using namespace xfer;
using namespace xfer::corpus;

namespace {

TaskSpec classification_spec() {
  return {"pairs", TaskFormat::classification, std::vector<std::string>{"no", "yes"}, "accuracy", {"en"}, true};
}

SyntheticWorldConfig small_world(std::uint64_t seed = 7) {
  SyntheticWorldConfig c;
  c.seed = seed;
  c.num_languages = 3;
  c.vocab_size_per_language = 120;
  c.corpus_sentences_per_language = 200;
  c.task_train_size = 50;
  c.task_dev_size = 20;
  c.task_test_size = 20;
  c.retrieval_size = 15;
  c.retrieval_distractor_count = 5;
  c.parallel_pairs_per_language = 40;
  c.num_topics = 3;
  return c;
}

}  // namespace

TEST(TaskSpec, LabelSetPresentExactlyForLabelledFormats) {
  TaskSpec s = classification_spec();
  EXPECT_NO_THROW(s.validate());
  s.label_set.reset();
  EXPECT_THROW(s.validate(), ConfigError);
  TaskSpec r{"r", TaskFormat::retrieval, std::nullopt, "retrieval_accuracy", {"en"}, true};
  EXPECT_THROW(r.validate(), ConfigError);
  r.has_train = false;
  EXPECT_NO_THROW(r.validate());
}

TEST(LoadJsonl, WellFormedClassificationFile) {
  std::istringstream in(
      R"({"id":"1","text_a":"a b","label":"yes"}
{"id":"2","text_a":"c d","text_b":"e","label":"no"}
{"id":"3","text_a":"f","label":"yes","split":"train"}
)");
  const Dataset ds = load_jsonl_task(in, classification_spec());
  ASSERT_EQ(ds.size("train"), 3u);
  EXPECT_EQ(std::get<ClassificationExample>(ds.at("train")[1]).text_b.value(), "e");
}

TEST(LoadJsonl, SplitNamesArePreserved) {
  std::istringstream in(
      R"({"id":"1","text_a":"a","label":"yes","split":"train"}
{"id":"2","text_a":"b","label":"no","split":"dev"}
{"id":"3","text_a":"c","label":"no","split":"test.l1"}
)");
  const Dataset ds = load_jsonl_task(in, classification_spec());
  EXPECT_EQ(ds.size("train"), 1u);
  EXPECT_EQ(ds.size("dev"), 1u);
  EXPECT_EQ(ds.size("test.l1"), 1u);
}

TEST(LoadJsonl, SpanOffsetMismatchIsRejectedWithLine) {
  TaskSpec spec{"qa", TaskFormat::span_extraction, std::nullopt, "span_f1_em", {"en"}, true};
  std::istringstream in(
      R"({"id":"1","context":"the cat sat","question":"who","answers":[{"text":"cat","start_char":4}]}
{"id":"2","context":"the cat sat","question":"who","answers":[{"text":"cat","start_char":3}]}
)");
  try {
    load_jsonl_task(in, spec);
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(LoadJsonl, TaggingLengthMismatchNamesLine) {
  TaskSpec spec{"pos", TaskFormat::tagging, std::vector<std::string>{"N", "V"}, "token_f1", {"en"}, true};
  std::istringstream in(
      R"({"id":"1","words":["a","b"],"tags":["N","V"]}
{"id":"2","words":["a","b","c"],"tags":["N","V"]}
)");
  try {
    load_jsonl_task(in, spec);
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(LoadJsonl, MissingFieldAndUnknownLabel) {
  std::istringstream missing(R"({"id":"1","label":"yes"})");
  EXPECT_THROW(load_jsonl_task(missing, classification_spec()), SchemaError);
  std::istringstream unknown(R"({"id":"1","text_a":"x","label":"maybe"})");
  EXPECT_THROW(load_jsonl_task(unknown, classification_spec()), SchemaError);
}

TEST(LoadJsonl, MissingTrainSplitIsConfigurationError) {
  std::istringstream in(R"({"id":"1","text_a":"a","label":"yes","split":"dev"})");
  EXPECT_THROW(load_jsonl_task(in, classification_spec()), ConfigError);
}

TEST(LoadJsonl, RetrievalDefaultsToTestSplit) {
  TaskSpec spec{"tat", TaskFormat::retrieval, std::nullopt, "retrieval_accuracy", {"en", "l1"}, false};
  std::istringstream in(R"({"id":"1","sentence":"x y","language":"en","pair_id":"p1"})");
  const Dataset ds = load_jsonl_task(in, spec);
  EXPECT_EQ(ds.size("test"), 1u);
}

TEST(LoadJsonl, RoundTripsThroughWriter) {
  const auto world = gen_synthetic_world(small_world());
  for (const auto& [name, ds] : world.tasks()) {
    std::ostringstream out;
    write_jsonl(out, ds);
    std::istringstream in(out.str());
    const Dataset back = load_jsonl_task(in, ds.spec);
    ASSERT_EQ(back.splits.size(), ds.splits.size()) << name;
    for (const auto& [split, exs] : ds.splits) {
      ASSERT_EQ(back.size(split), exs.size()) << name << "/" << split;
      EXPECT_EQ(to_json(back.at(split).front()), to_json(exs.front()));
    }
  }
}

TEST(Tokenizer, EmptyTextIsClsSep) {
  const std::vector<std::string> lex = {"alpha", "beta"};
  Tokenizer tok(lex, 1, 0.5);
  const auto row = tok.encode(std::string_view(""));
  EXPECT_EQ(row.ids, (std::vector<TokenId>{special::cls, special::sep}));
  EXPECT_TRUE(row.word_starts.empty());
}

TEST(Tokenizer, UnknownWordIsSingleUnk) {
  const std::vector<std::string> lex = {"alpha", "beta"};
  Tokenizer tok(lex, 1, 1.0);
  const auto row = tok.encode(std::string_view("alpha zzzzz beta"));
  ASSERT_EQ(row.word_starts.size(), 3u);
  EXPECT_EQ(row.ids[row.word_starts[1]], special::unk);
  EXPECT_EQ(row.word_starts[2] - row.word_starts[1], 1u);
  EXPECT_EQ(tok.decode(row.ids), "alpha [UNK] beta");
  EXPECT_EQ(tok.normalize("alpha  zzzzz\tbeta"), "alpha [UNK] beta");
}

TEST(Tokenizer, SplitProbabilityOneSplitsEveryLongWord) {
  const std::vector<std::string> lex = {"alpha", "beta", "x"};
  Tokenizer tok(lex, 3, 1.0);
  EXPECT_EQ(tok.encode_word("alpha").size(), 2u);
  EXPECT_EQ(tok.encode_word("x").size(), 1u);
  EXPECT_EQ(tok.piece(tok.encode_word("beta")[1]).substr(0, 2), "##");
}

TEST(Tokenizer, RoundTripAndAlignmentOverGeneratedSentences) {
  const auto world = gen_synthetic_world(small_world());
  const auto words = world.all_words();
  Tokenizer tok(words, 11, 0.5);
  SeededRng rng(5);
  std::size_t checked = 0;
  for (std::size_t i = 0; i < 1000; ++i) {
    const auto& lang = world.languages()[i % world.languages().size()];
    const std::string s = world.realize(world.sample_sentence(rng), world.language_index(lang));
    const auto row = tok.encode(std::string_view(s));
    ASSERT_EQ(tok.decode(row.ids), tok.normalize(s));
    const auto ws = split_whitespace(s);
    ASSERT_EQ(row.word_starts.size(), ws.size());
    ASSERT_EQ(row.word_starts.front(), 1u);
    for (std::size_t k = 1; k < row.word_starts.size(); ++k) ASSERT_LT(row.word_starts[k - 1], row.word_starts[k]);
    ++checked;
  }
  EXPECT_EQ(checked, 1000u);
}

TEST(Tokenizer, TruncationDropsWholeWordsAndFlags) {
  const std::vector<std::string> lex = {"aa", "bb", "cc", "dd"};
  Tokenizer tok(lex, 1, 0.0);
  const auto row = tok.encode(std::string_view("aa bb cc dd"), 4);
  EXPECT_TRUE(row.truncated);
  EXPECT_EQ(row.ids.size(), 4u);
  EXPECT_EQ(row.words_kept, 2u);
  EXPECT_EQ(row.ids.back(), special::sep);
}

TEST(Tokenizer, PairEncodingCarriesSegments) {
  const std::vector<std::string> lex = {"aa", "bb", "cc"};
  Tokenizer tok(lex, 1, 0.0);
  const std::vector<std::string> a = {"aa", "bb"}, b = {"cc"};
  const auto row = tok.encode_pair(a, b);
  EXPECT_EQ(row.ids.size(), 6u);
  EXPECT_EQ(row.type_ids, (std::vector<std::int8_t>{0, 0, 0, 0, 1, 1}));
  EXPECT_EQ(row.word_starts, (std::vector<std::size_t>{1, 2, 4}));
}

TEST(Batch, AttentionMaskIsPrefix) {
  const std::vector<std::string> lex = {"aa", "bb", "cc"};
  Tokenizer tok(lex, 1, 0.0);
  std::vector<EncodedRow> rows = {tok.encode(std::string_view("aa")), tok.encode(std::string_view("aa bb cc"))};
  const auto batch = make_batch(rows, 7);
  EXPECT_EQ(batch.length, 7u);
  for (std::size_t b = 0; b < batch.batch; ++b) {
    bool seen_zero = false;
    for (std::size_t t = 0; t < batch.length; ++t) {
      if (!batch.mask(b, t)) seen_zero = true;
      else ASSERT_FALSE(seen_zero);
    }
  }
  EXPECT_EQ(batch.lengths, (std::vector<std::size_t>{3, 5}));
}

TEST(SyntheticWorld, SingleLanguageHasIdentityPairs) {
  auto c = small_world();
  c.num_languages = 1;
  const auto world = gen_synthetic_world(c);
  ASSERT_EQ(world.pairs().size(), 1u);
  for (const auto& [s, t] : world.pairs().at("en")) EXPECT_EQ(s, t);
}

TEST(SyntheticWorld, RegenerationIsByteIdentical) {
  const auto a = gen_synthetic_world(small_world()).serialize();
  const auto b = gen_synthetic_world(small_world()).serialize();
  EXPECT_EQ(a, b);
  const auto c = gen_synthetic_world(small_world(8)).serialize();
  EXPECT_NE(a.at("corpus/en.txt"), c.at("corpus/en.txt"));
}

TEST(SyntheticWorld, CipherIsBijective) {
  const auto world = gen_synthetic_world(small_world());
  const auto& langs = world.languages();
  for (const auto& from : langs) {
    for (const auto& to : langs) {
      std::set<std::string> images;
      std::size_t domain = 0;
      for (const auto& w : world.all_words()) {
        // domain: words of `from` (shared numerals belong to every language)
        if (world.cipher(w, from, from) != w) continue;
        const auto img = world.cipher(w, from, to);
        if (img == w && from != to && !std::isdigit(static_cast<unsigned char>(w[0]))) continue;  // other language
        ++domain;
        images.insert(img);
        EXPECT_EQ(world.cipher(img, to, from), w);
      }
      EXPECT_EQ(images.size(), domain);
    }
  }
}

TEST(SyntheticWorld, ParallelPairsAreTokenwiseCiphers) {
  const auto world = gen_synthetic_world(small_world());
  for (const auto& [lang, pairs] : world.pairs()) {
    for (const auto& [s, t] : pairs) {
      EXPECT_EQ(world.cipher_sentence(s, "en", lang), t);
      EXPECT_EQ(world.cipher_sentence(t, lang, "en"), s);
    }
  }
}

TEST(SyntheticWorld, SpanAnswersAreRecoverable) {
  const auto world = gen_synthetic_world(small_world());
  for (const auto& [split, exs] : world.task("qa").splits)
    for (const auto& ex : exs) {
      const auto& e = std::get<SpanExample>(ex);
      for (const auto& a : e.answers) EXPECT_EQ(e.context.substr(a.start_char, a.text.size()), a.text);
    }
}

TEST(SyntheticWorld, DerivedTasksSatisfyInvariants) {
  const auto world = gen_synthetic_world(small_world());
  for (const auto& [name, ds] : world.tasks()) {
    EXPECT_NO_THROW(ds.spec.validate()) << name;
    for (const auto& [split, exs] : ds.splits)
      for (const auto& ex : exs) ASSERT_FALSE(check_example(ex).has_value()) << name << "/" << split;
  }
  EXPECT_EQ(world.task("paraphrase").size("train"), 50u);
  EXPECT_EQ(world.task("wordclass").size("test.l2"), 20u);
}

TEST(SyntheticWorld, RetrievalSplitsAreDisjoint) {
  const auto world = gen_synthetic_world(small_world());
  for (const char* name : {"tatoeba", "bucc"}) {
    const auto& ds = world.task(name);
    std::set<std::string> dev_pairs, dev_sentences;
    for (const auto& ex : ds.at("dev")) {
      const auto& r = std::get<RetrievalExample>(ex);
      if (r.pair_id) dev_pairs.insert(*r.pair_id);
      dev_sentences.insert(r.sentence);
    }
    for (const auto& ex : ds.at("test")) {
      const auto& r = std::get<RetrievalExample>(ex);
      if (r.pair_id) {
        EXPECT_FALSE(dev_pairs.count(*r.pair_id));
      }
      if (r.language == "en") {
        EXPECT_FALSE(dev_sentences.count(r.sentence));
      }
    }
  }
}

TEST(SyntheticWorld, TooSmallVocabularyIsConfigurationError) {
  auto c = small_world();
  c.vocab_size_per_language = 20;
  EXPECT_THROW(gen_synthetic_world(c), ConfigError);
}

TEST(SyntheticWorld, SentenceLengthsRespectRange) {
  const auto world = gen_synthetic_world(small_world());
  for (const auto& [lang, sentences] : world.corpora())
    for (const auto& s : sentences) {
      const auto n = split_whitespace(s).size();
      EXPECT_GE(n, world.config().sentence_length.min);
      EXPECT_LE(n, world.config().sentence_length.max);
    }
}
