#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "xfer/corpus/jsonl.hpp"
#include "xfer/corpus/task.hpp"
#include "xfer/corpus/tokenizer.hpp"
#include "xfer/error.hpp"
#include "xfer/rng.hpp"

namespace xfer::corpus {

struct LengthRange {
  std::size_t min = 4;
  std::size_t max = 12;
};

struct SyntheticWorldConfig {
  std::uint64_t seed = 1;
  std::size_t num_languages = 3;
  std::size_t vocab_size_per_language = 240;
  LengthRange sentence_length{};
  std::size_t corpus_sentences_per_language = 4000;
  double subword_split_probability = 0.3;
  std::size_t retrieval_distractor_count = 50;
  // Sizes of the derived tasks.
  std::size_t num_topics = 6;
  double shared_vocab_fraction = 0.05;  // numerals shared verbatim by all languages
  // Fraction of open-class meanings borrowed from English by every other
  // language. A borrowed meaning reuses the English synonym forms with the
  // two synonyms trading places, so its translation reads like a paraphrase.
  double anchor_fraction = 0.0;
  // Probability that a verb's arguments and a noun's adjective come from
  // their preferred meanings rather than the whole topic.
  double preference_strength = 0.0;
  std::size_t parallel_pairs_per_language = 200;
  std::size_t task_train_size = 2000;
  std::size_t task_dev_size = 300;
  std::size_t task_test_size = 200;
  std::size_t retrieval_size = 100;  // parallel pairs per language per retrieval split
  std::size_t num_choices = 4;

  void validate() const {
    if (num_languages < 1) throw ConfigError("num_languages must be >= 1");
    if (sentence_length.min < 3 || sentence_length.min > sentence_length.max)
      throw ConfigError("sentence_length must satisfy 3 <= min <= max");
    if (sentence_length.min > 14) throw ConfigError("sentence_length.min exceeds the grammar's longest sentence (14)");
    if (subword_split_probability < 0.0 || subword_split_probability > 1.0)
      throw ConfigError("subword_split_probability must lie in [0, 1]");
    if (shared_vocab_fraction < 0.0 || shared_vocab_fraction >= 0.5)
      throw ConfigError("shared_vocab_fraction must lie in [0, 0.5)");
    if (anchor_fraction < 0.0 || anchor_fraction > 1.0) throw ConfigError("anchor_fraction must lie in [0, 1]");
    if (preference_strength < 0.0 || preference_strength > 1.0)
      throw ConfigError("preference_strength must lie in [0, 1]");
    if (num_topics < 1) throw ConfigError("num_topics must be >= 1");
    if (num_choices < 2) throw ConfigError("num_choices must be >= 2");
  }
};

inline nlohmann::json to_json(const SyntheticWorldConfig& c) {
  return {{"seed", c.seed},
          {"num_languages", c.num_languages},
          {"vocab_size_per_language", c.vocab_size_per_language},
          {"sentence_length", {{"min", c.sentence_length.min}, {"max", c.sentence_length.max}}},
          {"corpus_sentences_per_language", c.corpus_sentences_per_language},
          {"subword_split_probability", c.subword_split_probability},
          {"retrieval_distractor_count", c.retrieval_distractor_count},
          {"num_topics", c.num_topics},
          {"shared_vocab_fraction", c.shared_vocab_fraction},
          {"anchor_fraction", c.anchor_fraction},
          {"preference_strength", c.preference_strength},
          {"parallel_pairs_per_language", c.parallel_pairs_per_language},
          {"task_train_size", c.task_train_size},
          {"task_dev_size", c.task_dev_size},
          {"task_test_size", c.task_test_size},
          {"retrieval_size", c.retrieval_size},
          {"num_choices", c.num_choices}};
}

inline SyntheticWorldConfig world_config_from_json(const nlohmann::json& j) {
  SyntheticWorldConfig c;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("seed", c.seed);
  get("num_languages", c.num_languages);
  get("vocab_size_per_language", c.vocab_size_per_language);
  if (j.contains("sentence_length")) {
    c.sentence_length.min = j.at("sentence_length").value("min", c.sentence_length.min);
    c.sentence_length.max = j.at("sentence_length").value("max", c.sentence_length.max);
  }
  get("corpus_sentences_per_language", c.corpus_sentences_per_language);
  get("subword_split_probability", c.subword_split_probability);
  get("retrieval_distractor_count", c.retrieval_distractor_count);
  get("num_topics", c.num_topics);
  get("shared_vocab_fraction", c.shared_vocab_fraction);
  get("anchor_fraction", c.anchor_fraction);
  get("preference_strength", c.preference_strength);
  get("parallel_pairs_per_language", c.parallel_pairs_per_language);
  get("task_train_size", c.task_train_size);
  get("task_dev_size", c.task_dev_size);
  get("task_test_size", c.task_test_size);
  get("retrieval_size", c.retrieval_size);
  get("num_choices", c.num_choices);
  c.validate();
  return c;
}

/// Word classes of the shared grammar. They double as the tagging label set,
/// which is preserved under every cipher.
enum class WordClass : std::uint8_t { det, adj, noun, verb, adp, num };
inline constexpr std::size_t kNumClasses = 6;
inline constexpr std::array<const char*, kNumClasses> kClassNames = {"DET", "ADJ", "NOUN", "VERB", "ADP", "NUM"};

inline bool is_open_class(WordClass c) {
  return c == WordClass::adj || c == WordClass::noun || c == WordClass::verb;
}

/// Language-independent token: a word class plus the index of the word within
/// that class. Open-class words come in synonym pairs (indices 2k, 2k+1 share
/// meaning k).
struct LatentToken {
  WordClass cls;
  std::size_t index;

  bool operator==(const LatentToken&) const = default;
};
using LatentSentence = std::vector<LatentToken>;

/// Deterministic multilingual world.
///
/// Every language realizes the same latent grammar with its own lexicon. The
/// lexicons are index-aligned per word class, so the cipher between any two
/// languages maps (class, index) to (class, index) and is a bijection by
/// construction. Numerals are shared verbatim across languages.
class SyntheticWorld {
 public:
  explicit SyntheticWorld(const SyntheticWorldConfig& config) : config_(config) {
    config_.validate();
    build_lexicons();
    generate();
  }

  const SyntheticWorldConfig& config() const noexcept { return config_; }
  const std::vector<std::string>& languages() const noexcept { return languages_; }
  const std::string& source_language() const { return languages_.front(); }

  const std::map<std::string, std::vector<std::string>>& corpora() const noexcept { return corpora_; }
  /// Parallel (source, target) pairs keyed by target language; target = cipher(source).
  const std::map<std::string, std::vector<std::pair<std::string, std::string>>>& pairs() const noexcept {
    return pairs_;
  }
  const std::map<std::string, Dataset>& tasks() const noexcept { return tasks_; }
  const Dataset& task(const std::string& name) const {
    auto it = tasks_.find(name);
    if (it == tasks_.end()) throw ConfigError("synthetic world has no task '" + name + "'");
    return it->second;
  }

  /// Every surface word of every language (shared words once), sorted.
  std::vector<std::string> all_words() const {
    std::set<std::string> words;
    for (const auto& per_lang : lexicon_)
      for (const auto& cls : per_lang)
        for (const auto& w : cls) words.insert(w);
    return {words.begin(), words.end()};
  }

  std::size_t language_index(const std::string& code) const {
    auto it = std::find(languages_.begin(), languages_.end(), code);
    if (it == languages_.end()) throw ConfigError("unknown language '" + code + "'");
    return static_cast<std::size_t>(it - languages_.begin());
  }

  /// Maps one word between languages. Unknown words map to themselves.
  std::string cipher(const std::string& word, const std::string& from, const std::string& to) const {
    const std::size_t f = language_index(from);
    const std::size_t t = language_index(to);
    auto it = word_index_[f].find(word);
    if (it == word_index_[f].end()) return word;
    const auto& [cls, idx] = it->second;
    return lexicon_[t][static_cast<std::size_t>(cls)][idx];
  }

  std::string cipher_sentence(const std::string& sentence, const std::string& from, const std::string& to) const {
    std::string out;
    for (const auto& w : split_whitespace(sentence)) {
      if (!out.empty()) out += ' ';
      out += cipher(w, from, to);
    }
    return out;
  }

  std::vector<std::string> realize_words(const LatentSentence& s, std::size_t lang) const {
    std::vector<std::string> out;
    out.reserve(s.size());
    for (const auto& tok : s) out.push_back(lexicon_[lang][static_cast<std::size_t>(tok.cls)][tok.index]);
    return out;
  }
  std::string realize(const LatentSentence& s, std::size_t lang) const { return join(realize_words(s, lang)); }

  /// Serialized form: relative path -> file contents. The manifest lists the
  /// per-language corpora, pair files, and derived-task files.
  std::map<std::string, std::string> serialize() const {
    std::map<std::string, std::string> files;
    nlohmann::json manifest;
    manifest["schema_version"] = 1;
    manifest["config"] = to_json(config_);
    manifest["languages"] = languages_;
    manifest["source_language"] = source_language();
    manifest["lexicon"] = "lexicon.json";

    nlohmann::json lex;
    for (std::size_t l = 0; l < languages_.size(); ++l)
      for (std::size_t c = 0; c < kNumClasses; ++c) lex[languages_[l]][kClassNames[c]] = lexicon_[l][c];
    files["lexicon.json"] = lex.dump(1) + "\n";

    for (const auto& [lang, sentences] : corpora_) {
      const std::string path = "corpus/" + lang + ".txt";
      std::string body;
      for (const auto& s : sentences) body += s + "\n";
      files[path] = std::move(body);
      manifest["corpora"][lang] = path;
    }
    for (const auto& [lang, ps] : pairs_) {
      const std::string path = "pairs/" + source_language() + "-" + lang + ".tsv";
      std::string body;
      for (const auto& [s, t] : ps) body += s + "\t" + t + "\n";
      files[path] = std::move(body);
      manifest["pairs"][lang] = path;
    }
    for (const auto& [name, ds] : tasks_) {
      const std::string path = "tasks/" + name + ".jsonl";
      std::ostringstream out;
      write_jsonl(out, ds);
      files[path] = out.str();
      manifest["tasks"][name] = {{"path", path}, {"spec", to_json(ds.spec)}};
    }
    files["world.json"] = manifest.dump(1) + "\n";
    return files;
  }

  void write(const std::filesystem::path& dir) const {
    for (const auto& [rel, body] : serialize()) {
      const auto path = dir / rel;
      std::filesystem::create_directories(path.parent_path());
      std::ofstream out(path, std::ios::binary);
      if (!out) throw ConfigError("cannot write " + path.string());
      out << body;
    }
  }

  /// Independent latent sentence draw, exposed for tests and tools.
  LatentSentence sample_sentence(SeededRng& rng, bool require_object = false) const {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      const std::size_t topic = rng.below(config_.num_topics);
      const LatentToken verb = open_word(rng, WordClass::verb, topic);
      const std::size_t v = verb.index / 2;
      LatentSentence s;
      noun_phrase(rng, topic, s, &subject_pref_[v]);
      s.push_back(verb);
      if (require_object || rng.bernoulli(0.7)) noun_phrase(rng, topic, s, &object_pref_[v]);
      for (int k = 0; k < 2 && rng.bernoulli(0.35); ++k) {
        s.push_back({WordClass::adp, rng.below(class_size(WordClass::adp))});
        noun_phrase(rng, topic, s);
      }
      if (rng.bernoulli(0.3)) s.push_back({WordClass::num, rng.below(class_size(WordClass::num))});
      if (s.size() >= config_.sentence_length.min && s.size() <= config_.sentence_length.max) return s;
    }
    throw ConfigError("sentence_length range cannot be satisfied by the grammar");
  }

  std::size_t class_size(WordClass c) const { return lexicon_[0][static_cast<std::size_t>(c)].size(); }

 private:
  static std::string join(const std::vector<std::string>& words) {
    std::string out;
    for (const auto& w : words) {
      if (!out.empty()) out += ' ';
      out += w;
    }
    return out;
  }

  void build_lexicons() {
    const std::size_t n = config_.num_languages;
    languages_.push_back("en");
    for (std::size_t l = 1; l < n; ++l) languages_.push_back("l" + std::to_string(l));

    const std::size_t v = config_.vocab_size_per_language;
    const std::size_t num_det = 6;
    const std::size_t num_adp = 8;
    const std::size_t num_num = std::max<std::size_t>(2, static_cast<std::size_t>(config_.shared_vocab_fraction * v));
    if (v < num_det + num_adp + num_num + 6 * config_.num_topics * 3)
      throw ConfigError("vocab_size_per_language " + std::to_string(v) +
                        " is too small to build class-preserving bijections for " +
                        std::to_string(config_.num_topics) + " topics");
    const std::size_t open = v - num_det - num_adp - num_num;
    auto even = [](std::size_t x) { return x - (x % 2); };
    const std::size_t num_noun = even(open * 45 / 100);
    const std::size_t num_verb = even(open * 30 / 100);
    const std::size_t num_adj = even(open - num_noun - num_verb);
    const std::array<std::size_t, kNumClasses> sizes = {num_det, num_adj, num_noun, num_verb, num_adp, num_num};

    SeededRng rng = SeededRng(config_.seed).derive("lexicon");
    std::set<std::string> used = {"a", "an", "the"};
    auto fresh_word = [&](std::size_t min_len, std::size_t max_len) {
      static constexpr std::string_view kConsonants = "bcdfghjklmnprstvz";
      static constexpr std::string_view kVowels = "aeiou";
      for (;;) {
        const std::size_t len = min_len + rng.below(max_len - min_len + 1);
        std::string w;
        for (std::size_t i = 0; i < len; ++i)
          w += (i % 2 == 0) ? kConsonants[rng.below(kConsonants.size())] : kVowels[rng.below(kVowels.size())];
        if (used.insert(w).second) return w;
      }
    };

    lexicon_.assign(n, std::vector<std::vector<std::string>>(kNumClasses));
    std::vector<std::string> numerals;
    for (std::size_t i = 0; i < num_num; ++i) numerals.push_back(std::to_string(i * 7 + 3));
    for (std::size_t l = 0; l < n; ++l) {
      for (std::size_t c = 0; c < kNumClasses; ++c) {
        if (static_cast<WordClass>(c) == WordClass::num) {
          lexicon_[l][c] = numerals;
          continue;
        }
        const bool closed = c == static_cast<std::size_t>(WordClass::det) || c == static_cast<std::size_t>(WordClass::adp);
        for (std::size_t i = 0; i < sizes[c]; ++i) lexicon_[l][c].push_back(closed ? fresh_word(2, 3) : fresh_word(3, 7));
      }
    }
    SeededRng anchor_rng = SeededRng(config_.seed).derive("anchors");
    for (WordClass cls : {WordClass::adj, WordClass::noun, WordClass::verb}) {
      const auto c = static_cast<std::size_t>(cls);
      std::vector<std::size_t> meanings(sizes[c] / 2);
      std::iota(meanings.begin(), meanings.end(), std::size_t{0});
      anchor_rng.shuffle(meanings);
      const auto count = static_cast<std::size_t>(std::llround(config_.anchor_fraction * meanings.size()));
      for (std::size_t k = 0; k < count; ++k)
        for (std::size_t l = 1; l < n; ++l)
          for (std::size_t i : {2 * meanings[k], 2 * meanings[k] + 1}) lexicon_[l][c][i] = lexicon_[0][c][i ^ 1];
    }
    build_preferences(sizes[static_cast<std::size_t>(WordClass::verb)] / 2,
                      sizes[static_cast<std::size_t>(WordClass::noun)] / 2,
                      sizes[static_cast<std::size_t>(WordClass::adj)] / 2);
    word_index_.assign(n, {});
    for (std::size_t l = 0; l < n; ++l)
      for (std::size_t c = 0; c < kNumClasses; ++c)
        for (std::size_t i = 0; i < lexicon_[l][c].size(); ++i)
          word_index_[l].emplace(lexicon_[l][c][i], WordRef{static_cast<WordClass>(c), i});
  }

  // Each verb meaning prefers a few subject and object nouns of its topic, and
  // each noun meaning a few adjectives, so co-occurrence separates meanings
  // that share a topic.
  void build_preferences(std::size_t verbs, std::size_t nouns, std::size_t adjs) {
    SeededRng rng = SeededRng(config_.seed).derive("preferences");
    const std::size_t topics = config_.num_topics;
    auto pick = [&](std::size_t topic, std::size_t meanings) {
      std::vector<std::size_t> pool;
      for (std::size_t m = topic; m < meanings; m += topics) pool.push_back(m);
      rng.shuffle(pool);
      pool.resize(std::min<std::size_t>(pool.size(), 2));
      std::sort(pool.begin(), pool.end());
      return pool;
    };
    subject_pref_.clear();
    object_pref_.clear();
    adjective_pref_.clear();
    for (std::size_t v = 0; v < verbs; ++v) {
      subject_pref_.push_back(pick(v % topics, nouns));
      object_pref_.push_back(pick(v % topics, nouns));
    }
    for (std::size_t m = 0; m < nouns; ++m) adjective_pref_.push_back(pick(m % topics, adjs));
  }

  LatentToken open_word(SeededRng& rng, WordClass cls, std::size_t topic) const {
    const std::size_t meanings = class_size(cls) / 2;
    std::size_t meaning;
    const std::size_t per_topic = meanings / config_.num_topics;
    if (per_topic > 0 && rng.bernoulli(0.85)) {
      meaning = topic + config_.num_topics * rng.below(per_topic);
    } else {
      meaning = rng.below(meanings);
    }
    return {cls, 2 * meaning + rng.below(2)};
  }

  /// Picks one of `prefs` with probability preference_strength, otherwise a
  /// topical word. Synonyms are drawn uniformly either way.
  LatentToken preferred_word(SeededRng& rng, WordClass cls, std::size_t topic,
                             const std::vector<std::size_t>* prefs) const {
    if (prefs && !prefs->empty() && rng.bernoulli(config_.preference_strength))
      return {cls, 2 * (*prefs)[rng.below(prefs->size())] + rng.below(2)};
    return open_word(rng, cls, topic);
  }

  void noun_phrase(SeededRng& rng, std::size_t topic, LatentSentence& s,
                   const std::vector<std::size_t>* noun_prefs = nullptr) const {
    s.push_back({WordClass::det, rng.below(class_size(WordClass::det))});
    const LatentToken noun = preferred_word(rng, WordClass::noun, topic, noun_prefs);
    if (rng.bernoulli(0.4)) s.push_back(preferred_word(rng, WordClass::adj, topic, &adjective_pref_[noun.index / 2]));
    s.push_back(noun);
  }

  /// Same meaning, resampled synonyms; at least one open-class word changes
  /// when the sentence has one.
  LatentSentence paraphrase(SeededRng& rng, const LatentSentence& s) const {
    LatentSentence out = s;
    std::vector<std::size_t> open_positions;
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (!is_open_class(out[i].cls)) continue;
      open_positions.push_back(i);
      if (rng.bernoulli(0.5)) out[i].index ^= 1;
    }
    if (!open_positions.empty() && out == s) {
      const auto i = open_positions[rng.below(open_positions.size())];
      out[i].index ^= 1;
    }
    return out;
  }

  /// Meaning-changing edit: one or two open-class words replaced by a word of
  /// another meaning in the same class.
  LatentSentence perturb(SeededRng& rng, const LatentSentence& s) const {
    LatentSentence out = s;
    std::vector<std::size_t> open_positions;
    for (std::size_t i = 0; i < out.size(); ++i)
      if (is_open_class(out[i].cls)) open_positions.push_back(i);
    const std::size_t edits = 1 + rng.below(2);
    for (std::size_t e = 0; e < edits && !open_positions.empty(); ++e) {
      const auto i = open_positions[rng.below(open_positions.size())];
      const std::size_t meanings = class_size(out[i].cls) / 2;
      const std::size_t old_meaning = out[i].index / 2;
      std::size_t m = rng.below(meanings - 1);
      if (m >= old_meaning) ++m;
      out[i].index = 2 * m + rng.below(2);
    }
    return out;
  }

  void generate() {
    const SeededRng root(config_.seed);
    const std::size_t n = languages_.size();

    for (std::size_t l = 0; l < n; ++l) {
      SeededRng rng = root.derive("corpus/" + languages_[l]);
      auto& out = corpora_[languages_[l]];
      for (std::size_t i = 0; i < config_.corpus_sentences_per_language; ++i) out.push_back(realize(sample_sentence(rng), l));
    }
    {
      SeededRng rng = root.derive("pairs");
      for (std::size_t l = 0; l < n; ++l) {
        auto& out = pairs_[languages_[l]];
        for (std::size_t i = 0; i < config_.parallel_pairs_per_language; ++i) {
          const auto s = sample_sentence(rng);
          out.emplace_back(realize(s, 0), realize(s, l));
        }
      }
    }
    generate_paraphrase(root.derive("task/paraphrase"));
    generate_tagging(root.derive("task/wordclass"));
    generate_qa(root.derive("task/qa"));
    generate_choice(root.derive("task/choice"));
    generate_retrieval(root.derive("task/retrieval"));
  }

  /// Splits with per-language evaluation copies: train/dev hold the source
  /// language; test (and dev) exist for every language.
  template <typename MakeExample>
  void fill_splits(Dataset& ds, SeededRng& rng, MakeExample&& make) {
    const std::size_t n = languages_.size();
    for (std::size_t i = 0; i < config_.task_train_size; ++i) ds.splits["train"].push_back(make(rng, "train-" + std::to_string(i), 0));
    for (const char* split : {"dev", "test"}) {
      const std::size_t count = std::string(split) == "dev" ? config_.task_dev_size : config_.task_test_size;
      for (std::size_t i = 0; i < count; ++i) {
        // one latent draw realized in every language
        SeededRng item = rng.derive(std::string(split) + std::to_string(i));
        for (std::size_t l = 0; l < n; ++l) {
          SeededRng copy = item;
          ds.splits[split_name(split, languages_[l])].push_back(
              make(copy, std::string(split) + "-" + std::to_string(i), l));
        }
      }
    }
  }

  std::vector<std::string> class_labels() const { return {kClassNames.begin(), kClassNames.end()}; }

  void generate_paraphrase(SeededRng rng) {
    Dataset ds;
    ds.spec = {"paraphrase", TaskFormat::classification, std::vector<std::string>{"different", "paraphrase"},
               std::string(metric_id::accuracy), languages_, true};
    fill_splits(ds, rng, [&](SeededRng& r, const std::string& id, std::size_t lang) -> Example {
      const auto a = sample_sentence(r);
      const bool positive = r.bernoulli(0.5);
      LatentSentence b;
      if (positive) {
        b = paraphrase(r, a);
      } else if (r.bernoulli(0.5)) {
        b = perturb(r, paraphrase(r, a));
      } else {
        b = sample_sentence(r);
      }
      return ClassificationExample{id, realize(a, lang), realize(b, lang), positive ? "paraphrase" : "different"};
    });
    tasks_.emplace(ds.spec.name, std::move(ds));
  }

  void generate_tagging(SeededRng rng) {
    Dataset ds;
    ds.spec = {"wordclass", TaskFormat::tagging, class_labels(), std::string(metric_id::token_f1), languages_, true};
    fill_splits(ds, rng, [&](SeededRng& r, const std::string& id, std::size_t lang) -> Example {
      const auto s = sample_sentence(r);
      TaggingExample ex{id, realize_words(s, lang), {}};
      for (const auto& t : s) ex.tags.emplace_back(kClassNames[static_cast<std::size_t>(t.cls)]);
      return ex;
    });
    tasks_.emplace(ds.spec.name, std::move(ds));
  }

  // Question = subject noun + verb; answer = the object noun phrase.
  void generate_qa(SeededRng rng) {
    Dataset ds;
    ds.spec = {"qa", TaskFormat::span_extraction, std::nullopt, std::string(metric_id::span_f1_em), languages_, true};
    fill_splits(ds, rng, [&](SeededRng& r, const std::string& id, std::size_t lang) -> Example {
      const auto s = sample_sentence(r, /*require_object=*/true);
      const auto words = realize_words(s, lang);
      std::size_t verb = 0;
      while (s[verb].cls != WordClass::verb) ++verb;
      std::size_t end = verb + 1;
      while (s[end].cls != WordClass::noun) ++end;
      std::size_t start_char = 0;
      for (std::size_t i = 0; i <= verb; ++i) start_char += words[i].size() + 1;
      std::vector<std::string> answer(words.begin() + static_cast<std::ptrdiff_t>(verb + 1),
                                      words.begin() + static_cast<std::ptrdiff_t>(end + 1));
      const std::string question = words[verb - 1] + " " + words[verb];
      return SpanExample{id, join(words), question, {{join(answer), start_char}}};
    });
    tasks_.emplace(ds.spec.name, std::move(ds));
  }

  // Translation selection: source-language context, choices in the evaluation
  // language (a paraphrase of the context plus meaning-changed distractors).
  // In the source-language splits this is monolingual paraphrase selection.
  void generate_choice(SeededRng rng) {
    Dataset ds;
    ds.spec = {"choice", TaskFormat::multiple_choice, std::nullopt, std::string(metric_id::accuracy), languages_, true};
    fill_splits(ds, rng, [&](SeededRng& r, const std::string& id, std::size_t lang) -> Example {
      const auto s = sample_sentence(r);
      MultipleChoiceExample ex{id, realize(s, 0), "", {}, r.below(config_.num_choices)};
      for (std::size_t c = 0; c < config_.num_choices; ++c) {
        const auto option = c == ex.answer_index ? paraphrase(r, s) : perturb(r, paraphrase(r, s));
        ex.choices.push_back(realize(option, lang));
      }
      return ex;
    });
    tasks_.emplace(ds.spec.name, std::move(ds));
  }

  void generate_retrieval(SeededRng rng) {
    std::set<std::string> seen;
    auto unique_sentence = [&](SeededRng& r) {
      for (;;) {
        auto s = sample_sentence(r);
        if (seen.insert(realize(s, 0)).second) return s;
      }
    };
    const auto& src = source_language();
    std::vector<std::string> targets(languages_.begin() + 1, languages_.end());
    if (targets.empty()) targets.push_back(src);

    Dataset tatoeba;
    tatoeba.spec = {"tatoeba", TaskFormat::retrieval, std::nullopt, std::string(metric_id::retrieval_accuracy),
                    languages_, false};
    Dataset bucc;
    bucc.spec = {"bucc", TaskFormat::retrieval, std::nullopt, std::string(metric_id::mining_f1), languages_, false};

    for (const auto& lang : targets) {
      const std::size_t l = language_index(lang);
      for (const char* split : {"dev", "test"}) {
        auto& tat = tatoeba.splits[split];
        auto& buc = bucc.splits[split];
        for (std::size_t i = 0; i < config_.retrieval_size; ++i) {
          const auto s = unique_sentence(rng);
          const std::string pid = lang + "-" + split + "-" + std::to_string(i);
          tat.push_back(RetrievalExample{"tatoeba-" + pid + "-src", realize(s, 0), src, pid});
          tat.push_back(RetrievalExample{"tatoeba-" + pid + "-tgt", realize(s, l), lang, pid});
        }
        for (std::size_t i = 0; i < config_.retrieval_size; ++i) {
          const auto s = unique_sentence(rng);
          const std::string pid = lang + "-" + split + "-" + std::to_string(i);
          buc.push_back(RetrievalExample{"bucc-" + pid + "-src", realize(s, 0), src, pid});
          buc.push_back(RetrievalExample{"bucc-" + pid + "-tgt", realize(s, l), lang, pid});
        }
        for (std::size_t i = 0; i < config_.retrieval_distractor_count; ++i) {
          const std::string did = lang + "-" + split + "-d" + std::to_string(i);
          buc.push_back(RetrievalExample{"bucc-" + did + "-src", realize(unique_sentence(rng), 0), src, std::nullopt});
          buc.push_back(RetrievalExample{"bucc-" + did + "-tgt", realize(unique_sentence(rng), l), lang, std::nullopt});
        }
      }
    }
    tasks_.emplace(tatoeba.spec.name, std::move(tatoeba));
    tasks_.emplace(bucc.spec.name, std::move(bucc));
  }

  struct WordRef {
    WordClass cls;
    std::size_t index;
  };

  SyntheticWorldConfig config_;
  std::vector<std::string> languages_;
  std::vector<std::vector<std::vector<std::string>>> lexicon_;  // [lang][class][index]
  std::vector<std::unordered_map<std::string, WordRef>> word_index_;  // per language
  std::vector<std::vector<std::size_t>> subject_pref_, object_pref_;  // by verb meaning
  std::vector<std::vector<std::size_t>> adjective_pref_;              // by noun meaning
  std::map<std::string, std::vector<std::string>> corpora_;
  std::map<std::string, std::vector<std::pair<std::string, std::string>>> pairs_;
  std::map<std::string, Dataset> tasks_;
};

inline SyntheticWorld gen_synthetic_world(const SyntheticWorldConfig& config) { return SyntheticWorld(config); }

}  // namespace xfer::corpus
