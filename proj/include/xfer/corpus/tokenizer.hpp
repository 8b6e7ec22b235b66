#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "xfer/error.hpp"
#include "xfer/rng.hpp"

namespace xfer::corpus {

using TokenId = std::int32_t;

namespace special {
inline constexpr TokenId pad = 0;
inline constexpr TokenId cls = 1;
inline constexpr TokenId sep = 2;
inline constexpr TokenId mask = 3;
inline constexpr TokenId unk = 4;
inline constexpr TokenId count = 5;
}  // namespace special

inline constexpr std::string_view kContinuationMarker = "##";

struct WordSpan {
  std::string text;
  std::size_t begin = 0;  // byte offset in the source string
  std::size_t end = 0;
};

/// Whitespace split that keeps byte offsets, so span answers can be mapped
/// between characters and words.
inline std::vector<WordSpan> split_words(std::string_view text) {
  std::vector<WordSpan> out;
  std::size_t i = 0;
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t b = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > b) out.push_back({std::string(text.substr(b, i - b)), b, i});
  }
  return out;
}

inline std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  for (auto& w : split_words(text)) out.push_back(std::move(w.text));
  return out;
}

/// One encoded sequence before batching.
struct EncodedRow {
  std::vector<TokenId> ids;
  std::vector<std::int8_t> type_ids;
  std::vector<std::size_t> word_starts;  // position of each kept word's first subword
  std::vector<std::int32_t> token_word;  // word index per position, -1 for special tokens
  std::size_t words_kept = 0;
  bool truncated = false;
};

/// Whitespace tokenizer with a seeded two-piece subword split.
///
/// At construction every lexicon word of length >= 2 is split, with
/// probability `split_probability`, into a head piece and a continuation piece
/// carrying the "##" marker. The decision is fixed per word, so encoding is a
/// pure function of the text. Words outside the lexicon encode to a single UNK.
class Tokenizer {
 public:
  Tokenizer() { init_specials(); }

  Tokenizer(std::span<const std::string> lexicon, std::uint64_t seed, double split_probability) {
    init_specials();
    std::set<std::string> words(lexicon.begin(), lexicon.end());
    SeededRng rng(seed);
    std::map<std::string, std::vector<std::string>> pieces_of;
    std::set<std::string> pieces;
    for (const auto& w : words) {
      if (w.empty()) continue;
      if (w.rfind(kContinuationMarker, 0) == 0 || (w.front() == '[' && w.back() == ']'))
        throw ConfigError("lexicon word '" + w + "' collides with reserved token syntax");
      const double u = rng.uniform();
      const auto cut = static_cast<std::size_t>(rng.below(w.size() > 1 ? w.size() - 1 : 1)) + 1;
      std::vector<std::string> p;
      if (w.size() >= 2 && u < split_probability) {
        p = {w.substr(0, cut), std::string(kContinuationMarker) + w.substr(cut)};
      } else {
        p = {w};
      }
      for (const auto& s : p) pieces.insert(s);
      pieces_of.emplace(w, std::move(p));
    }
    for (const auto& p : pieces) add_piece(p);
    for (const auto& [w, p] : pieces_of) {
      std::vector<TokenId> ids;
      for (const auto& s : p) ids.push_back(piece_to_id_.at(s));
      word_to_ids_.emplace(w, std::move(ids));
    }
  }

  std::size_t vocab_size() const noexcept { return id_to_piece_.size(); }
  bool is_special(TokenId id) const noexcept { return id >= 0 && id < special::count; }
  const std::string& piece(TokenId id) const { return id_to_piece_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& pieces() const noexcept { return id_to_piece_; }

  /// Subword ids of one word; a single UNK for out-of-vocabulary words.
  std::vector<TokenId> encode_word(const std::string& word) const {
    auto it = word_to_ids_.find(word);
    if (it == word_to_ids_.end()) return {special::unk};
    return it->second;
  }

  /// [CLS] words [SEP], truncated by whole words to fit max_length.
  EncodedRow encode(std::span<const std::string> words, std::size_t max_length = 0) const {
    return encode_segments({words}, max_length);
  }
  EncodedRow encode(std::string_view text, std::size_t max_length = 0) const {
    const auto words = split_whitespace(text);
    return encode(std::span<const std::string>(words), max_length);
  }

  /// [CLS] a [SEP] b [SEP] with type ids 0/1. Word indices run across both
  /// segments. Truncation drops trailing words of the longer segment first.
  EncodedRow encode_pair(std::span<const std::string> a, std::span<const std::string> b,
                         std::size_t max_length = 0) const {
    return encode_segments({a, b}, max_length);
  }

  /// Inverse of encode up to whitespace normalization: special tokens other
  /// than UNK and MASK are dropped, continuation pieces are glued to the
  /// preceding piece.
  std::string decode(std::span<const TokenId> ids) const {
    std::string out;
    for (TokenId id : ids) {
      if (id == special::pad || id == special::cls || id == special::sep) continue;
      const std::string& p = piece(id);
      if (!is_special(id) && p.rfind(kContinuationMarker, 0) == 0) {
        out += p.substr(kContinuationMarker.size());
      } else {
        if (!out.empty()) out += ' ';
        out += p;
      }
    }
    return out;
  }

  /// Whitespace-normalized text with unknown words replaced by the UNK surface.
  std::string normalize(std::string_view text) const {
    std::string out;
    for (const auto& w : split_whitespace(text)) {
      if (!out.empty()) out += ' ';
      out += word_to_ids_.count(w) ? w : piece(special::unk);
    }
    return out;
  }

  bool contains_word(const std::string& w) const { return word_to_ids_.count(w) != 0; }

 private:
  void init_specials() {
    for (const char* s : {"[PAD]", "[CLS]", "[SEP]", "[MASK]", "[UNK]"}) add_piece(s);
  }
  void add_piece(const std::string& p) {
    piece_to_id_.emplace(p, static_cast<TokenId>(id_to_piece_.size()));
    id_to_piece_.push_back(p);
  }

  EncodedRow encode_segments(std::vector<std::span<const std::string>> segments, std::size_t max_length) const {
    std::vector<std::vector<std::vector<TokenId>>> enc(segments.size());
    std::size_t total = 1 + segments.size();
    for (std::size_t s = 0; s < segments.size(); ++s) {
      for (const auto& w : segments[s]) {
        enc[s].push_back(encode_word(w));
        total += enc[s].back().size();
      }
    }
    EncodedRow row;
    if (max_length > 0) {
      if (max_length < 1 + segments.size()) throw ConfigError("max_length too small for special tokens");
      while (total > max_length) {
        std::size_t longest = 0;
        std::size_t longest_len = 0;
        for (std::size_t s = 0; s < enc.size(); ++s) {
          std::size_t len = 0;
          for (const auto& w : enc[s]) len += w.size();
          if (len > longest_len) {
            longest_len = len;
            longest = s;
          }
        }
        total -= enc[longest].back().size();
        enc[longest].pop_back();
        row.truncated = true;
      }
    }
    row.ids.reserve(total);
    row.ids.push_back(special::cls);
    row.type_ids.push_back(0);
    row.token_word.push_back(-1);
    std::int32_t word_index = 0;
    for (std::size_t s = 0; s < enc.size(); ++s) {
      for (std::size_t w = 0; w < enc[s].size(); ++w, ++word_index) {
        row.word_starts.push_back(row.ids.size());
        for (TokenId id : enc[s][w]) {
          row.ids.push_back(id);
          row.type_ids.push_back(static_cast<std::int8_t>(s));
          row.token_word.push_back(word_index);
        }
      }
      // word indices stay contiguous across segments even if some words were dropped
      word_index += static_cast<std::int32_t>(segments[s].size() - enc[s].size());
      row.ids.push_back(special::sep);
      row.type_ids.push_back(static_cast<std::int8_t>(s));
      row.token_word.push_back(-1);
    }
    row.words_kept = row.word_starts.size();
    return row;
  }

  std::vector<std::string> id_to_piece_;
  std::unordered_map<std::string, TokenId> piece_to_id_;
  std::unordered_map<std::string, std::vector<TokenId>> word_to_ids_;
};

/// Padded batch. Matrices are row-major [batch][length].
struct TokenizedBatch {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<TokenId> input_ids;
  std::vector<std::uint8_t> attention_mask;
  std::vector<std::int8_t> type_ids;
  std::vector<std::vector<std::size_t>> word_starts;
  std::vector<std::size_t> lengths;  // number of real (unpadded) positions per row
  std::vector<bool> truncated;

  TokenId id(std::size_t b, std::size_t t) const { return input_ids[b * length + t]; }
  std::uint8_t mask(std::size_t b, std::size_t t) const { return attention_mask[b * length + t]; }
  std::int8_t type(std::size_t b, std::size_t t) const { return type_ids[b * length + t]; }
};

/// Pads rows to the longest row (or to pad_to when larger).
inline TokenizedBatch make_batch(std::span<const EncodedRow> rows, std::size_t pad_to = 0) {
  TokenizedBatch b;
  b.batch = rows.size();
  b.length = pad_to;
  for (const auto& r : rows) b.length = std::max(b.length, r.ids.size());
  b.input_ids.assign(b.batch * b.length, special::pad);
  b.attention_mask.assign(b.batch * b.length, 0);
  b.type_ids.assign(b.batch * b.length, 0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    for (std::size_t t = 0; t < r.ids.size(); ++t) {
      b.input_ids[i * b.length + t] = r.ids[t];
      b.attention_mask[i * b.length + t] = 1;
      b.type_ids[i * b.length + t] = r.type_ids[t];
    }
    b.word_starts.push_back(r.word_starts);
    b.lengths.push_back(r.ids.size());
    b.truncated.push_back(r.truncated);
  }
  return b;
}

}  // namespace xfer::corpus
