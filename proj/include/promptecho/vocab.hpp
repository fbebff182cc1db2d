#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace promptecho {

using TokenId = int;

/// A sequence of token ids over a named vocabulary. Label sequences may end
/// with EOS; BOS is never stored, so size() is the |c| used when averaging
/// per-token log-probabilities.
struct TokenSeq {
  std::vector<TokenId> ids;
  std::string vocab_id;

  size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
  bool operator==(const TokenSeq& other) const = default;
};

/// Fixed word-level vocabulary: ids are dense 0..V-1, lookups are exact.
/// The built-in desk vocabulary covers the scene grammar, the guiding
/// queries, digits 0-10 for scoring, and the JSON/character tokens used by
/// the text rendering path.
class Vocabulary {
 public:
  Vocabulary(std::string name, std::vector<std::string> tokens,
             TokenId bos, TokenId eos, TokenId unk);

  /// The shared desk vocabulary. Constructed once, immutable afterwards.
  static const Vocabulary& builtin();

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::string& token(TokenId id) const;
  std::optional<TokenId> id_of(std::string_view tok) const;

  TokenId bos() const { return bos_; }
  TokenId eos() const { return eos_; }
  TokenId unk() const { return unk_; }

  /// Stable identifier: name plus a content hash of the token list.
  const std::string& id() const { return id_; }

  /// Splits `text` on whitespace; unknown units map to UNK.
  TokenSeq tokenize(std::string_view text) const;

  /// Inverse of tokenize for known units: tokens joined by single spaces.
  std::string detokenize(const TokenSeq& seq) const;

  TokenSeq seq(std::initializer_list<std::string_view> words) const;

  /// Serialized as a JSON list of token strings.
  std::string to_json_string() const;
  static Vocabulary from_json_string(const std::string& name, const std::string& json_list);

 private:
  std::string name_;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  TokenId bos_, eos_, unk_;
  std::string id_;
};

// Guiding queries over the built-in vocabulary.

/// "describe this image in detail ." — used for captioning and for the
/// teacher-forced reward; data preparation and reward computation must use
/// the same query.
TokenSeq caption_query();

/// Structured OCR recognition query for the text rendering path.
TokenSeq ocr_query();

/// Scoring query used by the generative-score baseline reward: the prompt
/// is embedded between a fixed prefix and suffix ("rate 0 to 10 ... answer
/// with a single integer ."). Versioned so ablations stay reproducible.
inline constexpr const char* kScoreQueryVersion = "score-query-v1";
TokenSeq build_score_query(const TokenSeq& prompt);

/// Recovers the embedded prompt from a scoring query; nullopt if `query`
/// is not a scoring query.
std::optional<TokenSeq> parse_score_query(const TokenSeq& query);

}  // namespace promptecho
