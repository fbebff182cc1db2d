#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "promptecho/image.hpp"
#include "promptecho/vocab.hpp"

namespace promptecho {

class VlmBackend;

// Poster text world: structured labels over a small alphabet, rendered
// with a fixed 5x3 bitmap font into one band per category so that the
// renderer/decoder pair is exactly lossless.

inline constexpr int kNumCategories = 4;
inline constexpr int kMaxStringsPerCategory = 3;   // lines per band
inline constexpr int kMaxStringChars = 16;         // excluding the terminator mark
inline constexpr int kAlphabetSize = 37;           // A-Z, 0-9, space

/// Structured text label with the four semantic roles. Serialization uses
/// a fixed key order and no insignificant whitespace, so the canonical
/// JSON form is byte-stable.
struct TextLabel {
  std::vector<std::string> main_title;
  std::vector<std::string> subtitle;
  std::vector<std::string> selling_points;
  std::vector<std::string> other_text;

  const std::vector<std::string>& category(int i) const;
  std::vector<std::string>& category(int i);
  bool all_empty() const;
  bool operator==(const TextLabel&) const = default;
};

const std::array<const char*, kNumCategories>& category_keys();

bool in_alphabet(char c);
/// Token id for an alphabet character; throws UnsupportedGlyph otherwise.
TokenId char_token(char c);
std::optional<char> token_char(TokenId id);
/// The kAlphabetSize char token ids, in alphabet order.
const std::vector<TokenId>& alphabet_token_ids();

std::string canonical_json(const TextLabel& label);
TextLabel label_from_json(const std::string& json_text);  // throws LabelParseError

/// Canonical JSON of the label as a token stream (JSON structure tokens
/// plus per-character tokens), terminated with <eos>.
TokenSeq tokenize_label(const TextLabel& label);
/// Concatenates label tokens back to the canonical JSON string.
std::string detokenize_label(const TokenSeq& label);

enum class LabelSlotKind { kStructural, kChar };
struct LabelSlot {
  LabelSlotKind kind;
  int category = -1;    // for kChar
  int string_idx = -1;  // for kChar
  int char_idx = -1;    // for kChar
};
/// Types every position of a label token stream by parsing its JSON
/// structure. Throws LabelParseError if the stream is not a well-formed
/// canonical label.
std::vector<LabelSlot> label_slots(const TokenSeq& label);

// Poster geometry, exposed for tests.
inline constexpr int kGlyphRows = 5;
inline constexpr int kGlyphCols = 3;
inline constexpr int kPosterMargin = 2;
inline constexpr int kCharStride = kGlyphCols + 1;
inline constexpr int kLineStride = kGlyphRows + 1;
inline constexpr int kBandGap = 2;
inline constexpr int kPosterWidth =
    2 * kPosterMargin + (kMaxStringChars + 1) * kCharStride - 1;
inline constexpr int kPosterHeight =
    2 * kPosterMargin + kNumCategories * kMaxStringsPerCategory * kLineStride +
    (kNumCategories - 1) * kBandGap;

/// Deterministic lossless rendering: each string on its own line inside
/// its category band, ended by a terminator mark so trailing spaces and
/// empty strings survive the round trip.
/// Throws UnsupportedGlyph for characters outside A-Z/0-9/space and
/// BandOverflow when a category exceeds its line count or a string its
/// character capacity.
Image render_text(const TextLabel& label);

/// Per-category decode result; a category is nullopt when its band cannot
/// be read back (corrupted glyphs, non-contiguous lines, wrong format).
struct DecodedPoster {
  std::array<std::optional<std::vector<std::string>>, kNumCategories> categories;
  bool fully_decodable() const;
};

DecodedPoster decode_text(const Image& image);  // total function
std::optional<TextLabel> poster_label(const DecodedPoster& decoded);

/// Teacher-forced reward with the OCR query and the label's canonical
/// JSON tokens as the target.
double text_reward(const Image& image, const TextLabel& label, const VlmBackend& backend);

/// Character-strict 0/1 evaluation: 1 iff every category decodes back to
/// exactly the expected strings; an entirely empty expectation scores 1
/// outright. Undecodable bands compare unequal.
int strict_score(const TextLabel& expected, const Image& image);

/// Pulls structured labels out of editing instructions.
class LabelExtractor {
 public:
  virtual ~LabelExtractor() = default;
  virtual TextLabel extract(const std::string& instruction) const = 0;
};

/// Desk extractor over the synthetic instruction grammar: quoted spans
/// tagged as title:"...", sub:"...", point:"..." or other:"...".
/// Repeated markers append in order; untagged text is ignored.
class RuleBasedExtractor : public LabelExtractor {
 public:
  TextLabel extract(const std::string& instruction) const override;
};

TextLabel extract_label(const std::string& instruction, const LabelExtractor& extractor);

}  // namespace promptecho
