#include "promptecho/textrender.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>

#include "json.hpp"
#include "promptecho/backend.hpp"
#include "promptecho/errors.hpp"
#include "promptecho/reward.hpp"

namespace promptecho {

const std::array<const char*, kNumCategories>& category_keys() {
  static const std::array<const char*, kNumCategories> keys = {
      "main_title", "subtitle", "selling_points", "other_text"};
  return keys;
}

const std::vector<std::string>& TextLabel::category(int i) const {
  switch (i) {
    case 0: return main_title;
    case 1: return subtitle;
    case 2: return selling_points;
    case 3: return other_text;
  }
  throw ConfigError("category index out of range");
}

std::vector<std::string>& TextLabel::category(int i) {
  return const_cast<std::vector<std::string>&>(
      static_cast<const TextLabel*>(this)->category(i));
}

bool TextLabel::all_empty() const {
  for (int c = 0; c < kNumCategories; ++c)
    if (!category(c).empty()) return false;
  return true;
}

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 ";
static_assert(sizeof(kAlphabet) - 1 == kAlphabetSize);

// 5x3 bitmap font; three characters '0'/'1' per row, rows top to bottom.
// One extra pattern (all-on) is the end-of-string terminator. A unit test
// asserts all patterns are pairwise distinct.
struct Glyph {
  const char* rows[kGlyphRows];
};

constexpr Glyph kTerminatorGlyph = {{"111", "111", "111", "111", "111"}};

const Glyph kGlyphs[kAlphabetSize] = {
    {{"010", "101", "111", "101", "101"}},  // A
    {{"110", "101", "110", "101", "110"}},  // B
    {{"011", "100", "100", "100", "011"}},  // C
    {{"110", "101", "101", "101", "110"}},  // D
    {{"111", "100", "110", "100", "111"}},  // E
    {{"111", "100", "110", "100", "100"}},  // F
    {{"011", "100", "101", "101", "111"}},  // G
    {{"101", "101", "111", "101", "101"}},  // H
    {{"111", "010", "010", "010", "111"}},  // I
    {{"001", "001", "001", "101", "010"}},  // J
    {{"101", "110", "100", "110", "101"}},  // K
    {{"100", "100", "100", "100", "111"}},  // L
    {{"101", "111", "111", "101", "101"}},  // M
    {{"110", "101", "101", "101", "101"}},  // N
    {{"010", "101", "101", "101", "010"}},  // O
    {{"110", "101", "110", "100", "100"}},  // P
    {{"010", "101", "101", "110", "011"}},  // Q
    {{"110", "101", "110", "110", "101"}},  // R
    {{"011", "100", "010", "001", "110"}},  // S
    {{"111", "010", "010", "010", "010"}},  // T
    {{"101", "101", "101", "101", "111"}},  // U
    {{"101", "101", "101", "101", "010"}},  // V
    {{"101", "101", "111", "111", "101"}},  // W
    {{"101", "101", "010", "101", "101"}},  // X
    {{"101", "101", "010", "010", "010"}},  // Y
    {{"111", "001", "010", "100", "111"}},  // Z
    {{"111", "101", "101", "101", "111"}},  // 0
    {{"010", "110", "010", "010", "111"}},  // 1
    {{"110", "001", "010", "100", "111"}},  // 2
    {{"111", "001", "011", "001", "111"}},  // 3
    {{"101", "101", "111", "001", "001"}},  // 4
    {{"111", "100", "110", "001", "110"}},  // 5
    {{"011", "100", "110", "101", "010"}},  // 6
    {{"111", "001", "001", "010", "010"}},  // 7
    {{"010", "101", "010", "101", "010"}},  // 8
    {{"010", "101", "011", "001", "110"}},  // 9
    {{"000", "000", "000", "000", "000"}},  // space
};

int alphabet_index(char c) {
  const char* p = std::strchr(kAlphabet, c);
  if (!p || c == '\0') return -1;
  return static_cast<int>(p - kAlphabet);
}

uint16_t glyph_bits(const Glyph& g) {
  uint16_t bits = 0;
  for (int r = 0; r < kGlyphRows; ++r)
    for (int c = 0; c < kGlyphCols; ++c)
      if (g.rows[r][c] == '1') bits |= static_cast<uint16_t>(1u << (r * kGlyphCols + c));
  return bits;
}

void draw_glyph(Image& img, int x0, int y0, const Glyph& g) {
  for (int r = 0; r < kGlyphRows; ++r)
    for (int c = 0; c < kGlyphCols; ++c)
      if (g.rows[r][c] == '1') img.set(x0 + c, y0 + r, 0, 0, 0);
}

/// Reads a glyph cell back as a bit pattern; nullopt when pixels are
/// neither pure black nor pure white.
std::optional<uint16_t> read_glyph_bits(const Image& img, int x0, int y0) {
  uint16_t bits = 0;
  for (int r = 0; r < kGlyphRows; ++r)
    for (int c = 0; c < kGlyphCols; ++c) {
      const uint8_t* p = img.at(x0 + c, y0 + r);
      bool black = p[0] == 0 && p[1] == 0 && p[2] == 0;
      bool white = p[0] == 255 && p[1] == 255 && p[2] == 255;
      if (!black && !white) return std::nullopt;
      if (black) bits |= static_cast<uint16_t>(1u << (r * kGlyphCols + c));
    }
  return bits;
}

int line_y(int category, int line) {
  return kPosterMargin +
         category * (kMaxStringsPerCategory * kLineStride + kBandGap) + line * kLineStride;
}

int slot_x(int slot) { return kPosterMargin + slot * kCharStride; }

}  // namespace

bool in_alphabet(char c) { return alphabet_index(c) >= 0; }

TokenId char_token(char c) {
  int idx = alphabet_index(c);
  if (idx < 0) throw UnsupportedGlyph(std::string("character not in poster alphabet: '") + c + "'");
  return alphabet_token_ids()[static_cast<size_t>(idx)];
}

std::optional<char> token_char(TokenId id) {
  const auto& ids = alphabet_token_ids();
  for (size_t i = 0; i < ids.size(); ++i)
    if (ids[i] == id) return kAlphabet[i];
  return std::nullopt;
}

const std::vector<TokenId>& alphabet_token_ids() {
  static const std::vector<TokenId> ids = [] {
    const auto& vocab = Vocabulary::builtin();
    std::vector<TokenId> out;
    for (char c : std::string_view(kAlphabet, kAlphabetSize))
      out.push_back(*vocab.id_of(std::string(1, c)));
    return out;
  }();
  return ids;
}

std::string canonical_json(const TextLabel& label) {
  // nlohmann objects sort keys; build the text manually for the fixed order
  std::string out = "{";
  for (int c = 0; c < kNumCategories; ++c) {
    if (c) out += ",";
    out += "\"";
    out += category_keys()[static_cast<size_t>(c)];
    out += "\":[";
    const auto& strings = label.category(c);
    for (size_t i = 0; i < strings.size(); ++i) {
      if (i) out += ",";
      out += nlohmann::json(strings[i]).dump();
    }
    out += "]";
  }
  out += "}";
  return out;
}

TextLabel label_from_json(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object()) throw LabelParseError("label is not a JSON object");
  TextLabel label;
  for (int c = 0; c < kNumCategories; ++c) {
    const char* key = category_keys()[static_cast<size_t>(c)];
    if (!j.contains(key)) throw LabelParseError(std::string("label missing key ") + key);
    const auto& arr = j.at(key);
    if (!arr.is_array()) throw LabelParseError(std::string("label key is not a list: ") + key);
    for (const auto& s : arr) {
      if (!s.is_string()) throw LabelParseError(std::string("non-string entry under ") + key);
      label.category(c).push_back(s.get<std::string>());
    }
  }
  return label;
}

TokenSeq tokenize_label(const TextLabel& label) {
  const auto& vocab = Vocabulary::builtin();
  TokenSeq out;
  out.vocab_id = vocab.id();
  auto push = [&](std::string_view w) { out.ids.push_back(*vocab.id_of(w)); };
  push("{");
  for (int c = 0; c < kNumCategories; ++c) {
    if (c) push(",");
    push("\"");
    push(category_keys()[static_cast<size_t>(c)]);
    push("\"");
    push(":");
    push("[");
    const auto& strings = label.category(c);
    for (size_t i = 0; i < strings.size(); ++i) {
      if (i) push(",");
      push("\"");
      for (char ch : strings[i]) out.ids.push_back(char_token(ch));
      push("\"");
    }
    push("]");
  }
  push("}");
  out.ids.push_back(vocab.eos());
  return out;
}

std::string detokenize_label(const TokenSeq& label) {
  const auto& vocab = Vocabulary::builtin();
  std::string out;
  for (TokenId id : label.ids) {
    if (id == vocab.eos()) break;
    out += vocab.token(id);
  }
  return out;
}

std::vector<LabelSlot> label_slots(const TokenSeq& label) {
  const auto& vocab = Vocabulary::builtin();
  auto expect = [&](size_t pos, std::string_view w) {
    if (pos >= label.ids.size() || label.ids[pos] != *vocab.id_of(w))
      throw LabelParseError("label stream: expected '" + std::string(w) + "' at position " +
                            std::to_string(pos));
  };
  std::vector<LabelSlot> slots(label.ids.size(), LabelSlot{LabelSlotKind::kStructural, -1, -1, -1});
  size_t pos = 0;
  auto structural = [&](std::string_view w) {
    expect(pos, w);
    ++pos;
  };
  structural("{");
  TokenId quote = *vocab.id_of("\"");
  TokenId rbracket = *vocab.id_of("]");
  for (int c = 0; c < kNumCategories; ++c) {
    if (c) structural(",");
    structural("\"");
    structural(category_keys()[static_cast<size_t>(c)]);
    structural("\"");
    structural(":");
    structural("[");
    int string_idx = 0;
    while (pos < label.ids.size() && label.ids[pos] != rbracket) {
      if (string_idx) structural(",");
      structural("\"");
      int char_idx = 0;
      while (pos < label.ids.size() && label.ids[pos] != quote) {
        if (!token_char(label.ids[pos]))
          throw LabelParseError("label stream: non-character token inside a string at position " +
                                std::to_string(pos));
        slots[pos] = LabelSlot{LabelSlotKind::kChar, c, string_idx, char_idx};
        ++char_idx;
        ++pos;
      }
      structural("\"");
      ++string_idx;
    }
    structural("]");
  }
  structural("}");
  if (pos < label.ids.size()) {
    if (label.ids[pos] != vocab.eos() || pos + 1 != label.ids.size())
      throw LabelParseError("label stream: trailing tokens after '}'");
  }
  return slots;
}

Image render_text(const TextLabel& label) {
  Image img(kPosterWidth, kPosterHeight, 255);
  img.provenance = "rendered";
  for (int c = 0; c < kNumCategories; ++c) {
    const auto& strings = label.category(c);
    if (static_cast<int>(strings.size()) > kMaxStringsPerCategory)
      throw BandOverflow("category " + std::string(category_keys()[static_cast<size_t>(c)]) +
                         " has " + std::to_string(strings.size()) + " strings, max " +
                         std::to_string(kMaxStringsPerCategory));
    for (size_t line = 0; line < strings.size(); ++line) {
      const std::string& s = strings[line];
      if (static_cast<int>(s.size()) > kMaxStringChars)
        throw BandOverflow("string too long for a band line: \"" + s + "\"");
      int y0 = line_y(c, static_cast<int>(line));
      for (size_t k = 0; k < s.size(); ++k) {
        int idx = alphabet_index(s[k]);
        if (idx < 0)
          throw UnsupportedGlyph(std::string("character not in poster alphabet: '") + s[k] + "'");
        draw_glyph(img, slot_x(static_cast<int>(k)), y0, kGlyphs[static_cast<size_t>(idx)]);
      }
      draw_glyph(img, slot_x(static_cast<int>(s.size())), y0, kTerminatorGlyph);
    }
  }
  return img;
}

bool DecodedPoster::fully_decodable() const {
  return std::all_of(categories.begin(), categories.end(),
                     [](const auto& c) { return c.has_value(); });
}

namespace {

enum class LineDecode { kUnused, kString, kBad };

LineDecode decode_line(const Image& img, int category, int line, std::string* out) {
  out->clear();
  bool all_blank = true;
  int y0 = line_y(category, line);
  for (int slot = 0; slot <= kMaxStringChars; ++slot) {
    auto bits = read_glyph_bits(img, slot_x(slot), y0);
    if (!bits) return LineDecode::kBad;
    if (*bits == glyph_bits(kTerminatorGlyph)) return LineDecode::kString;
    if (*bits != 0) all_blank = false;
    bool matched = false;
    for (int g = 0; g < kAlphabetSize; ++g) {
      if (*bits == glyph_bits(kGlyphs[static_cast<size_t>(g)])) {
        out->push_back(kAlphabet[g]);
        matched = true;
        break;
      }
    }
    if (!matched) return LineDecode::kBad;
  }
  // no terminator: a fully blank line is simply unused
  return all_blank ? LineDecode::kUnused : LineDecode::kBad;
}

}  // namespace

DecodedPoster decode_text(const Image& image) {
  DecodedPoster out;
  if (image.width != kPosterWidth || image.height != kPosterHeight) return out;  // all nullopt
  for (int c = 0; c < kNumCategories; ++c) {
    std::vector<std::string> strings;
    bool bad = false, seen_unused = false;
    for (int line = 0; line < kMaxStringsPerCategory && !bad; ++line) {
      std::string s;
      switch (decode_line(image, c, line, &s)) {
        case LineDecode::kUnused:
          seen_unused = true;
          break;
        case LineDecode::kString:
          if (seen_unused) bad = true;  // used line after an unused one
          else strings.push_back(std::move(s));
          break;
        case LineDecode::kBad:
          bad = true;
          break;
      }
    }
    if (!bad) out.categories[static_cast<size_t>(c)] = std::move(strings);
  }
  return out;
}

std::optional<TextLabel> poster_label(const DecodedPoster& decoded) {
  if (!decoded.fully_decodable()) return std::nullopt;
  TextLabel label;
  for (int c = 0; c < kNumCategories; ++c)
    label.category(c) = *decoded.categories[static_cast<size_t>(c)];
  return label;
}

double text_reward(const Image& image, const TextLabel& label, const VlmBackend& backend) {
  return promptecho_reward(image, ocr_query(), tokenize_label(label), backend);
}

int strict_score(const TextLabel& expected, const Image& image) {
  if (expected.all_empty()) return 1;  // nothing required, nothing to check
  auto decoded = poster_label(decode_text(image));
  if (!decoded) return 0;
  return *decoded == expected ? 1 : 0;
}

TextLabel RuleBasedExtractor::extract(const std::string& instruction) const {
  static const std::array<std::pair<const char*, int>, kNumCategories> markers = {{
      {"title", 0}, {"sub", 1}, {"point", 2}, {"other", 3}}};
  TextLabel label;
  size_t i = 0;
  while (i < instruction.size()) {
    bool matched = false;
    for (const auto& [marker, cat] : markers) {
      size_t mlen = std::strlen(marker);
      if (instruction.compare(i, mlen, marker) != 0) continue;
      if (i + mlen + 1 >= instruction.size() || instruction[i + mlen] != ':' ||
          instruction[i + mlen + 1] != '"')
        continue;
      // marker must start at a word boundary ("subtitle" must not match "title")
      if (i > 0 && std::isalnum(static_cast<unsigned char>(instruction[i - 1]))) continue;
      size_t start = i + mlen + 2;
      size_t end = instruction.find('"', start);
      if (end == std::string::npos)
        throw LabelParseError("unterminated quoted span after '" + std::string(marker) + ":'");
      label.category(cat).push_back(instruction.substr(start, end - start));
      i = end + 1;
      matched = true;
      break;
    }
    if (!matched) ++i;
  }
  return label;
}

TextLabel extract_label(const std::string& instruction, const LabelExtractor& extractor) {
  return extractor.extract(instruction);
}

}  // namespace promptecho
