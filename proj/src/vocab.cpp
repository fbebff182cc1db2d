#include "promptecho/vocab.hpp"

#include <sstream>

#include "json.hpp"
#include "promptecho/errors.hpp"
#include "promptecho/hash.hpp"

namespace promptecho {

Vocabulary::Vocabulary(std::string name, std::vector<std::string> tokens,
                       TokenId bos, TokenId eos, TokenId unk)
    : name_(std::move(name)), tokens_(std::move(tokens)), bos_(bos), eos_(eos), unk_(unk) {
  for (size_t i = 0; i < tokens_.size(); ++i) {
    auto [it, inserted] = index_.emplace(tokens_[i], static_cast<TokenId>(i));
    if (!inserted) throw ConfigError("duplicate vocabulary token: " + tokens_[i]);
  }
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : tokens_) {
    h = fnv1a64(t, h);
    h = fnv1a64(std::string_view("\x1f", 1), h);
  }
  id_ = name_ + "-" + to_hex(h);
}

const Vocabulary& Vocabulary::builtin() {
  static const Vocabulary v = [] {
    std::vector<std::string> toks = {
        "<bos>", "<eos>", "<unk>",
        // scene grammar
        "a", "in", "the", ".",
        "circle", "square", "triangle",
        "red", "green", "blue", "yellow", "purple",
        "top", "middle", "bottom",
        "left", "center", "right",
        // digits 0..10 for the scoring path
        "0", "1", "2", "3", "4", "5", "6", "7", "8", "9", "10",
        // caption query words
        "describe", "this", "image", "detail",
        // scoring query words
        "rate", "to", "answer", "with", "single", "integer",
        // OCR query words
        "read", "all", "text", "as", "json",
        // JSON structure for text labels
        "{", "}", "[", "]", ":", ",", "\"",
        "main_title", "subtitle", "selling_points", "other_text",
    };
    // poster alphabet: A-Z plus the in-string space character
    for (char c = 'A'; c <= 'Z'; ++c) toks.emplace_back(1, c);
    toks.emplace_back(" ");
    return Vocabulary("desk-v1", std::move(toks), 0, 1, 2);
  }();
  return v;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || id >= size()) throw ConfigError("token id out of range: " + std::to_string(id));
  return tokens_[static_cast<size_t>(id)];
}

std::optional<TokenId> Vocabulary::id_of(std::string_view tok) const {
  auto it = index_.find(std::string(tok));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenSeq Vocabulary::tokenize(std::string_view text) const {
  TokenSeq out;
  out.vocab_id = id_;
  size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) {
      auto id = id_of(text.substr(i, j - i));
      out.ids.push_back(id ? *id : unk_);
    }
    i = j;
  }
  return out;
}

std::string Vocabulary::detokenize(const TokenSeq& seq) const {
  std::string out;
  for (size_t i = 0; i < seq.ids.size(); ++i) {
    if (i) out += ' ';
    out += token(seq.ids[i]);
  }
  return out;
}

TokenSeq Vocabulary::seq(std::initializer_list<std::string_view> words) const {
  TokenSeq out;
  out.vocab_id = id_;
  for (auto w : words) {
    auto id = id_of(w);
    if (!id) throw ConfigError("word not in vocabulary: " + std::string(w));
    out.ids.push_back(*id);
  }
  return out;
}

std::string Vocabulary::to_json_string() const {
  nlohmann::json j = tokens_;
  return j.dump();
}

Vocabulary Vocabulary::from_json_string(const std::string& name, const std::string& json_list) {
  nlohmann::json j = nlohmann::json::parse(json_list);
  if (!j.is_array()) throw ConfigError("vocabulary JSON must be a list of tokens");
  std::vector<std::string> toks = j.get<std::vector<std::string>>();
  auto find = [&](const char* t) -> TokenId {
    for (size_t i = 0; i < toks.size(); ++i)
      if (toks[i] == t) return static_cast<TokenId>(i);
    throw ConfigError(std::string("vocabulary missing special token ") + t);
  };
  TokenId bos = find("<bos>"), eos = find("<eos>"), unk = find("<unk>");
  return Vocabulary(name, std::move(toks), bos, eos, unk);
}

TokenSeq caption_query() {
  static const TokenSeq q = Vocabulary::builtin().seq({"describe", "this", "image", "in", "detail", "."});
  return q;
}

TokenSeq ocr_query() {
  static const TokenSeq q = Vocabulary::builtin().seq({"read", "all", "text", "in", "this", "image", "as", "json", "."});
  return q;
}

namespace {

const TokenSeq& score_prefix() {
  static const TokenSeq p = Vocabulary::builtin().seq({"rate", "0", "to", "10", ":"});
  return p;
}

const TokenSeq& score_suffix() {
  static const TokenSeq s = Vocabulary::builtin().seq({"answer", "with", "a", "single", "integer", "."});
  return s;
}

}  // namespace

TokenSeq build_score_query(const TokenSeq& prompt) {
  const auto& vocab = Vocabulary::builtin();
  TokenSeq out = score_prefix();
  for (TokenId id : prompt.ids) {
    if (id == vocab.eos()) continue;  // EOS never appears mid-query
    out.ids.push_back(id);
  }
  out.ids.insert(out.ids.end(), score_suffix().ids.begin(), score_suffix().ids.end());
  return out;
}

std::optional<TokenSeq> parse_score_query(const TokenSeq& query) {
  const auto& pre = score_prefix().ids;
  const auto& suf = score_suffix().ids;
  if (query.ids.size() < pre.size() + suf.size()) return std::nullopt;
  if (!std::equal(pre.begin(), pre.end(), query.ids.begin())) return std::nullopt;
  if (!std::equal(suf.begin(), suf.end(), query.ids.end() - static_cast<long>(suf.size())))
    return std::nullopt;
  TokenSeq prompt;
  prompt.vocab_id = query.vocab_id;
  prompt.ids.assign(query.ids.begin() + static_cast<long>(pre.size()),
                    query.ids.end() - static_cast<long>(suf.size()));
  return prompt;
}

}  // namespace promptecho
