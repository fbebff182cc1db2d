#include "promptecho/backend.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "promptecho/errors.hpp"
#include "promptecho/rng.hpp"
#include "promptecho/textrender.hpp"

namespace promptecho {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct SlotDist {
  // parallel arrays; probabilities sum to 1 over the support
  std::vector<TokenId> support;
  std::vector<double> probs;

  double prob_of(TokenId id) const {
    for (size_t i = 0; i < support.size(); ++i)
      if (support[i] == id) return probs[i];
    return 0.0;
  }
};

/// Walks the caption grammar position by position. Lenient: off-grammar
/// label tokens score probability zero but the walk still advances, so
/// teacher forcing is a total function.
class CaptionWalker {
 public:
  CaptionWalker(const Scene& scene, double p_hit)
      : scene_(scene), p_hit_(p_hit), vocab_(Vocabulary::builtin()) {}

  SlotDist dist() const {
    const auto& v = vocab_;
    if (done_) {
      // past <eos>; uniform over the vocabulary
      SlotDist d;
      d.support.resize(static_cast<size_t>(v.size()));
      for (int i = 0; i < v.size(); ++i) d.support[static_cast<size_t>(i)] = i;
      d.probs.assign(static_cast<size_t>(v.size()), 1.0 / v.size());
      return d;
    }
    size_t k = sentence_;
    size_t n_s = scene_.objects.size();
    switch (pos_) {
      case 0: {  // continue/stop slot over {"a", <eos>}
        SlotDist d;
        d.support = {*v.id_of("a"), v.eos()};
        double p_continue = n_s > k ? p_hit_ : 1.0 - p_hit_;
        d.probs = {p_continue, 1.0 - p_continue};
        return d;
      }
      case 1:
        return content_dist(color_words(), k < n_s ? static_cast<int>(scene_.objects[k].color) : -1);
      case 2:
        return content_dist(shape_words(), k < n_s ? static_cast<int>(scene_.objects[k].shape) : -1);
      case 3:
        return structural("in");
      case 4:
        return structural("the");
      case 5:
        return content_dist(row_words(), k < n_s ? scene_.objects[k].row : -1);
      case 6:
        return content_dist(col_words(), k < n_s ? scene_.objects[k].col : -1);
      case 7:
        return structural(".");
    }
    throw ConfigError("bad walker state");
  }

  void advance(TokenId token) {
    if (done_) return;
    if (pos_ == 0) {
      if (token == vocab_.eos()) {
        done_ = true;
      } else {
        pos_ = 1;
      }
      return;
    }
    if (pos_ == 7) {
      pos_ = 0;
      ++sentence_;
    } else {
      ++pos_;
    }
  }

  bool done() const { return done_; }

 private:
  template <size_t N>
  SlotDist content_dist(const std::array<const char*, N>& words, int consistent) const {
    SlotDist d;
    d.support.reserve(N);
    for (auto w : words) d.support.push_back(*vocab_.id_of(w));
    if (consistent < 0) {
      d.probs.assign(N, 1.0 / static_cast<double>(N));
    } else {
      d.probs.assign(N, (1.0 - p_hit_) / static_cast<double>(N - 1));
      d.probs[static_cast<size_t>(consistent)] = p_hit_;
    }
    return d;
  }

  SlotDist structural(const char* word) const {
    SlotDist d;
    d.support = {*vocab_.id_of(word)};
    d.probs = {1.0};
    return d;
  }

  const Scene& scene_;
  double p_hit_;
  const Vocabulary& vocab_;
  size_t sentence_ = 0;
  int pos_ = 0;  // 0 = continue/stop, 1..7 inside a sentence
  bool done_ = false;
};

TokenId sample_slot(const SlotDist& d, double temperature, Rng& rng) {
  if (temperature <= 0.0) {
    size_t best = 0;
    for (size_t i = 1; i < d.probs.size(); ++i)
      if (d.probs[i] > d.probs[best]) best = i;
    return d.support[best];
  }
  std::vector<double> scaled(d.probs.size());
  double z = 0.0;
  for (size_t i = 0; i < d.probs.size(); ++i) {
    scaled[i] = d.probs[i] > 0.0 ? std::pow(d.probs[i], 1.0 / temperature) : 0.0;
    z += scaled[i];
  }
  for (auto& p : scaled) p /= z;
  return d.support[static_cast<size_t>(rng.categorical(scaled))];
}

bool is_ocr_query(const TokenSeq& query) { return query.ids == ocr_query().ids; }

/// Character slot distribution for the text label path.
SlotDist char_slot_dist(const DecodedPoster& decoded, const LabelSlot& slot, double p_hit) {
  SlotDist d;
  d.support = alphabet_token_ids();
  const auto& cat = decoded.categories[static_cast<size_t>(slot.category)];
  char rendered = 0;
  bool have = false;
  if (cat.has_value() && slot.string_idx < static_cast<int>(cat->size())) {
    const std::string& s = (*cat)[static_cast<size_t>(slot.string_idx)];
    if (slot.char_idx < static_cast<int>(s.size())) {
      rendered = s[static_cast<size_t>(slot.char_idx)];
      have = true;
    }
  }
  if (!have) {
    d.probs.assign(d.support.size(), 1.0 / static_cast<double>(kAlphabetSize));
    return d;
  }
  d.probs.assign(d.support.size(), (1.0 - p_hit) / static_cast<double>(kAlphabetSize - 1));
  TokenId hit = char_token(rendered);
  for (size_t i = 0; i < d.support.size(); ++i)
    if (d.support[i] == hit) d.probs[i] = p_hit;
  return d;
}

}  // namespace

OracleBackend::OracleBackend(double p_hit) : p_hit_(p_hit) {
  if (!(p_hit > 0.0 && p_hit <= 1.0)) throw ConfigError("p_hit must be in (0, 1]");
  caps_.name = "oracle";
  caps_.deterministic_teacher_forcing = true;
  caps_.max_label_len = 256;
  caps_.fidelity = p_hit;
}

std::vector<double> OracleBackend::teacher_forced_logprobs(const Image& image,
                                                           const TokenSeq& query,
                                                           const TokenSeq& label) const {
  if (label.empty()) throw EmptyPrompt("teacher forcing requires a non-empty label");
  if (static_cast<int>(label.size()) > caps_.max_label_len)
    throw LabelTooLong("label has " + std::to_string(label.size()) + " tokens, max is " +
                       std::to_string(caps_.max_label_len));
  std::vector<double> out;
  out.reserve(label.size());

  if (is_ocr_query(query)) {
    DecodedPoster decoded = decode_text(image);
    std::vector<LabelSlot> slots = label_slots(label);
    for (size_t t = 0; t < label.ids.size(); ++t) {
      if (slots[t].kind == LabelSlotKind::kStructural) {
        out.push_back(0.0);  // log 1
      } else {
        double p = char_slot_dist(decoded, slots[t], p_hit_).prob_of(label.ids[t]);
        out.push_back(p > 0.0 ? std::log(p) : kNegInf);
      }
    }
    return out;
  }

  Scene scene = decode_lenient(image);
  CaptionWalker walker(scene, p_hit_);
  for (TokenId id : label.ids) {
    double p = walker.dist().prob_of(id);
    out.push_back(p > 0.0 ? std::log(p) : kNegInf);
    walker.advance(id);
  }
  return out;
}

TokenSeq OracleBackend::generate(const Image& image, const TokenSeq& query, int max_tokens,
                                 double temperature, uint64_t seed) const {
  if (max_tokens < 1) throw ConfigError("max_tokens must be >= 1");
  const auto& vocab = Vocabulary::builtin();
  Rng rng(stream_seed(seed, {0x67656eULL}));

  if (auto prompt = parse_score_query(query)) {
    // scoring path: emit round(10 * alignment) with probability p_hit,
    // any other digit with the remaining mass
    Scene scene = decode_lenient(image);
    long score = std::lround(10.0 * alignment_score(scene, *prompt));
    SlotDist d;
    for (int v = 0; v <= 10; ++v) {
      d.support.push_back(*vocab.id_of(std::to_string(v)));
      d.probs.push_back(v == score ? p_hit_ : (1.0 - p_hit_) / 10.0);
    }
    TokenSeq out;
    out.vocab_id = vocab.id();
    out.ids.push_back(sample_slot(d, temperature, rng));
    if (max_tokens > 1) out.ids.push_back(vocab.eos());
    return out;
  }

  if (is_ocr_query(query)) {
    // canonical JSON of whatever is rendered; character slots get
    // temperature noise, structure does not
    DecodedPoster decoded = decode_text(image);
    TextLabel label;
    for (int c = 0; c < kNumCategories; ++c)
      if (decoded.categories[static_cast<size_t>(c)])
        label.category(c) = *decoded.categories[static_cast<size_t>(c)];
    TokenSeq canon = tokenize_label(label);
    std::vector<LabelSlot> slots = label_slots(canon);
    TokenSeq out;
    out.vocab_id = vocab.id();
    for (size_t t = 0; t < canon.ids.size() && out.ids.size() < static_cast<size_t>(max_tokens); ++t) {
      if (slots[t].kind == LabelSlotKind::kStructural || temperature <= 0.0) {
        out.ids.push_back(canon.ids[t]);
      } else {
        out.ids.push_back(sample_slot(char_slot_dist(decoded, slots[t], p_hit_), temperature, rng));
      }
    }
    return out;
  }

  // captioning path
  Scene scene = decode_lenient(image);
  if (temperature <= 0.0) {
    TokenSeq canon = canonical_caption(scene);
    if (canon.ids.size() > static_cast<size_t>(max_tokens))
      canon.ids.resize(static_cast<size_t>(max_tokens));
    return canon;
  }
  CaptionWalker walker(scene, p_hit_);
  TokenSeq out;
  out.vocab_id = vocab.id();
  while (out.ids.size() < static_cast<size_t>(max_tokens) && !walker.done()) {
    TokenId id = sample_slot(walker.dist(), temperature, rng);
    out.ids.push_back(id);
    walker.advance(id);
    if (id == vocab.eos()) break;
  }
  return out;
}

UniformBackend::UniformBackend(int vocab_size) : vocab_size_(vocab_size) {
  if (vocab_size < 2) throw ConfigError("uniform backend needs vocab_size >= 2");
  caps_.name = "uniform-" + std::to_string(vocab_size);
  caps_.deterministic_teacher_forcing = true;
  caps_.max_label_len = 4096;
  caps_.fidelity = 1.0 / vocab_size;
}

std::vector<double> UniformBackend::teacher_forced_logprobs(const Image&, const TokenSeq&,
                                                            const TokenSeq& label) const {
  if (label.empty()) throw EmptyPrompt("teacher forcing requires a non-empty label");
  if (static_cast<int>(label.size()) > caps_.max_label_len)
    throw LabelTooLong("label exceeds max_label_len");
  return std::vector<double>(label.size(), -std::log(static_cast<double>(vocab_size_)));
}

TokenSeq UniformBackend::generate(const Image&, const TokenSeq&, int max_tokens, double,
                                  uint64_t) const {
  if (max_tokens < 1) throw ConfigError("max_tokens must be >= 1");
  TokenSeq out;
  out.vocab_id = Vocabulary::builtin().id();
  out.ids.push_back(Vocabulary::builtin().eos());
  return out;
}

}  // namespace promptecho
