#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "promptecho/image.hpp"
#include "promptecho/scene.hpp"
#include "promptecho/vocab.hpp"

namespace promptecho {

/// Capability declaration for a captioning backend. Reward computation
/// requires deterministic_teacher_forcing; `fidelity` is the oracle's
/// p_hit knob (the desk-scale analog of swapping in a larger model).
struct BackendCaps {
  std::string name;
  bool deterministic_teacher_forcing = false;
  int max_label_len = 0;
  double fidelity = 1.0;
};

/// Uniform interface to a frozen captioning model M. Backends are
/// immutable after construction and safe for concurrent calls; generate
/// takes a caller-supplied seed and never touches shared RNG state.
class VlmBackend {
 public:
  virtual ~VlmBackend() = default;

  virtual const BackendCaps& caps() const = 0;
  virtual const Vocabulary& vocab() const = 0;

  /// Per-token log p_M(label_t | label_<t, image, query), length |label|.
  /// All entries are <= 0; calls with identical arguments return bitwise
  /// identical results for deterministic backends.
  virtual std::vector<double> teacher_forced_logprobs(const Image& image, const TokenSeq& query,
                                                      const TokenSeq& label) const = 0;

  /// Autoregressive generation. Temperature 0 is the deterministic mode;
  /// for temperature > 0 the output is reproducible given the seed.
  virtual TokenSeq generate(const Image& image, const TokenSeq& query, int max_tokens,
                            double temperature, uint64_t seed) const = 0;
};

/// Fully specified deterministic oracle backend over the scene grammar.
///
/// Its teacher-forced distribution is defined slot by slot against the
/// scene decoded from the pixels:
///   - structural tokens ("in", "the", ".") have probability 1;
///   - a content slot (color/shape/row/col) puts p_hit on the token
///     consistent with the sentence-index-matched object and spreads
///     (1 - p_hit) uniformly over the other legal tokens; if the sentence
///     index has no matching object the slot is uniform over its support;
///   - each sentence boundary is a continue/stop slot over {"a", <eos>}:
///     p_hit on "a" while the scene still has undescribed objects, p_hit
///     on <eos> once it does not.
/// With the OCR query the same scheme applies to JSON text labels:
/// structural JSON tokens have probability 1 and character slots put
/// p_hit on the character actually rendered at that position (uniform
/// over the alphabet when there is none).
class OracleBackend : public VlmBackend {
 public:
  explicit OracleBackend(double p_hit = 0.9);

  const BackendCaps& caps() const override { return caps_; }
  const Vocabulary& vocab() const override { return Vocabulary::builtin(); }

  std::vector<double> teacher_forced_logprobs(const Image& image, const TokenSeq& query,
                                              const TokenSeq& label) const override;

  TokenSeq generate(const Image& image, const TokenSeq& query, int max_tokens, double temperature,
                    uint64_t seed) const override;

 private:
  double p_hit_;
  BackendCaps caps_;
};

/// Degenerate backend assigning every token probability 1/V. Useful as a
/// known-value mock in tests and as a floor reference.
class UniformBackend : public VlmBackend {
 public:
  explicit UniformBackend(int vocab_size);

  const BackendCaps& caps() const override { return caps_; }
  const Vocabulary& vocab() const override { return Vocabulary::builtin(); }

  std::vector<double> teacher_forced_logprobs(const Image& image, const TokenSeq& query,
                                              const TokenSeq& label) const override;

  TokenSeq generate(const Image& image, const TokenSeq& query, int max_tokens, double temperature,
                    uint64_t seed) const override;

 private:
  int vocab_size_;
  BackendCaps caps_;
};

}  // namespace promptecho
