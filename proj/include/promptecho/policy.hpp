#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "promptecho/scene.hpp"
#include "promptecho/vocab.hpp"

namespace promptecho {

inline constexpr int kCountSupport = kMaxObjects + 1;  // counts 0..4

/// Parameters of the toy conditional generator: categorical logits for the
/// object count (conditioned on the caption's object count) and per-slot
/// logit tables mapping the caption's i-th object token to logits over the
/// slot's values, shared across i. Each slot table carries one extra
/// "unconditioned" row used when the policy generates more objects than
/// the caption describes.
struct PolicyParams {
  std::array<std::array<double, kCountSupport>, kCountSupport> count_logits{};
  std::array<std::array<double, kNumShapes>, kNumShapes + 1> shape_table{};
  std::array<std::array<double, kNumColors>, kNumColors + 1> color_table{};
  std::array<std::array<double, kGridSize>, kGridSize + 1> row_table{};
  std::array<std::array<double, kGridSize>, kGridSize + 1> col_table{};
  std::string vocab_id;

  PolicyParams();  // all-zero logits (uniform policy), builtin vocabulary

  bool operator==(const PolicyParams&) const = default;

  std::string to_json_string() const;  // arrays with shape metadata + vocab id
  static PolicyParams from_json_string(const std::string& text);

  void save(const std::string& path) const;
  static PolicyParams load(const std::string& path);
};

/// Gradient with the same layout as PolicyParams.
struct PolicyGrad {
  std::array<std::array<double, kCountSupport>, kCountSupport> count_logits{};
  std::array<std::array<double, kNumShapes>, kNumShapes + 1> shape_table{};
  std::array<std::array<double, kNumColors>, kNumColors + 1> color_table{};
  std::array<std::array<double, kGridSize>, kGridSize + 1> row_table{};
  std::array<std::array<double, kGridSize>, kGridSize + 1> col_table{};

  void add_scaled(const PolicyGrad& other, double scale);
  bool finite() const;
  double max_abs() const;
};

/// Applies fn to every logit entry, tables in declaration order, rows in
/// order, entries in order. Used for updates and finite-difference tests.
template <typename Params, typename Fn>
void visit_entries(Params& p, Fn&& fn) {
  for (auto& row : p.count_logits) for (auto& v : row) fn(v);
  for (auto& row : p.shape_table) for (auto& v : row) fn(v);
  for (auto& row : p.color_table) for (auto& v : row) fn(v);
  for (auto& row : p.row_table) for (auto& v : row) fn(v);
  for (auto& row : p.col_table) for (auto& v : row) fn(v);
}

inline constexpr int kPolicyEntryCount =
    kCountSupport * kCountSupport + (kNumShapes + 1) * kNumShapes +
    (kNumColors + 1) * kNumColors + 2 * (kGridSize + 1) * kGridSize;

/// One sampled scene plus everything needed to recompute its exact
/// log-probability and gradient: the generation-order choices and the set
/// of cells occupied before each placement.
struct SampleRecord {
  Scene scene;
  int caption_objects = 0;  // n_c at sampling time
  int count = 0;
  struct ObjectChoice {
    int shape;
    int color;
    int row;
    int col;
    uint32_t occupied_before;  // 9-bit cell mask
    bool fallback;             // placed deterministically after 8 rejections
  };
  std::vector<ObjectChoice> choices;  // generation order, may differ from reading order
  double log_prob = 0.0;
  uint64_t seed = 0;
  std::string vocab_id;
};

/// Draws K scenes conditioned on the caption. Counts follow
/// softmax(count_logits[n_c]); slots follow softmax of the table row
/// selected by the caption's i-th object (or the unconditioned row for
/// i >= n_c). Cell collisions are rejected up to 8 times, then the first
/// free cell in reading order is taken; log_prob is always computed under
/// the collision-free renormalized cell distribution. Pure function of
/// (params, caption, K, seed). Throws CaptionParseError.
std::vector<SampleRecord> sample(const PolicyParams& params, const TokenSeq& caption, int K,
                                 uint64_t seed);

struct LogProbGrad {
  double log_prob;
  PolicyGrad grad;
};

/// Exact log pi(record | caption) and its analytic gradient w.r.t. all
/// logits. Throws IncompatibleRecord when the record does not fit the
/// params/caption (vocabulary mismatch, out-of-range choices).
LogProbGrad log_prob_and_grad(const PolicyParams& params, const SampleRecord& record,
                              const TokenSeq& caption);

/// Log-probability only (used by finite-difference checks).
double log_prob(const PolicyParams& params, const SampleRecord& record, const TokenSeq& caption);

}  // namespace promptecho
