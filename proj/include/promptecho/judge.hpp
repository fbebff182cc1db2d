#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "promptecho/image.hpp"
#include "promptecho/vocab.hpp"

namespace promptecho {

enum class Preference { kImageA, kImageB, kTie };

const char* preference_name(Preference p);

/// Outcome of one pairwise comparison, expressed in the caller's (A, B)
/// coordinates after undoing any presentation swap.
struct JudgeVerdict {
  Preference preference = Preference::kTie;
  std::string reasoning;
  bool swapped = false;  // whether the judge saw (B, A)
};

/// Aggregated pairwise statistics. win/baseline/tie rates are over parsed
/// verdicts and sum to 1; net_advantage = win_rate - baseline_win_rate.
struct JudgeStats {
  int n = 0;
  double win_rate = 0.0;
  double baseline_win_rate = 0.0;
  double tie_rate = 0.0;
  double net_advantage = 0.0;
  double ci95_lo = 0.0;  // bootstrap interval on net_advantage
  double ci95_hi = 0.0;
  int parse_failures = 0;  // excluded from the rates, reported separately

  std::string to_json_string() const;
};

/// A judge sees the two images in presentation order and answers in that
/// order; position de-biasing happens outside the adapter.
struct AdapterVerdict {
  enum class Pick { kFirst, kSecond, kTie };
  Pick pick = Pick::kTie;
  std::string reasoning;
};

class JudgeAdapter {
 public:
  virtual ~JudgeAdapter() = default;
  virtual AdapterVerdict judge(const TokenSeq& prompt, const Image& first,
                               const Image& second) const = 0;
};

/// Ground-truth judge: prefers the image whose decoded scene has the
/// strictly higher alignment score against the prompt; exact equality is
/// a tie (scores are small-denominator rationals, so no tolerance games).
class OracleJudge : public JudgeAdapter {
 public:
  AdapterVerdict judge(const TokenSeq& prompt, const Image& first,
                       const Image& second) const override;
};

/// One pairwise comparison with 50% seeded position swap. The swap is
/// undone before returning, so the verdict is always about (a, b).
JudgeVerdict compare(const TokenSeq& prompt, const Image& image_a, const Image& image_b,
                     const JudgeAdapter& adapter, uint64_t seed);

/// Produces one image per prompt; must be deterministic given the seed.
using Generator = std::function<Image(const TokenSeq& prompt, uint64_t seed)>;

/// Full pairwise protocol over a held-out prompt set: one generation per
/// side per prompt (both sides share the per-prompt seed), seeded swap,
/// verdict aggregation, and a 1000-resample bootstrap CI on the net
/// advantage. Verdict parse failures are excluded from the rates and
/// counted in parse_failures.
JudgeStats evaluate_pairwise(std::span<const TokenSeq> prompts, const Generator& gen_a,
                             const Generator& gen_b, const JudgeAdapter& adapter, uint64_t seed);

/// Aggregation helper shared by evaluate_pairwise and tests.
JudgeStats aggregate_verdicts(std::span<const JudgeVerdict> verdicts, int parse_failures,
                              uint64_t bootstrap_seed);

}  // namespace promptecho
