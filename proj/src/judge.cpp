#include "promptecho/judge.hpp"

#include <algorithm>
#include <vector>

#include "json.hpp"
#include "promptecho/errors.hpp"
#include "promptecho/rng.hpp"
#include "promptecho/scene.hpp"

namespace promptecho {

const char* preference_name(Preference p) {
  switch (p) {
    case Preference::kImageA: return "image_a";
    case Preference::kImageB: return "image_b";
    case Preference::kTie: return "tie";
  }
  return "tie";
}

std::string JudgeStats::to_json_string() const {
  nlohmann::json j{{"n", n},
                   {"win_rate", win_rate},
                   {"baseline_win_rate", baseline_win_rate},
                   {"tie_rate", tie_rate},
                   {"net_advantage_pp", net_advantage * 100.0},
                   {"ci95", {ci95_lo * 100.0, ci95_hi * 100.0}},
                   {"parse_failures", parse_failures}};
  return j.dump(2);
}

AdapterVerdict OracleJudge::judge(const TokenSeq& prompt, const Image& first,
                                  const Image& second) const {
  double s1 = alignment_score(decode_lenient(first), prompt);
  double s2 = alignment_score(decode_lenient(second), prompt);
  AdapterVerdict v;
  if (s1 > s2) v.pick = AdapterVerdict::Pick::kFirst;
  else if (s2 > s1) v.pick = AdapterVerdict::Pick::kSecond;
  else v.pick = AdapterVerdict::Pick::kTie;
  v.reasoning = "alignment " + std::to_string(s1) + " vs " + std::to_string(s2);
  return v;
}

JudgeVerdict compare(const TokenSeq& prompt, const Image& image_a, const Image& image_b,
                     const JudgeAdapter& adapter, uint64_t seed) {
  Rng rng(stream_seed(seed, {0x5377ULL}));
  bool swapped = rng.bernoulli(0.5);
  const Image& first = swapped ? image_b : image_a;
  const Image& second = swapped ? image_a : image_b;
  AdapterVerdict av = adapter.judge(prompt, first, second);

  JudgeVerdict out;
  out.swapped = swapped;
  out.reasoning = std::move(av.reasoning);
  switch (av.pick) {
    case AdapterVerdict::Pick::kTie:
      out.preference = Preference::kTie;
      break;
    case AdapterVerdict::Pick::kFirst:
      out.preference = swapped ? Preference::kImageB : Preference::kImageA;
      break;
    case AdapterVerdict::Pick::kSecond:
      out.preference = swapped ? Preference::kImageA : Preference::kImageB;
      break;
  }
  return out;
}

JudgeStats aggregate_verdicts(std::span<const JudgeVerdict> verdicts, int parse_failures,
                              uint64_t bootstrap_seed) {
  JudgeStats stats;
  stats.parse_failures = parse_failures;
  stats.n = static_cast<int>(verdicts.size());
  if (verdicts.empty()) return stats;

  int wins = 0, losses = 0, ties = 0;
  for (const auto& v : verdicts) {
    if (v.preference == Preference::kImageA) ++wins;
    else if (v.preference == Preference::kImageB) ++losses;
    else ++ties;
  }
  double n = static_cast<double>(verdicts.size());
  stats.win_rate = wins / n;
  stats.baseline_win_rate = losses / n;
  stats.tie_rate = ties / n;
  stats.net_advantage = stats.win_rate - stats.baseline_win_rate;

  // percentile bootstrap over verdicts
  const int kResamples = 1000;
  std::vector<double> nets;
  nets.reserve(kResamples);
  Rng rng(stream_seed(bootstrap_seed, {0xb007ULL}));
  for (int r = 0; r < kResamples; ++r) {
    int w = 0, l = 0;
    for (size_t i = 0; i < verdicts.size(); ++i) {
      const auto& v = verdicts[rng.below(verdicts.size())];
      if (v.preference == Preference::kImageA) ++w;
      else if (v.preference == Preference::kImageB) ++l;
    }
    nets.push_back((w - l) / n);
  }
  std::sort(nets.begin(), nets.end());
  stats.ci95_lo = nets[static_cast<size_t>(0.025 * kResamples)];
  stats.ci95_hi = nets[static_cast<size_t>(0.975 * kResamples) - 1];
  return stats;
}

JudgeStats evaluate_pairwise(std::span<const TokenSeq> prompts, const Generator& gen_a,
                             const Generator& gen_b, const JudgeAdapter& adapter, uint64_t seed) {
  std::vector<JudgeVerdict> verdicts;
  verdicts.reserve(prompts.size());
  int parse_failures = 0;
  for (size_t i = 0; i < prompts.size(); ++i) {
    // both generators share the per-prompt seed, so identical checkpoints
    // produce identical images and hence ties
    uint64_t gen_seed = stream_seed(seed, {0x6e6eULL, i});
    Image a = gen_a(prompts[i], gen_seed);
    Image b = gen_b(prompts[i], gen_seed);
    try {
      verdicts.push_back(compare(prompts[i], a, b, adapter, stream_seed(seed, {0xcafeULL, i})));
    } catch (const VerdictParseError&) {
      ++parse_failures;  // excluded from the rates, surfaced in the report
    }
  }
  return aggregate_verdicts(verdicts, parse_failures, seed);
}

}  // namespace promptecho
