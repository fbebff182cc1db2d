#include <cmath>

#include "doctest.h"
#include "promptecho/errors.hpp"
#include "promptecho/backend.hpp"
#include "promptecho/judge.hpp"
#include "promptecho/scene.hpp"

using namespace promptecho;

namespace {

Scene red_circle_top_left() {
  Scene s;
  s.objects.push_back({Shape::kCircle, Color::kRed, 0, 0});
  return s;
}

/// Deliberately position-biased judge: always prefers whichever image it
/// sees first. The swap mechanism must neutralize it.
class FirstBiasedJudge : public JudgeAdapter {
 public:
  AdapterVerdict judge(const TokenSeq&, const Image&, const Image&) const override {
    return {AdapterVerdict::Pick::kFirst, "first looks better"};
  }
};

class ThrowingJudge : public JudgeAdapter {
 public:
  AdapterVerdict judge(const TokenSeq&, const Image&, const Image&) const override {
    throw VerdictParseError("malformed verdict");
  }
};

}  // namespace

TEST_CASE("oracle judge ties on identical images") {
  OracleJudge judge;
  Scene s = red_circle_top_left();
  Image img = render(s);
  JudgeVerdict v = compare(canonical_caption(s), img, img, judge, 3);
  CHECK(v.preference == Preference::kTie);
}

TEST_CASE("faithful image beats the corrupted one for every seed") {
  OracleJudge judge;
  Scene s = red_circle_top_left();
  TokenSeq prompt = canonical_caption(s);
  Image good = render(s);
  Image bad = render(corrupt(s, CorruptKind::kColor, 8));
  for (uint64_t seed = 0; seed < 100; ++seed) {
    JudgeVerdict v = compare(prompt, good, bad, judge, seed);
    CHECK(v.preference == Preference::kImageA);  // swap must never flip the outcome
  }
}

TEST_CASE("swap correctness: swapped comparison equals relabeled unswapped one") {
  OracleJudge judge;
  Scene s = red_circle_top_left();
  TokenSeq prompt = canonical_caption(s);
  Image good = render(s);
  Image bad = render(corrupt(s, CorruptKind::kShape, 9));
  // find seeds exercising both presentation orders
  bool saw_swapped = false, saw_unswapped = false;
  for (uint64_t seed = 0; seed < 50; ++seed) {
    JudgeVerdict ab = compare(prompt, good, bad, judge, seed);
    JudgeVerdict ba = compare(prompt, bad, good, judge, seed);
    // same seed, swapped arguments: preference must relabel, never agree
    CHECK(ab.preference == Preference::kImageA);
    CHECK(ba.preference == Preference::kImageB);
    saw_swapped = saw_swapped || ab.swapped;
    saw_unswapped = saw_unswapped || !ab.swapped;
  }
  CHECK(saw_swapped);
  CHECK(saw_unswapped);
}

TEST_CASE("position-biased judge is debiased below 5pp by the swap") {
  FirstBiasedJudge biased;
  Scene s = red_circle_top_left();
  TokenSeq prompt = canonical_caption(s);
  Image img = render(s);
  std::vector<JudgeVerdict> verdicts;
  for (uint64_t i = 0; i < 1000; ++i)
    verdicts.push_back(compare(prompt, img, img, biased, stream_seed(42, {i})));
  JudgeStats stats = aggregate_verdicts(verdicts, 0, 42);
  CHECK(std::fabs(stats.net_advantage) < 0.05);
  CHECK(stats.tie_rate == 0.0);  // the biased judge never ties
}

TEST_CASE("stats closure and arithmetic") {
  SUBCASE("rates from counted verdicts sum to one") {
    std::vector<JudgeVerdict> verdicts;
    for (int i = 0; i < 123; ++i) {
      JudgeVerdict v;
      v.preference = i % 3 == 0 ? Preference::kImageA
                   : i % 3 == 1 ? Preference::kImageB : Preference::kTie;
      verdicts.push_back(v);
    }
    JudgeStats stats = aggregate_verdicts(verdicts, 0, 1);
    CHECK(stats.win_rate + stats.baseline_win_rate + stats.tie_rate ==
          doctest::Approx(1.0).epsilon(1e-9));
    CHECK(stats.ci95_lo <= stats.net_advantage);
    CHECK(stats.net_advantage <= stats.ci95_hi);
  }
  SUBCASE("120 wins / 60 losses / 20 ties of 200 nets +30pp") {
    std::vector<JudgeVerdict> verdicts;
    for (int i = 0; i < 120; ++i) verdicts.push_back({Preference::kImageA, "", false});
    for (int i = 0; i < 60; ++i) verdicts.push_back({Preference::kImageB, "", false});
    for (int i = 0; i < 20; ++i) verdicts.push_back({Preference::kTie, "", false});
    JudgeStats stats = aggregate_verdicts(verdicts, 0, 1);
    CHECK(stats.net_advantage == doctest::Approx(0.30).epsilon(1e-12));
  }
  SUBCASE("published headline rates reproduce their net advantage") {
    // win 61.5% / baseline 34.7% / tie 3.8% -> +26.8pp
    std::vector<JudgeVerdict> verdicts;
    for (int i = 0; i < 615; ++i) verdicts.push_back({Preference::kImageA, "", false});
    for (int i = 0; i < 347; ++i) verdicts.push_back({Preference::kImageB, "", false});
    for (int i = 0; i < 38; ++i) verdicts.push_back({Preference::kTie, "", false});
    JudgeStats stats = aggregate_verdicts(verdicts, 0, 1);
    CHECK(stats.net_advantage * 100.0 == doctest::Approx(26.8).epsilon(1e-9));
  }
}

TEST_CASE("evaluate_pairwise") {
  OracleJudge judge;
  Rng rng(61);
  std::vector<TokenSeq> prompts;
  for (int i = 0; i < 40; ++i) {
    Scene s = random_scene(rng);

    prompts.push_back(canonical_caption(s));
  }
  auto faithful = [&](const TokenSeq& prompt, uint64_t) {
    Scene s;
    s.objects = parse_caption(prompt);
    s.sort_reading_order();
    return render(s);
  };
  auto blank = [&](const TokenSeq&, uint64_t) { return render(Scene{}); };

  SUBCASE("a generator against itself is all ties") {
    JudgeStats stats = evaluate_pairwise(prompts, faithful, faithful, judge, 5);
    CHECK(stats.tie_rate == 1.0);
    CHECK(stats.net_advantage == 0.0);
    CHECK(stats.win_rate == 0.0);
  }
  SUBCASE("faithful generator dominates the blank one") {
    JudgeStats stats = evaluate_pairwise(prompts, faithful, blank, judge, 5);
    CHECK(stats.net_advantage > 0.5);
  }
  SUBCASE("parse failures are excluded and counted") {
    ThrowingJudge throwing;
    JudgeStats stats = evaluate_pairwise(prompts, faithful, blank, throwing, 5);
    CHECK(stats.n == 0);
    CHECK(stats.parse_failures == 40);
  }
}

TEST_CASE("stats JSON report carries the table fields") {
  std::vector<JudgeVerdict> verdicts(10, JudgeVerdict{Preference::kTie, "", false});
  JudgeStats stats = aggregate_verdicts(verdicts, 1, 3);
  std::string json = stats.to_json_string();
  for (const char* field :
       {"win_rate", "baseline_win_rate", "tie_rate", "net_advantage_pp", "ci95", "parse_failures"})
    CHECK(json.find(field) != std::string::npos);
}
