#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "promptecho/backend.hpp"
#include "promptecho/image.hpp"
#include "promptecho/vocab.hpp"

namespace promptecho {

/// One prompt, K sampled images, their rewards and group-centered
/// advantages. Invariants: K >= 2, the three vectors share length K, and
/// mean-centered advantages sum to zero.
struct RewardGroup {
  TokenSeq prompt;
  std::vector<Image> images;
  std::vector<double> rewards;
  std::vector<double> advantages;

  size_t group_size() const { return images.size(); }
  bool degenerate() const;  // all rewards exactly equal
};

/// Cache key for teacher-forced rewards; deterministic backends make
/// equal keys imply equal rewards.
struct RewardCacheKey {
  std::string image_hash;
  std::string query_hash;
  std::string prompt_hash;
  std::string backend_name;
  double fidelity = 1.0;

  bool operator==(const RewardCacheKey&) const = default;
  struct Hasher {
    size_t operator()(const RewardCacheKey& k) const;
  };
};

/// In-memory reward cache with optional JSONL spill. Safe for concurrent
/// lookup/store. The spill file is loaded on construction and appended
/// to on every fresh store.
class RewardCache {
 public:
  RewardCache() = default;
  explicit RewardCache(std::filesystem::path spill_path);

  std::optional<double> lookup(const RewardCacheKey& key) const;
  void store(const RewardCacheKey& key, double reward);
  size_t size() const;

 private:
  mutable std::mutex mu_;
  std::unordered_map<RewardCacheKey, double, RewardCacheKey::Hasher> map_;
  std::optional<std::filesystem::path> spill_;
};

/// Teacher-forced reward: mean per-token log-probability of the prompt
/// given the image and query, i.e. exactly the negative token-level
/// cross-entropy. Always <= 0. Throws EmptyPrompt when the prompt has no
/// tokens and NondeterministicBackend when the backend cannot guarantee
/// deterministic teacher forcing.
double promptecho_reward(const Image& image, const TokenSeq& query, const TokenSeq& prompt,
                         const VlmBackend& backend);

/// Generative-score baseline: asks the backend to rate the image 0..10
/// with a fixed scoring query embedding the prompt and parses the first
/// integer token. Throws ScoreParseError when no in-range integer appears.
double inferscore_reward(const Image& image, const TokenSeq& prompt, const VlmBackend& backend,
                         double temperature, uint64_t seed);

/// Group-relative advantages: reward minus group mean; optionally divided
/// by the group standard deviation (epsilon-guarded). Throws GroupTooSmall
/// for fewer than 2 rewards.
std::vector<double> group_advantage(std::span<const double> rewards, bool std_normalize = false);

enum class RewardMode { kPromptEcho, kInferScore };

const char* reward_mode_name(RewardMode mode);
RewardMode reward_mode_from_name(const std::string& name);

struct ScoreGroupOptions {
  RewardMode mode = RewardMode::kPromptEcho;
  uint64_t seed = 0;
  double temperature = 0.0;       // inferscore generation temperature
  bool std_normalize = false;
  double reward_clip = 0.0;       // 0 disables; else rewards clipped to [-clip, clip]
  RewardCache* cache = nullptr;   // consulted for promptecho only
};

/// Scores a whole group with the selected reward and fills advantages.
RewardGroup score_group(const TokenSeq& prompt, std::vector<Image> images,
                        const VlmBackend& backend, const ScoreGroupOptions& options);

/// One JSONL line per image:
/// {"prompt_id", "image_id", "mode", "reward", "advantage", "backend"}.
void dump_rewards_jsonl(std::ostream& out, const RewardGroup& group, RewardMode mode,
                        const VlmBackend& backend);

}  // namespace promptecho
