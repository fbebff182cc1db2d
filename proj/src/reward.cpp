#include "promptecho/reward.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <ostream>

#include "json.hpp"
#include "promptecho/errors.hpp"
#include "promptecho/hash.hpp"
#include "promptecho/rng.hpp"

namespace promptecho {

bool RewardGroup::degenerate() const {
  for (size_t i = 1; i < rewards.size(); ++i)
    if (rewards[i] != rewards[0]) return false;
  return true;
}

size_t RewardCacheKey::Hasher::operator()(const RewardCacheKey& k) const {
  uint64_t h = fnv1a64(k.image_hash);
  h = fnv1a64(k.query_hash, h);
  h = fnv1a64(k.prompt_hash, h);
  h = fnv1a64(k.backend_name, h);
  uint64_t bits;
  static_assert(sizeof(bits) == sizeof(k.fidelity));
  std::memcpy(&bits, &k.fidelity, sizeof(bits));
  h ^= bits;
  return static_cast<size_t>(h);
}

RewardCache::RewardCache(std::filesystem::path spill_path) : spill_(std::move(spill_path)) {
  std::ifstream in(*spill_);
  if (!in) return;  // nothing spilled yet
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    RewardCacheKey key{j.at("image_hash"), j.at("query_hash"), j.at("prompt_hash"),
                       j.at("backend"), j.at("fidelity")};
    map_[key] = j.at("reward");
  }
}

std::optional<double> RewardCache::lookup(const RewardCacheKey& key) const {
  std::lock_guard lock(mu_);
  auto it = map_.find(key);
  if (it == map_.end()) return std::nullopt;
  return it->second;
}

void RewardCache::store(const RewardCacheKey& key, double reward) {
  std::lock_guard lock(mu_);
  auto [it, inserted] = map_.emplace(key, reward);
  if (!inserted || !spill_) return;
  std::ofstream out(*spill_, std::ios::app);
  nlohmann::json j{{"image_hash", key.image_hash}, {"query_hash", key.query_hash},
                   {"prompt_hash", key.prompt_hash}, {"backend", key.backend_name},
                   {"fidelity", key.fidelity}, {"reward", reward}};
  out << j.dump() << "\n";
}

size_t RewardCache::size() const {
  std::lock_guard lock(mu_);
  return map_.size();
}

namespace {

std::string seq_hash(const TokenSeq& seq) {
  uint64_t h = fnv1a64(seq.vocab_id);
  h = fnv1a64({reinterpret_cast<const uint8_t*>(seq.ids.data()),
               seq.ids.size() * sizeof(TokenId)}, h);
  return to_hex(h);
}

}  // namespace

double promptecho_reward(const Image& image, const TokenSeq& query, const TokenSeq& prompt,
                         const VlmBackend& backend) {
  if (prompt.empty()) throw EmptyPrompt("reward of an empty prompt is undefined");
  if (!backend.caps().deterministic_teacher_forcing)
    throw NondeterministicBackend("backend '" + backend.caps().name +
                                  "' does not declare deterministic teacher forcing");
  std::vector<double> logprobs = backend.teacher_forced_logprobs(image, query, prompt);
  double sum = 0.0;
  for (double lp : logprobs) sum += lp;
  return sum / static_cast<double>(logprobs.size());
}

double inferscore_reward(const Image& image, const TokenSeq& prompt, const VlmBackend& backend,
                         double temperature, uint64_t seed) {
  if (prompt.empty()) throw EmptyPrompt("reward of an empty prompt is undefined");
  const int kMaxTokens = 8;
  TokenSeq query = build_score_query(prompt);
  TokenSeq reply = backend.generate(image, query, kMaxTokens, temperature, seed);
  const auto& vocab = backend.vocab();
  for (TokenId id : reply.ids) {
    const std::string& tok = vocab.token(id);
    if (tok.empty() || !std::all_of(tok.begin(), tok.end(),
                                    [](char c) { return c >= '0' && c <= '9'; }))
      continue;
    int value = std::stoi(tok);
    if (value >= 0 && value <= 10) return static_cast<double>(value);
  }
  throw ScoreParseError("no integer in [0,10] within " + std::to_string(kMaxTokens) +
                        " generated tokens");
}

std::vector<double> group_advantage(std::span<const double> rewards, bool std_normalize) {
  if (rewards.size() < 2)
    throw GroupTooSmall("group advantage needs at least 2 rewards, got " +
                        std::to_string(rewards.size()));
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(rewards.size());
  std::vector<double> adv(rewards.size());
  for (size_t i = 0; i < rewards.size(); ++i) adv[i] = rewards[i] - mean;
  if (std_normalize) {
    double var = 0.0;
    for (double a : adv) var += a * a;
    double sd = std::sqrt(var / static_cast<double>(adv.size()));
    for (auto& a : adv) a /= (sd + 1e-8);
  }
  return adv;
}

const char* reward_mode_name(RewardMode mode) {
  return mode == RewardMode::kPromptEcho ? "promptecho" : "inferscore";
}

RewardMode reward_mode_from_name(const std::string& name) {
  if (name == "promptecho") return RewardMode::kPromptEcho;
  if (name == "inferscore") return RewardMode::kInferScore;
  throw ConfigError("unknown reward mode: " + name);
}

RewardGroup score_group(const TokenSeq& prompt, std::vector<Image> images,
                        const VlmBackend& backend, const ScoreGroupOptions& options) {
  if (images.size() < 2)
    throw GroupTooSmall("score_group needs K >= 2 images, got " + std::to_string(images.size()));
  RewardGroup group;
  group.prompt = prompt;
  group.images = std::move(images);
  group.rewards.reserve(group.images.size());

  for (size_t j = 0; j < group.images.size(); ++j) {
    double reward;
    if (options.mode == RewardMode::kPromptEcho) {
      TokenSeq query = caption_query();
      RewardCacheKey key{image_hash(group.images[j]), seq_hash(query), seq_hash(prompt),
                         backend.caps().name, backend.caps().fidelity};
      std::optional<double> hit = options.cache ? options.cache->lookup(key) : std::nullopt;
      if (hit) {
        reward = *hit;
      } else {
        reward = promptecho_reward(group.images[j], query, prompt, backend);
        if (options.cache) options.cache->store(key, reward);
      }
    } else {
      reward = inferscore_reward(group.images[j], prompt, backend, options.temperature,
                                 stream_seed(options.seed, {j}));
    }
    if (options.reward_clip > 0.0)
      reward = std::clamp(reward, -options.reward_clip, options.reward_clip);
    group.rewards.push_back(reward);
  }
  group.advantages = group_advantage(group.rewards, options.std_normalize);
  return group;
}

void dump_rewards_jsonl(std::ostream& out, const RewardGroup& group, RewardMode mode,
                        const VlmBackend& backend) {
  std::string prompt_id = seq_hash(group.prompt);
  for (size_t j = 0; j < group.images.size(); ++j) {
    nlohmann::json line{{"prompt_id", prompt_id},
                        {"image_id", image_hash(group.images[j])},
                        {"mode", reward_mode_name(mode)},
                        {"reward", group.rewards[j]},
                        {"advantage", group.advantages[j]},
                        {"backend", backend.caps().name}};
    out << line.dump() << "\n";
  }
}

}  // namespace promptecho
