#include "promptecho/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <unordered_map>

#include "json.hpp"
#include "promptecho/errors.hpp"
#include "promptecho/rng.hpp"

namespace promptecho {

void TrainConfig::validate() const {
  if (prompts_per_iter < 1) throw ConfigError("prompts_per_iter must be >= 1");
  if (group_size < 2) throw ConfigError("group_size must be >= 2");
  if (epochs_per_batch < 1) throw ConfigError("epochs_per_batch must be >= 1");
  if (iterations < 0) throw ConfigError("iterations must be >= 0");
  if (!(step_size > 0.0)) throw ConfigError("step_size must be > 0");
  if (eval_cadence < 1) throw ConfigError("eval_cadence must be >= 1");
  if (!(p_hit > 0.0 && p_hit <= 1.0)) throw ConfigError("p_hit must be in (0, 1]");
}

void TrainLog::write_csv(std::ostream& out) const {
  out << "iteration,mean_reward,mean_abs_advantage,degenerate_fraction,heldout_alignment,"
         "wall_clock_s\n";
  for (const auto& r : records) {
    nlohmann::json row = {r.mean_reward, r.mean_abs_advantage, r.degenerate_fraction,
                          r.heldout_alignment, r.wall_clock_s};
    out << r.iteration;
    for (const auto& v : row) out << "," << v.dump();
    out << "\n";
  }
}

void TrainLog::write_jsonl(std::ostream& out) const {
  for (const auto& r : records) {
    nlohmann::json j{{"iteration", r.iteration},
                     {"mean_reward", r.mean_reward},
                     {"mean_abs_advantage", r.mean_abs_advantage},
                     {"degenerate_fraction", r.degenerate_fraction},
                     {"heldout_alignment", r.heldout_alignment},
                     {"wall_clock_s", r.wall_clock_s}};
    out << j.dump() << "\n";
  }
}

TrainLog TrainLog::read_jsonl(std::istream& in) {
  TrainLog log;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    TrainRecord r;
    r.iteration = j.at("iteration").get<int>();
    r.mean_reward = j.at("mean_reward").get<double>();
    r.mean_abs_advantage = j.at("mean_abs_advantage").get<double>();
    r.degenerate_fraction = j.at("degenerate_fraction").get<double>();
    r.heldout_alignment = j.at("heldout_alignment").get<double>();
    r.wall_clock_s = j.at("wall_clock_s").get<double>();
    log.records.push_back(r);
  }
  return log;
}

bool TrainLog::deterministic_equals(const TrainLog& other) const {
  if (records.size() != other.records.size()) return false;
  for (size_t i = 0; i < records.size(); ++i) {
    const auto& a = records[i];
    const auto& b = other.records[i];
    if (a.iteration != b.iteration || a.mean_reward != b.mean_reward ||
        a.mean_abs_advantage != b.mean_abs_advantage ||
        a.degenerate_fraction != b.degenerate_fraction ||
        a.heldout_alignment != b.heldout_alignment)
      return false;
  }
  return true;
}

PolicyParams awm_step(const PolicyParams& params, const std::vector<GroupBatch>& batch,
                      double step_size) {
  PolicyGrad total{};
  for (const auto& group : batch) {
    for (size_t j = 0; j < group.records.size(); ++j) {
      if (group.advantages[j] == 0.0) continue;  // degenerate groups contribute nothing
      LogProbGrad lpg = log_prob_and_grad(params, group.records[j], group.prompt);
      total.add_scaled(lpg.grad, group.advantages[j]);
    }
  }
  if (!total.finite()) throw NonFiniteGradient("gradient contains non-finite entries");
  if (total.max_abs() == 0.0) return params;  // bitwise identity on zero gradient

  PolicyParams out = params;
  auto axpy = [step_size](auto& dst_table, const auto& src_table) {
    for (size_t i = 0; i < dst_table.size(); ++i)
      for (size_t j = 0; j < dst_table[i].size(); ++j)
        dst_table[i][j] += step_size * src_table[i][j];
  };
  axpy(out.count_logits, total.count_logits);
  axpy(out.shape_table, total.shape_table);
  axpy(out.color_table, total.color_table);
  axpy(out.row_table, total.row_table);
  axpy(out.col_table, total.col_table);
  return out;
}

TrainInputs make_train_inputs(const std::vector<CaptionRecord>& records,
                              const SplitManifest& manifest, const VlmBackend& backend) {
  const std::string expected_query = backend.vocab().detokenize(caption_query());
  const std::string expected_backend = backend.caps().name;
  std::unordered_map<std::string, const CaptionRecord*> by_id;
  for (const auto& r : records) {
    if (r.backend != expected_backend || r.query != expected_query)
      throw CorpusMismatch("corpus record " + r.id + " was captioned by (" + r.backend + ", \"" +
                           r.query + "\") but rewards will use (" + expected_backend + ", \"" +
                           expected_query + "\")");
    by_id[r.id] = &r;
  }
  auto lookup = [&](const std::string& id) -> TokenSeq {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw ConfigError("manifest id not present in corpus: " + id);
    return backend.vocab().tokenize(it->second->caption);
  };
  TrainInputs inputs;
  for (const auto& id : manifest.train_ids) inputs.train_prompts.push_back(lookup(id));
  for (const auto& id : manifest.heldout_ids) inputs.heldout_prompts.push_back(lookup(id));
  return inputs;
}

double heldout_alignment(const PolicyParams& params, const std::vector<TokenSeq>& heldout_prompts,
                         uint64_t seed) {
  if (heldout_prompts.empty()) return 0.0;
  double sum = 0.0;
  for (size_t i = 0; i < heldout_prompts.size(); ++i) {
    auto recs = sample(params, heldout_prompts[i], 1, stream_seed(seed, {0xe7a1ULL, i}));
    sum += alignment_score(recs[0].scene, heldout_prompts[i]);
  }
  return sum / static_cast<double>(heldout_prompts.size());
}

double uniform_policy_baseline(const std::vector<TokenSeq>& heldout_prompts) {
  if (heldout_prompts.empty()) return 0.0;
  // Under all-zero logits: count uniform over 0..4; per matched object the
  // expected number of matching slots is 1/3 + 1/5 + 1/3 + 1/3 (shape,
  // color, row, col) since distinct-cell placement keeps uniform marginals.
  const double slot_match = 1.0 / kNumShapes + 1.0 / kNumColors + 2.0 / kGridSize;
  double total = 0.0;
  for (const auto& prompt : heldout_prompts) {
    size_t n_c = parse_caption(prompt).size();
    double e = 0.0;
    for (int n_s = 0; n_s <= kMaxObjects; ++n_s) {
      double p_count = 1.0 / kCountSupport;
      if (n_c == 0 && n_s == 0) {
        e += p_count;  // both empty scores 1
      } else if (n_s > 0 && n_c > 0) {
        double matched = static_cast<double>(std::min<size_t>(n_c, static_cast<size_t>(n_s)));
        double denom = 4.0 * static_cast<double>(std::max<size_t>(n_c, static_cast<size_t>(n_s)));
        e += p_count * matched * slot_match / denom;
      }
    }
    total += e;
  }
  return total / static_cast<double>(heldout_prompts.size());
}

TrainResult train(const TrainConfig& config, const TrainInputs& inputs,
                  const VlmBackend& backend, const TrainHooks& hooks) {
  config.validate();
  if (inputs.train_prompts.empty()) throw ConfigError("empty training corpus");
  if (static_cast<size_t>(config.prompts_per_iter) > inputs.train_prompts.size())
    throw ConfigError("prompts_per_iter exceeds training corpus size");
  if (config.reward_mode == RewardMode::kPromptEcho &&
      !backend.caps().deterministic_teacher_forcing)
    throw NondeterministicBackend("promptecho training requires deterministic teacher forcing");

  const uint64_t seed_prompts = stream_seed(config.seed, {1});
  const uint64_t seed_sampling = stream_seed(config.seed, {2});
  const uint64_t seed_reward = stream_seed(config.seed, {3});
  const uint64_t seed_eval = stream_seed(config.seed, {4});

  TrainResult result;
  result.params = hooks.resume_params ? *hooks.resume_params : PolicyParams();
  auto t0 = std::chrono::steady_clock::now();

  for (int iter = hooks.resume_iteration; iter < config.iterations; ++iter) {
    // prompts without replacement within the iteration
    Rng prng(stream_seed(seed_prompts, {static_cast<uint64_t>(iter)}));
    std::vector<size_t> idx(inputs.train_prompts.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (int i = 0; i < config.prompts_per_iter; ++i) {
      size_t j = static_cast<size_t>(i) + prng.below(idx.size() - static_cast<size_t>(i));
      std::swap(idx[static_cast<size_t>(i)], idx[j]);
    }

    // generate + score each group once; rewards are reused by every epoch
    std::vector<GroupBatch> batch;
    double reward_sum = 0.0, abs_adv_sum = 0.0;
    int degenerate = 0;
    size_t sample_count = 0;
    for (int p = 0; p < config.prompts_per_iter; ++p) {
      const TokenSeq& prompt = inputs.train_prompts[idx[static_cast<size_t>(p)]];
      uint64_t gseed = stream_seed(seed_sampling,
                                   {static_cast<uint64_t>(iter), static_cast<uint64_t>(p)});
      GroupBatch group;
      group.prompt = prompt;
      group.records = sample(result.params, prompt, config.group_size, gseed);

      std::vector<Image> images;
      images.reserve(group.records.size());
      for (const auto& rec : group.records) images.push_back(render(rec.scene));

      ScoreGroupOptions opts;
      opts.mode = config.reward_mode;
      opts.seed = stream_seed(seed_reward, {static_cast<uint64_t>(iter), static_cast<uint64_t>(p)});
      opts.temperature = config.inferscore_temperature;
      opts.std_normalize = config.advantage_std_normalize;
      opts.reward_clip = config.reward_clip;
      opts.cache = hooks.cache;
      RewardGroup scored = score_group(prompt, std::move(images), backend, opts);
      if (hooks.reward_dump) dump_rewards_jsonl(*hooks.reward_dump, scored, opts.mode, backend);

      for (double r : scored.rewards) reward_sum += r;
      for (double a : scored.advantages) abs_adv_sum += std::fabs(a);
      sample_count += scored.rewards.size();
      degenerate += scored.degenerate() ? 1 : 0;

      group.advantages = std::move(scored.advantages);
      batch.push_back(std::move(group));
    }

    for (int epoch = 0; epoch < config.epochs_per_batch; ++epoch) {
      result.params = awm_step(result.params, batch, config.step_size);
    }

    TrainRecord rec;
    rec.iteration = iter;
    rec.mean_reward = reward_sum / static_cast<double>(sample_count);
    rec.mean_abs_advantage = abs_adv_sum / static_cast<double>(sample_count);
    rec.degenerate_fraction =
        static_cast<double>(degenerate) / static_cast<double>(config.prompts_per_iter);
    rec.heldout_alignment = heldout_alignment(result.params, inputs.heldout_prompts, seed_eval);
    rec.wall_clock_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.records.push_back(rec);

    if (hooks.on_checkpoint &&
        ((iter + 1) % config.eval_cadence == 0 || iter + 1 == config.iterations)) {
      hooks.on_checkpoint(iter + 1, result.params);
    }
  }
  return result;
}

}  // namespace promptecho
