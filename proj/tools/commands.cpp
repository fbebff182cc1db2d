#include "commands.hpp"

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "json.hpp"
#include "promptecho/errors.hpp"
#include "promptecho/judge.hpp"
#include "promptecho/rng.hpp"
#include "promptecho/templates.hpp"

namespace promptecho::cli {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

/// Writes the resolved config and an output manifest into the run dir.
/// The manifest pins every versioned ingredient a rerun would need.
void finalize_run(const CommonOpts& common, const std::string& command,
                  const std::vector<std::string>& outputs) {
  write_text(fs::path(common.out_dir) / "resolved_config.txt", common.resolved_config);
  nlohmann::json manifest{{"command", command},
                          {"outputs", outputs},
                          {"versions",
                           {{"vocabulary", Vocabulary::builtin().id()},
                            {"score_query", kScoreQueryVersion},
                            {"judge_template", kJudgeTemplateVersion},
                            {"label_extraction_template", kLabelExtractionTemplateVersion},
                            {"ocr_reward_template", kOcrRewardTemplateVersion},
                            {"text_eval_template", kTextEvalTemplateVersion}}}};
  write_text(fs::path(common.out_dir) / "manifest.json", manifest.dump(2) + "\n");
}

void ensure_out_dir(const CommonOpts& common) {
  if (common.out_dir.empty()) throw ConfigError("--out is required");
  fs::create_directories(common.out_dir);
}

struct Checkpoint {
  int iteration = 0;
  PolicyParams params;
};

void save_checkpoint(const fs::path& path, int iteration, const PolicyParams& params) {
  nlohmann::json j{{"iteration", iteration},
                   {"params", nlohmann::json::parse(params.to_json_string())}};
  write_text(path, j.dump(2) + "\n");
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read checkpoint: " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw IoError("checkpoint is not valid JSON: " + path.string());
  Checkpoint ckpt;
  if (j.contains("params")) {
    ckpt.iteration = j.value("iteration", 0);
    ckpt.params = PolicyParams::from_json_string(j.at("params").dump());
  } else {
    ckpt.params = PolicyParams::from_json_string(text);  // bare params file
  }
  return ckpt;
}

TrainInputs load_inputs(const std::string& corpus_path, const std::string& manifest_path,
                        const VlmBackend& backend) {
  auto records = read_corpus_jsonl(corpus_path);
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot read manifest: " + manifest_path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return make_train_inputs(records, SplitManifest::from_json_string(text), backend);
}

Generator policy_generator(const PolicyParams& params) {
  return [params](const TokenSeq& prompt, uint64_t seed) {
    auto records = sample(params, prompt, 1, seed);
    return render(records[0].scene);
  };
}

}  // namespace

int cmd_prepare(const PrepareOpts& opts) {
  ensure_out_dir(opts.common);
  OracleBackend backend(opts.p_hit);
  CorpusOptions corpus_opts;
  corpus_opts.max_objects = opts.max_objects;
  auto records = build_corpus(opts.scenes, backend, opts.seed, corpus_opts);
  SplitManifest manifest = split(records, opts.heldout_fraction, opts.seed);

  fs::path out(opts.common.out_dir);
  write_corpus_jsonl(records, out / "corpus.jsonl");
  write_text(out / "split.json", manifest.to_json_string() + "\n");
  write_text(out / "vocabulary.json", Vocabulary::builtin().to_json_string() + "\n");
  finalize_run(opts.common, "prepare", {"corpus.jsonl", "split.json", "vocabulary.json"});
  std::cout << "corpus: " << records.size() << " captions (" << manifest.train_ids.size()
            << " train / " << manifest.heldout_ids.size() << " held out)\n";
  return 0;
}

int cmd_train(const TrainOpts& opts) {
  ensure_out_dir(opts.common);
  OracleBackend backend(opts.config.p_hit);
  TrainInputs inputs = load_inputs(opts.corpus_path, opts.manifest_path, backend);

  fs::path out(opts.common.out_dir);
  fs::create_directories(out / "checkpoints");
  std::vector<std::string> outputs = {"policy.json", "trainlog.csv", "trainlog.jsonl"};

  TrainHooks hooks;
  hooks.on_checkpoint = [&](int iteration, const PolicyParams& params) {
    char name[32];
    std::snprintf(name, sizeof(name), "ckpt_%06d.json", iteration);
    save_checkpoint(out / "checkpoints" / name, iteration, params);
    outputs.push_back(std::string("checkpoints/") + name);
  };
  std::optional<RewardCache> cache;
  if (opts.cache_spill) {
    cache.emplace(out / "reward_cache.jsonl");
    hooks.cache = &*cache;
    outputs.push_back("reward_cache.jsonl");
  }
  std::ofstream reward_dump;
  if (opts.dump_rewards) {
    reward_dump.open(out / "rewards.jsonl");
    hooks.reward_dump = &reward_dump;
    outputs.push_back("rewards.jsonl");
  }
  TrainLog prior_log;
  if (!opts.resume_checkpoint.empty()) {
    Checkpoint ckpt = load_checkpoint(opts.resume_checkpoint);
    hooks.resume_params = ckpt.params;
    hooks.resume_iteration = ckpt.iteration;
    std::ifstream prior(out / "trainlog.jsonl");
    if (prior) prior_log = TrainLog::read_jsonl(prior);
  }

  TrainResult result = train(opts.config, inputs, backend, hooks);

  // stitch resumed logs so the run directory always holds the full history
  TrainLog full_log = prior_log;
  for (const auto& r : result.log.records) full_log.records.push_back(r);
  {
    std::ofstream csv(out / "trainlog.csv");
    full_log.write_csv(csv);
    std::ofstream jsonl(out / "trainlog.jsonl");
    full_log.write_jsonl(jsonl);
  }
  result.params.save((out / "policy.json").string());
  if (!full_log.records.empty()) {
    const auto& last = full_log.records.back();
    std::cout << "trained " << full_log.records.size() << " iterations; final held-out alignment "
              << last.heldout_alignment << ", mean reward " << last.mean_reward << "\n";
  }
  finalize_run(opts.common, "train", outputs);
  return 0;
}

int cmd_score(const ScoreOpts& opts) {
  Image image = read_png(opts.image_path);
  OracleBackend backend(opts.p_hit);
  TokenSeq prompt = Vocabulary::builtin().tokenize(opts.prompt);
  double reward;
  if (opts.mode == "promptecho") {
    reward = promptecho_reward(image, caption_query(), prompt, backend);
  } else if (opts.mode == "inferscore") {
    reward = inferscore_reward(image, prompt, backend, opts.temperature, opts.seed);
  } else {
    throw ConfigError("unknown mode: " + opts.mode);
  }
  std::printf("%.17g\n", reward);
  return 0;
}

int cmd_evaluate(const EvaluateOpts& opts) {
  ensure_out_dir(opts.common);
  OracleBackend backend(0.9);  // evaluation only loads prompts; rewards are not computed
  TrainInputs inputs = load_inputs(opts.corpus_path, opts.manifest_path, backend);
  std::vector<TokenSeq> prompts = inputs.heldout_prompts;
  if (opts.max_prompts > 0 && static_cast<size_t>(opts.max_prompts) < prompts.size())
    prompts.resize(static_cast<size_t>(opts.max_prompts));
  if (prompts.empty()) throw ConfigError("no held-out prompts to evaluate on");

  PolicyParams params_a = load_checkpoint(opts.ckpt_a).params;
  PolicyParams params_b = load_checkpoint(opts.ckpt_b).params;
  OracleJudge judge;
  JudgeStats stats = evaluate_pairwise(prompts, policy_generator(params_a),
                                       policy_generator(params_b), judge, opts.seed);

  write_text(fs::path(opts.common.out_dir) / "report.json", stats.to_json_string() + "\n");
  finalize_run(opts.common, "evaluate", {"report.json"});
  std::cout << "n=" << stats.n << " win=" << stats.win_rate
            << " baseline=" << stats.baseline_win_rate << " tie=" << stats.tie_rate
            << " net=" << stats.net_advantage * 100.0 << "pp\n";
  return 0;
}

int cmd_report(const ReportOpts& opts) {
  ensure_out_dir(opts.common);
  fs::path run(opts.run_dir);
  std::ifstream log_in(run / "trainlog.jsonl");
  if (!log_in) throw IoError("no trainlog.jsonl under " + run.string());
  TrainLog log = TrainLog::read_jsonl(log_in);
  if (log.records.empty()) throw IoError("trainlog.jsonl is empty");

  nlohmann::json metrics{
      {"iterations", log.records.size()},
      {"first_heldout_alignment", log.records.front().heldout_alignment},
      {"final_heldout_alignment", log.records.back().heldout_alignment},
      {"final_mean_reward", log.records.back().mean_reward},
      {"final_degenerate_fraction", log.records.back().degenerate_fraction},
  };
  std::ifstream eval_in(run / "report.json");
  if (eval_in) {
    nlohmann::json eval = nlohmann::json::parse(eval_in, nullptr, false);
    if (!eval.is_discarded()) metrics["pairwise"] = eval;
  }

  std::string table = "| iteration | mean reward | degenerate | held-out alignment |\n"
                      "|---|---|---|---|\n";
  size_t stride = std::max<size_t>(1, log.records.size() / 10);
  for (size_t i = 0; i < log.records.size(); i += stride) {
    const auto& r = log.records[i];
    table += "| " + std::to_string(r.iteration) + " | " +
             nlohmann::json(r.mean_reward).dump() + " | " +
             nlohmann::json(r.degenerate_fraction).dump() + " | " +
             nlohmann::json(r.heldout_alignment).dump() + " |\n";
  }
  const auto& last = log.records.back();
  if ((log.records.size() - 1) % stride != 0) {
    table += "| " + std::to_string(last.iteration) + " | " +
             nlohmann::json(last.mean_reward).dump() + " | " +
             nlohmann::json(last.degenerate_fraction).dump() + " | " +
             nlohmann::json(last.heldout_alignment).dump() + " |\n";
  }

  fs::path out(opts.common.out_dir);
  write_text(out / "metrics.json", metrics.dump(2) + "\n");
  write_text(out / "report.md", "# Training report\n\n" + table);
  finalize_run(opts.common, "report", {"metrics.json", "report.md"});
  std::cout << "final held-out alignment " << last.heldout_alignment << " over "
            << log.records.size() << " iterations\n";
  return 0;
}

}  // namespace promptecho::cli
