#pragma once

#include <cstdint>
#include <string>

#include "promptecho/trainer.hpp"

namespace promptecho::cli {

// Every command writes its outputs under --out together with a resolved
// config snapshot and a manifest listing the files it produced, so any
// published number can be re-derived from the run directory alone.

struct CommonOpts {
  std::string out_dir;
  std::string resolved_config;  // snapshot text, written verbatim
};

struct PrepareOpts {
  CommonOpts common;
  int scenes = 2000;
  uint64_t seed = 1;
  double heldout_fraction = 0.1;
  double p_hit = 0.9;
  int max_objects = kMaxObjects;
};

struct TrainOpts {
  CommonOpts common;
  std::string corpus_path;
  std::string manifest_path;
  TrainConfig config;
  std::string resume_checkpoint;  // empty = fresh start
  bool dump_rewards = false;
  bool cache_spill = false;
};

struct ScoreOpts {
  std::string image_path;
  std::string prompt;
  std::string mode = "promptecho";
  double p_hit = 0.9;
  double temperature = 0.0;
  uint64_t seed = 0;
};

struct EvaluateOpts {
  CommonOpts common;
  std::string ckpt_a;
  std::string ckpt_b;
  std::string corpus_path;
  std::string manifest_path;
  uint64_t seed = 0;
  int max_prompts = 0;  // 0 = all held-out prompts
};

struct ReportOpts {
  CommonOpts common;
  std::string run_dir;
};

int cmd_prepare(const PrepareOpts& opts);
int cmd_train(const TrainOpts& opts);
int cmd_score(const ScoreOpts& opts);
int cmd_evaluate(const EvaluateOpts& opts);
int cmd_report(const ReportOpts& opts);

}  // namespace promptecho::cli
