#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"
#include "promptecho/errors.hpp"

using namespace promptecho;
using namespace promptecho::cli;

namespace {

void add_common(CLI::App* cmd, CommonOpts& common) {
  cmd->fallthrough();  // lets top-level options like --config follow the subcommand
  cmd->add_option("--out", common.out_dir, "Run directory for outputs")->required();
}

/// Named training profiles; explicit flags still override.
void apply_profile(TrainConfig& config, const std::string& profile) {
  if (profile == "paper") {
    config.prompts_per_iter = 32;
    config.iterations = 300;
  } else if (profile == "desk") {
    config.prompts_per_iter = 16;
    config.iterations = 300;
  } else if (profile == "smoke") {
    config.prompts_per_iter = 4;
    config.group_size = 4;
    config.iterations = 5;
  } else {
    throw ConfigError("unknown profile: " + profile);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Teacher-forced caption-likelihood rewards over a synthetic scene world"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read options from a key=value config file");
  app.get_config_formatter_base()->comment('#');

  PrepareOpts prepare;
  auto* cmd_prep = app.add_subcommand("prepare", "Build a caption corpus and split manifest");
  add_common(cmd_prep, prepare.common);
  cmd_prep->add_option("--scenes", prepare.scenes, "Number of scenes to caption")
      ->check(CLI::PositiveNumber);
  cmd_prep->add_option("--seed", prepare.seed, "Corpus sampling seed");
  cmd_prep->add_option("--heldout-fraction", prepare.heldout_fraction,
                       "Fraction of captions held out for evaluation")
      ->check(CLI::Range(1e-9, 1.0 - 1e-9));
  cmd_prep->add_option("--p-hit", prepare.p_hit, "Oracle fidelity used for captioning")
      ->check(CLI::Range(1e-9, 1.0));
  cmd_prep->add_option("--max-objects", prepare.max_objects, "Scene-space cap (testing knob)")
      ->check(CLI::Range(0, 4));

  TrainOpts traino;
  std::string profile = "desk";
  std::string reward_mode = "promptecho";
  std::string advantage_mode = "mean";
  auto* cmd_tr = app.add_subcommand("train", "Run the group-relative RL loop");
  add_common(cmd_tr, traino.common);
  cmd_tr->add_option("--corpus", traino.corpus_path, "Corpus JSONL from prepare")->required();
  cmd_tr->add_option("--manifest", traino.manifest_path, "Split manifest from prepare")
      ->required();
  cmd_tr->add_option("--profile", profile, "Profile: paper, desk or smoke")
      ->capture_default_str();
  auto* opt_prompts = cmd_tr->add_option("--prompts-per-iter", traino.config.prompts_per_iter);
  auto* opt_iters = cmd_tr->add_option("--iterations", traino.config.iterations);
  auto* opt_group = cmd_tr->add_option("--group-size", traino.config.group_size,
                                       "Images generated per prompt (K)");
  cmd_tr->add_option("--epochs-per-batch", traino.config.epochs_per_batch);
  cmd_tr->add_option("--step-size", traino.config.step_size);
  cmd_tr->add_option("--seed", traino.config.seed);
  cmd_tr->add_option("--eval-cadence", traino.config.eval_cadence);
  cmd_tr->add_option("--p-hit", traino.config.p_hit, "Oracle fidelity for rewards");
  cmd_tr->add_option("--reward-mode", reward_mode, "promptecho or inferscore")
      ->capture_default_str();
  cmd_tr->add_option("--advantage-mode", advantage_mode, "mean or mean-std")
      ->capture_default_str();
  cmd_tr->add_option("--inferscore-temperature", traino.config.inferscore_temperature);
  cmd_tr->add_option("--reward-clip", traino.config.reward_clip,
                     "Clip |reward| before advantages (0 = off)");
  cmd_tr->add_flag("--dump-rewards", traino.dump_rewards, "Write per-image rewards JSONL");
  cmd_tr->add_flag("--cache-spill", traino.cache_spill, "Spill the reward cache to JSONL");
  cmd_tr->add_option("--resume", traino.resume_checkpoint, "Checkpoint to resume from");
  // inert keys for the external-adapter path; recorded in the snapshot
  cmd_tr->add_option("--cfg-scale-train", traino.config.cfg_scale_train)->group("external");
  cmd_tr->add_option("--cfg-scale-eval", traino.config.cfg_scale_eval)->group("external");
  cmd_tr->add_option("--ode-steps-train", traino.config.ode_steps_train)->group("external");
  cmd_tr->add_option("--ode-steps-eval", traino.config.ode_steps_eval)->group("external");
  cmd_tr->add_option("--lora-rank", traino.config.lora_rank)->group("external");
  cmd_tr->add_option("--lora-alpha", traino.config.lora_alpha)->group("external");
  cmd_tr->add_option("--adapter-learning-rate", traino.config.adapter_learning_rate)
      ->group("external");

  ScoreOpts score;
  auto* cmd_sc = app.add_subcommand("score", "Score one image against a prompt");
  cmd_sc->fallthrough();
  cmd_sc->add_option("--image", score.image_path, "PNG image path")->required();
  cmd_sc->add_option("--prompt", score.prompt, "Prompt text")->required();
  cmd_sc->add_option("--mode", score.mode, "promptecho or inferscore")->capture_default_str();
  cmd_sc->add_option("--p-hit", score.p_hit);
  cmd_sc->add_option("--temperature", score.temperature, "inferscore generation temperature");
  cmd_sc->add_option("--seed", score.seed);

  EvaluateOpts evalo;
  auto* cmd_ev = app.add_subcommand("evaluate", "Pairwise-judge two checkpoints on held-out prompts");
  add_common(cmd_ev, evalo.common);
  cmd_ev->add_option("--ckpt-a", evalo.ckpt_a, "Checkpoint A (the candidate)")->required();
  cmd_ev->add_option("--ckpt-b", evalo.ckpt_b, "Checkpoint B (the baseline)")->required();
  cmd_ev->add_option("--corpus", evalo.corpus_path)->required();
  cmd_ev->add_option("--manifest", evalo.manifest_path)->required();
  cmd_ev->add_option("--seed", evalo.seed);
  cmd_ev->add_option("--max-prompts", evalo.max_prompts, "Cap on held-out prompts (0 = all)");

  ReportOpts report;
  auto* cmd_rp = app.add_subcommand("report", "Summarize a training run directory");
  add_common(cmd_rp, report.common);
  cmd_rp->add_option("--run", report.run_dir, "Run directory holding trainlog.jsonl")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;  // usage error
  }

  try {
    std::string resolved = app.config_to_str(true, true);
    if (cmd_tr->parsed()) {
      // profile sets the defaults, explicit flags win
      TrainConfig flag_values = traino.config;
      apply_profile(traino.config, profile);
      if (opt_prompts->count()) traino.config.prompts_per_iter = flag_values.prompts_per_iter;
      if (opt_iters->count()) traino.config.iterations = flag_values.iterations;
      if (opt_group->count()) traino.config.group_size = flag_values.group_size;
      traino.config.reward_mode = reward_mode_from_name(reward_mode);
      if (advantage_mode == "mean") traino.config.advantage_std_normalize = false;
      else if (advantage_mode == "mean-std") traino.config.advantage_std_normalize = true;
      else throw ConfigError("unknown advantage mode: " + advantage_mode);
      traino.config.validate();
      traino.common.resolved_config = resolved;
      return cmd_train(traino);
    }
    if (cmd_prep->parsed()) {
      prepare.common.resolved_config = resolved;
      return cmd_prepare(prepare);
    }
    if (cmd_sc->parsed()) return cmd_score(score);
    if (cmd_ev->parsed()) {
      evalo.common.resolved_config = resolved;
      return cmd_evaluate(evalo);
    }
    if (cmd_rp->parsed()) {
      report.common.resolved_config = resolved;
      return cmd_report(report);
    }
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
