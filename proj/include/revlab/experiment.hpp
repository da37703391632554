// Full pipeline orchestration: split -> MCQs -> per-direction training,
// paradigm evaluation, entropy measurement -> stats -> report + checkpoints.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "revlab/datagen.hpp"
#include "revlab/model.hpp"
#include "revlab/report.hpp"
#include "revlab/scoring.hpp"
#include "revlab/train.hpp"

namespace revlab {

struct EvalConfig {
  std::vector<std::string> paradigms;  // empty = format-appropriate defaults
  int num_choices = 4;
  int augment = 10;
  int rollouts_per_prompt = 4;
  int entropy_prompts = 1000;  // cap; 0 = all test prompts
  bool natural_rollout_len = true;
  int fixed_rollout_len = 10;  // used when natural_rollout_len is false
  bool free_generation = true;
  int bootstrap_replicates = 5;
  double bootstrap_fraction = 0.8;
};

struct ExperimentConfig {
  int d = 3;
  Format format = Format::ForwardX;
  std::vector<Direction> directions = {Direction::L2R, Direction::R2L};
  int64_t test_size = 1000;
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;
  std::string output_dir = "runs/out";
  uint64_t seed = 0;
  // Reuse a cached checkpoint/report in output_dir when its recorded config
  // and seed match exactly; otherwise recompute.
  bool reuse_cached = true;
};

void validate(const ExperimentConfig& config);

// Echo omits reuse_cached: caching is orchestration, not experiment identity.
nlohmann::json experiment_config_to_json(const ExperimentConfig& config);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);

std::vector<std::string> default_paradigms(Format format);

// Native completion span of the direction's reading order (what the model
// generates last): ForwardX L2R -> P, ForwardX R2L -> MN, mirrored for
// ReverseX.
SpanTarget native_answer_target(Format format, Direction direction);

// Runs every stage, writes report.json (+ .txt), checkpoints, and per-item
// record files under config.output_dir. Stage failures abort with the stage
// name and the partial-artifact directory.
EvalReport run_experiment(const ExperimentConfig& config);

}  // namespace revlab
