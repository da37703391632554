// Report assembly and emission: JSON (versioned schema, documented in
// docs/report_schema.md), a plain-text table rendering, and per-item score
// record files for downstream significance testing.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "revlab/scoring.hpp"

namespace revlab {

inline constexpr int kReportSchemaVersion = 1;

struct ParadigmResult {
  std::string paradigm;
  double test_accuracy = 0;
  double train_accuracy = 0;
};

struct EntropyRecord {
  std::string direction;
  std::string task;  // prompt source: "test" or "train"
  double mean_nll = 0;
  int n_prompts = 0;
  int rollout_len = 0;
  int rollouts_per_prompt = 0;
};

struct StatsRecord {
  std::string task;
  std::string scorer_a, scorer_b;
  double mean_a = 0, std_a = 0;
  double mean_b = 0, std_b = 0;
  double t = 0, p = 1;
};

struct DirectionReport {
  std::string direction;
  double final_train_loss = 0;
  int64_t total_steps = 0;
  std::vector<ParadigmResult> paradigms;
  std::vector<EntropyRecord> entropy;
  std::string theoretical_target;  // "Product" or "FactorPair"
  double theoretical_entropy = 0;
  std::optional<double> free_generation_accuracy;
  std::string checkpoint_path;
};

struct EvalReport {
  int schema_version = kReportSchemaVersion;
  std::string timestamp;  // ISO 8601; the only field excluded from determinism
  uint64_t seed = 0;
  std::string git_commit = "unknown";
  nlohmann::json config_echo;
  // scale disclosure: these make desk-scale numbers unmistakable
  int d = 0;
  std::string format;
  int64_t param_count = 0;
  int64_t train_instances = 0;
  int64_t train_tokens = 0;
  int64_t test_size = 0;
  int64_t mcq_count = 0;
  std::vector<DirectionReport> directions;
  std::vector<StatsRecord> stats;
};

nlohmann::json to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);

// Throws std::runtime_error with a descriptive message on any schema
// violation (missing keys, wrong types, out-of-range accuracies).
void validate_report_json(const nlohmann::json& j);

std::string render_text_table(const EvalReport& report);

// Writes pretty-printed JSON to `json_path` and the text table next to it
// (same stem, .txt).
void emit_report(const EvalReport& report, const std::string& json_path);

// Per-item record lines: {"mcq_id":..,"paradigm":..,"scores":[..],"chosen":..,"correct":..}
void write_score_records(const std::string& path, const std::string& paradigm,
                         const std::vector<ScoreRecord>& records);
std::vector<ScoreRecord> read_score_records(const std::string& path);

std::string current_git_commit();  // "unknown" when not in a git checkout
std::string iso8601_now();

}  // namespace revlab
