// revlab: desk-scale L2R/R2L factorization laboratory.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "revlab/checkpoint.hpp"
#include "revlab/datagen.hpp"
#include "revlab/entropy.hpp"
#include "revlab/experiment.hpp"
#include "revlab/report.hpp"
#include "revlab/rng.hpp"
#include "revlab/scoring.hpp"
#include "revlab/stats.hpp"
#include "revlab/train.hpp"

namespace {

using namespace revlab;

Direction parse_direction(const std::string& s) {
  if (s == "L2R") return Direction::L2R;
  if (s == "R2L") return Direction::R2L;
  throw std::invalid_argument("direction must be L2R or R2L");
}

ExperimentConfig load_config(const std::string& config_path,
                             const std::optional<uint64_t>& seed,
                             const std::optional<std::string>& out) {
  ExperimentConfig config;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw std::runtime_error("cannot read config: " + config_path);
    nlohmann::json j;
    in >> j;
    config = experiment_config_from_json(j);
  }
  if (seed) config.seed = *seed;
  if (out) config.output_dir = *out;
  return config;
}

int cmd_run(const std::string& config_path, std::optional<uint64_t> seed,
            std::optional<std::string> out, bool fresh) {
  ExperimentConfig config = load_config(config_path, seed, out);
  if (fresh) config.reuse_cached = false;
  const EvalReport report = run_experiment(config);
  std::cout << render_text_table(report);
  return 0;
}

int cmd_theo_entropy(int d, const std::string& target, std::optional<std::string> out) {
  EntropyTarget t;
  if (target == "Product")
    t = EntropyTarget::Product;
  else if (target == "FactorPair")
    t = EntropyTarget::FactorPair;
  else
    throw std::invalid_argument("target must be Product or FactorPair");
  const double h = theoretical_mult_entropy(d, t);
  std::printf("%.12f\n", h);
  if (out) {
    nlohmann::json j = {{"d", d}, {"target", target}, {"entropy_nats", h}};
    std::ofstream of(*out);
    if (!of) throw std::runtime_error("cannot write: " + *out);
    of << j.dump(2) << "\n";
  }
  return 0;
}

int cmd_gen_data(const std::string& config_path, std::optional<uint64_t> seed,
                 std::optional<std::string> out, int64_t limit) {
  ExperimentConfig config = load_config(config_path, seed, out);
  SplitSpec spec{config.d, config.format, config.test_size, config.seed};
  Split split = generate_split(spec);
  const std::string dir = config.output_dir;
  std::filesystem::create_directories(dir);
  auto write_stream = [&](const std::string& path, auto&& emit) {
    std::ofstream of(path);
    if (!of) throw std::runtime_error("cannot write: " + path);
    emit(of);
  };
  int64_t train_lines = 0;
  write_stream(dir + "/train.tokens", [&](std::ofstream& of) {
    export_tokens(split.train, [&](const TokenSequence& seq) {
      if (limit > 0 && train_lines >= limit) return;
      for (size_t i = 0; i < seq.size(); ++i) of << (i ? " " : "") << seq[i];
      of << "\n";
      ++train_lines;
    });
  });
  write_stream(dir + "/test.tokens", [&](std::ofstream& of) {
    for (const ArithmeticInstance& inst : split.test) {
      const TokenSequence seq = render_instance(inst.m, inst.n, inst.d, inst.format);
      for (size_t i = 0; i < seq.size(); ++i) of << (i ? " " : "") << seq[i];
      of << "\n";
    }
  });
  nlohmann::json summary = {{"d", config.d},
                            {"format", format_name(config.format)},
                            {"seed", config.seed},
                            {"train_instances", split.train.size()},
                            {"train_exported", train_lines},
                            {"test_size", static_cast<int64_t>(split.test.size())}};
  write_stream(dir + "/split.json", [&](std::ofstream& of) { of << summary.dump(2) << "\n"; });
  std::printf("wrote %s/{train.tokens,test.tokens,split.json} (%lld train lines, %zu test)\n",
              dir.c_str(), static_cast<long long>(train_lines), split.test.size());
  return 0;
}

int cmd_train(const std::string& config_path, std::optional<uint64_t> seed,
              std::optional<std::string> out, const std::string& direction) {
  ExperimentConfig config = load_config(config_path, seed, std::nullopt);
  const Direction dir = parse_direction(direction);
  SplitSpec spec{config.d, config.format, config.test_size, config.seed};
  Split split = generate_split(spec);
  Model model = init_model<float>(
      config.model,
      derive_seed(config.seed, dir == Direction::L2R ? "init-l2r" : "init-r2l"));
  RenderedStream stream(split.train, dir == Direction::R2L);
  TrainConfig tc = config.train;
  tc.seed = derive_seed(config.seed, dir == Direction::L2R ? "train-l2r" : "train-r2l");
  const TrainResult res = train(model, stream, tc, [](int64_t step, int64_t total, double loss) {
    if (step == 1 || step % 500 == 0 || step == total)
      std::fprintf(stderr, "step %lld/%lld loss %.4f\n", static_cast<long long>(step),
                   static_cast<long long>(total), loss);
  });
  const std::string ckpt = out.value_or("model.rllb");
  save_checkpoint(model, ckpt);
  std::printf("final loss %.4f over %lld steps; checkpoint %s\n", res.final_loss,
              static_cast<long long>(res.total_steps), ckpt.c_str());
  return 0;
}

int cmd_eval_mcq(const std::string& config_path, std::optional<uint64_t> seed,
                 std::optional<std::string> out, const std::string& ckpt,
                 const std::string& direction, const std::string& paradigm) {
  ExperimentConfig config = load_config(config_path, seed, std::nullopt);
  const Direction dir = parse_direction(direction);
  const ScoreParadigm p = paradigm_from_name(paradigm);
  const Model model = load_checkpoint(ckpt);
  SplitSpec spec{config.d, config.format, config.test_size, config.seed};
  Split split = generate_split(spec);
  const std::vector<MCQInstance> mcqs =
      make_mcq_set(split.test, config.eval.num_choices, config.eval.augment,
                   derive_seed(config.seed, "mcq-test"));
  const EvalResult res = evaluate_mcq(model, dir, mcqs, p);
  std::printf("%s %s accuracy %.4f over %zu mcqs\n", direction.c_str(), paradigm.c_str(),
              res.accuracy, mcqs.size());
  if (out) write_score_records(*out, paradigm, res.records);
  return 0;
}

int cmd_entropy(const std::string& config_path, std::optional<uint64_t> seed,
                std::optional<std::string> out, const std::string& ckpt,
                const std::string& direction, int rollouts) {
  ExperimentConfig config = load_config(config_path, seed, std::nullopt);
  const Direction dir = parse_direction(direction);
  const Model model = load_checkpoint(ckpt);
  SplitSpec spec{config.d, config.format, config.test_size, config.seed};
  Split split = generate_split(spec);
  const SpanTarget target = native_answer_target(config.format, dir);
  std::vector<TokenSequence> prompts;
  int rollout_len = config.eval.fixed_rollout_len;
  for (const ArithmeticInstance& inst : split.test) {
    auto [prompt, span_len] = entropy_prompt(inst, dir, target);
    if (config.eval.natural_rollout_len) rollout_len = span_len;
    prompts.push_back(std::move(prompt));
  }
  EntropyEstimate est = mc_conditional_entropy(model, prompts, rollout_len, rollouts, 1.0,
                                               derive_seed(config.seed, "mc-cli"));
  est.direction = direction;
  std::printf("%.6f nats (%zu prompts x %d rollouts of %d tokens)\n", est.mean_nll,
              prompts.size(), rollouts, rollout_len);
  if (out) {
    nlohmann::json j = {{"direction", direction},
                        {"task", "test"},
                        {"mean_nll", est.mean_nll},
                        {"n_prompts", static_cast<int>(prompts.size())},
                        {"rollout_len", rollout_len},
                        {"rollouts_per_prompt", rollouts}};
    std::ofstream of(*out);
    if (!of) throw std::runtime_error("cannot write: " + *out);
    of << j.dump(2) << "\n";
  }
  return 0;
}

int cmd_compare(const std::string& records_a, const std::string& records_b, int replicates,
                double fraction, uint64_t seed, std::optional<std::string> out) {
  auto correctness = [](const std::string& path) {
    std::vector<int> v;
    for (const ScoreRecord& r : read_score_records(path)) v.push_back(r.correct ? 1 : 0);
    return v;
  };
  const std::vector<int> a = correctness(records_a);
  const std::vector<int> b = correctness(records_b);
  if (a.size() != b.size())
    throw std::invalid_argument("record files have different item counts");
  const uint64_t boot_seed = derive_seed(seed, "bootstrap-stats");
  const BootstrapResult ba = bootstrap_accuracy(a, replicates, fraction, boot_seed);
  const BootstrapResult bb = bootstrap_accuracy(b, replicates, fraction, boot_seed);
  const TTestResult tt = paired_t_test(ba.replicate_means, bb.replicate_means);
  nlohmann::json j = {{"task", "compare"},
                      {"scorer_a", records_a},
                      {"scorer_b", records_b},
                      {"mean_a", ba.mean},
                      {"std_a", ba.std},
                      {"mean_b", bb.mean},
                      {"std_b", bb.std},
                      {"t", tt.t},
                      {"p", tt.p}};
  std::cout << j.dump(2) << "\n";
  if (out) {
    std::ofstream of(*out);
    if (!of) throw std::runtime_error("cannot write: " + *out);
    of << j.dump(2) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"revlab: directional factorization experiments on multiplication corpora"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<uint64_t> seed;
  std::optional<std::string> out;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config JSON");
    cmd->add_option("--seed", seed, "master seed override");
    cmd->add_option("--out", out, "output path / directory override");
  };

  auto* run = app.add_subcommand("run", "full pipeline: split, train, eval, entropy, report");
  bool fresh = false;
  add_common(run);
  run->add_flag("--fresh", fresh, "ignore cached checkpoints/reports");

  auto* theo = app.add_subcommand("theo-entropy", "exact multiplication entropy oracle");
  int theo_d = 4;
  std::string theo_target = "FactorPair";
  add_common(theo);
  theo->add_option("--d", theo_d, "digits per factor");
  theo->add_option("--target", theo_target, "Product or FactorPair");

  auto* gen = app.add_subcommand("gen-data", "materialize a split as token files");
  int64_t gen_limit = 0;
  add_common(gen);
  gen->add_option("--limit", gen_limit, "cap exported train lines (0 = all)");

  auto* tr = app.add_subcommand("train", "train one direction, save a checkpoint");
  std::string direction = "L2R";
  add_common(tr);
  tr->add_option("--direction", direction, "L2R or R2L");

  auto* ev = app.add_subcommand("eval-mcq", "score test MCQs with one paradigm");
  std::string ckpt, paradigm = "forward";
  add_common(ev);
  ev->add_option("--ckpt", ckpt, "checkpoint path")->required();
  ev->add_option("--direction", direction, "L2R or R2L");
  ev->add_option("--paradigm", paradigm, "scoring paradigm name");

  auto* en = app.add_subcommand("entropy", "MC conditional entropy on test prompts");
  int rollouts = 4;
  add_common(en);
  en->add_option("--ckpt", ckpt, "checkpoint path")->required();
  en->add_option("--direction", direction, "L2R or R2L");
  en->add_option("--rollouts", rollouts, "rollouts per prompt");

  auto* cmp = app.add_subcommand("compare", "bootstrap + paired t-test of two record files");
  std::string records_a, records_b;
  int replicates = 5;
  double fraction = 0.8;
  add_common(cmp);
  cmp->add_option("--records-a", records_a, "per-item records JSONL")->required();
  cmp->add_option("--records-b", records_b, "per-item records JSONL")->required();
  cmp->add_option("--replicates", replicates, "bootstrap replicates");
  cmp->add_option("--fraction", fraction, "bootstrap resample fraction");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, seed, out, fresh);
    if (theo->parsed()) return cmd_theo_entropy(theo_d, theo_target, out);
    if (gen->parsed()) return cmd_gen_data(config_path, seed, out, gen_limit);
    if (tr->parsed()) return cmd_train(config_path, seed, out, direction);
    if (ev->parsed()) return cmd_eval_mcq(config_path, seed, out, ckpt, direction, paradigm);
    if (en->parsed()) return cmd_entropy(config_path, seed, out, ckpt, direction, rollouts);
    if (cmp->parsed())
      return cmd_compare(records_a, records_b, replicates, fraction, seed.value_or(0), out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
