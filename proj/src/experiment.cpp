#include "revlab/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <utility>

#include "revlab/checkpoint.hpp"
#include "revlab/entropy.hpp"
#include "revlab/rng.hpp"
#include "revlab/stats.hpp"

namespace revlab {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Format format_from_string(const std::string& s) {
  if (s == "ForwardX") return Format::ForwardX;
  if (s == "ReverseX") return Format::ReverseX;
  throw std::invalid_argument("unknown format: " + s);
}

Direction direction_from_string(const std::string& s) {
  if (s == "L2R") return Direction::L2R;
  if (s == "R2L") return Direction::R2L;
  throw std::invalid_argument("unknown direction: " + s);
}

std::string sanitize(const std::string& name) {
  std::string out;
  for (char c : name)
    out += (std::isalnum(static_cast<unsigned char>(c)) != 0) ? c : '_';
  return out;
}

// Every stage logs wall-clock and the master seed; failures carry the stage
// name and where partial artifacts live.
template <typename F>
auto stage(const std::string& name, const ExperimentConfig& config, F&& fn) {
  const auto t0 = Clock::now();
  std::fprintf(stderr, "[stage %s] start (seed=%llu)\n", name.c_str(),
               static_cast<unsigned long long>(config.seed));
  try {
    auto result = fn();
    std::fprintf(stderr, "[stage %s] done in %.1fs\n", name.c_str(), seconds_since(t0));
    return result;
  } catch (const std::exception& e) {
    throw std::runtime_error("stage '" + name + "' failed: " + e.what() +
                             " (partial artifacts in " + config.output_dir + ")");
  }
}

nlohmann::json model_config_to_json(const ModelConfig& m) {
  return {{"num_layers", m.num_layers},   {"num_heads", m.num_heads},
          {"embed_dim", m.embed_dim},     {"mlp_dim", m.mlp_dim},
          {"vocab_size", m.vocab_size},   {"max_seq_len", m.max_seq_len},
          {"rope_base", m.rope_base}};
}

void model_config_from_json(const nlohmann::json& j, ModelConfig& m) {
  if (j.contains("num_layers")) m.num_layers = j.at("num_layers").get<int>();
  if (j.contains("num_heads")) m.num_heads = j.at("num_heads").get<int>();
  if (j.contains("embed_dim")) m.embed_dim = j.at("embed_dim").get<int>();
  if (j.contains("mlp_dim")) m.mlp_dim = j.at("mlp_dim").get<int>();
  if (j.contains("vocab_size")) m.vocab_size = j.at("vocab_size").get<int>();
  if (j.contains("max_seq_len")) m.max_seq_len = j.at("max_seq_len").get<int>();
  if (j.contains("rope_base")) m.rope_base = j.at("rope_base").get<float>();
}

nlohmann::json train_config_to_json(const TrainConfig& t) {
  return {{"peak_lr", t.peak_lr},
          {"min_lr", t.min_lr},
          {"warmup_fraction", t.warmup_fraction},
          {"batch_size", t.batch_size},
          {"num_epochs", t.num_epochs},
          {"beta1", t.beta1},
          {"beta2", t.beta2},
          {"weight_decay", t.weight_decay},
          {"grad_clip", t.grad_clip}};
}

void train_config_from_json(const nlohmann::json& j, TrainConfig& t) {
  if (j.contains("peak_lr")) t.peak_lr = j.at("peak_lr").get<double>();
  if (j.contains("min_lr")) t.min_lr = j.at("min_lr").get<double>();
  if (j.contains("warmup_fraction")) t.warmup_fraction = j.at("warmup_fraction").get<double>();
  if (j.contains("batch_size")) t.batch_size = j.at("batch_size").get<int>();
  if (j.contains("num_epochs")) t.num_epochs = j.at("num_epochs").get<int>();
  if (j.contains("beta1")) t.beta1 = j.at("beta1").get<double>();
  if (j.contains("beta2")) t.beta2 = j.at("beta2").get<double>();
  if (j.contains("weight_decay")) t.weight_decay = j.at("weight_decay").get<double>();
  if (j.contains("grad_clip")) t.grad_clip = j.at("grad_clip").get<double>();
}

nlohmann::json eval_config_to_json(const EvalConfig& e) {
  return {{"paradigms", e.paradigms},
          {"num_choices", e.num_choices},
          {"augment", e.augment},
          {"rollouts_per_prompt", e.rollouts_per_prompt},
          {"entropy_prompts", e.entropy_prompts},
          {"natural_rollout_len", e.natural_rollout_len},
          {"fixed_rollout_len", e.fixed_rollout_len},
          {"free_generation", e.free_generation},
          {"bootstrap_replicates", e.bootstrap_replicates},
          {"bootstrap_fraction", e.bootstrap_fraction}};
}

void eval_config_from_json(const nlohmann::json& j, EvalConfig& e) {
  if (j.contains("paradigms")) e.paradigms = j.at("paradigms").get<std::vector<std::string>>();
  if (j.contains("num_choices")) e.num_choices = j.at("num_choices").get<int>();
  if (j.contains("augment")) e.augment = j.at("augment").get<int>();
  if (j.contains("rollouts_per_prompt"))
    e.rollouts_per_prompt = j.at("rollouts_per_prompt").get<int>();
  if (j.contains("entropy_prompts")) e.entropy_prompts = j.at("entropy_prompts").get<int>();
  if (j.contains("natural_rollout_len"))
    e.natural_rollout_len = j.at("natural_rollout_len").get<bool>();
  if (j.contains("fixed_rollout_len")) e.fixed_rollout_len = j.at("fixed_rollout_len").get<int>();
  if (j.contains("free_generation")) e.free_generation = j.at("free_generation").get<bool>();
  if (j.contains("bootstrap_replicates"))
    e.bootstrap_replicates = j.at("bootstrap_replicates").get<int>();
  if (j.contains("bootstrap_fraction"))
    e.bootstrap_fraction = j.at("bootstrap_fraction").get<double>();
}

struct TrainedDirection {
  Model model{};
  double final_loss = 0;
  int64_t total_steps = 0;
  std::string ckpt_path;
  bool from_cache = false;
};

// Identity stamped into the checkpoint sidecar; a cached model is reused only
// on exact match.
nlohmann::json run_identity(const ExperimentConfig& config, Direction dir) {
  return {{"d", config.d},
          {"format", format_name(config.format)},
          {"direction", direction_name(dir)},
          {"seed", config.seed},
          {"test_size", config.test_size},
          {"model", model_config_to_json(config.model)},
          {"train", train_config_to_json(config.train)}};
}

TrainedDirection obtain_model(const ExperimentConfig& config, const Split& split,
                              Direction dir) {
  TrainedDirection out;
  const std::string tag =
      std::string(format_name(config.format)) + "_" + direction_name(dir);
  out.ckpt_path = config.output_dir + "/ckpt_" + sanitize(tag) + ".rllb";
  const std::string meta_path = out.ckpt_path + ".meta.json";
  const nlohmann::json identity = run_identity(config, dir);

  if (config.reuse_cached && fs::exists(out.ckpt_path) && fs::exists(meta_path)) {
    try {
      nlohmann::json meta;
      std::ifstream in(meta_path);
      in >> meta;
      if (meta.at("identity") == identity) {
        out.model = load_checkpoint(out.ckpt_path);
        out.final_loss = meta.at("final_train_loss").get<double>();
        out.total_steps = meta.at("total_steps").get<int64_t>();
        out.from_cache = true;
        std::fprintf(stderr, "[stage train %s] reusing cached checkpoint %s\n",
                     direction_name(dir), out.ckpt_path.c_str());
        return out;
      }
      std::fprintf(stderr, "[stage train %s] cached checkpoint identity mismatch, retraining\n",
                   direction_name(dir));
    } catch (const std::exception& e) {
      std::fprintf(stderr, "[stage train %s] cached checkpoint unusable (%s), retraining\n",
                   direction_name(dir), e.what());
    }
  }

  const char* init_tag = dir == Direction::L2R ? "init-l2r" : "init-r2l";
  out.model = init_model<float>(config.model, derive_seed(config.seed, init_tag));
  RenderedStream stream(split.train, dir == Direction::R2L);
  stream.reset();
  TrainConfig tc = config.train;
  tc.seed = derive_seed(config.seed, dir == Direction::L2R ? "train-l2r" : "train-r2l");
  const auto t0 = Clock::now();
  const TrainResult res = train(out.model, stream, tc, [&](int64_t step, int64_t total,
                                                           double loss) {
    if (step == 1 || step % 500 == 0 || step == total)
      std::fprintf(stderr, "[train %s] step %lld/%lld loss %.4f (%.0fs)\n", direction_name(dir),
                   static_cast<long long>(step), static_cast<long long>(total), loss,
                   seconds_since(t0));
  });
  out.final_loss = res.final_loss;
  out.total_steps = res.total_steps;
  save_checkpoint(out.model, out.ckpt_path);
  nlohmann::json meta = {{"identity", identity},
                         {"final_train_loss", res.final_loss},
                         {"total_steps", res.total_steps}};
  std::ofstream meta_out(meta_path);
  meta_out << meta.dump(2) << "\n";
  return out;
}

}  // namespace

void validate(const ExperimentConfig& config) {
  if (config.d < 1 || config.d > 4) throw std::invalid_argument("d must be in [1,4]");
  if (config.directions.empty()) throw std::invalid_argument("no directions requested");
  if (config.test_size < 1) throw std::invalid_argument("test_size must be positive");
  if (config.eval.num_choices < 2) throw std::invalid_argument("num_choices must be >= 2");
  if (config.eval.augment < 1) throw std::invalid_argument("augment must be >= 1");
  if (config.eval.rollouts_per_prompt < 1)
    throw std::invalid_argument("rollouts_per_prompt must be >= 1");
  if (config.output_dir.empty()) throw std::invalid_argument("output_dir must be set");
  if (config.model.max_seq_len < instance_length(config.d))
    throw std::invalid_argument("model max_seq_len too small for the instance length");
  validate(config.model);
  for (const std::string& name : config.eval.paradigms) paradigm_from_name(name);
}

nlohmann::json experiment_config_to_json(const ExperimentConfig& config) {
  nlohmann::json dirs = nlohmann::json::array();
  for (Direction d : config.directions) dirs.push_back(direction_name(d));
  return {{"config_version", 1},
          {"d", config.d},
          {"format", format_name(config.format)},
          {"directions", dirs},
          {"test_size", config.test_size},
          {"model", model_config_to_json(config.model)},
          {"train", train_config_to_json(config.train)},
          {"eval", eval_config_to_json(config.eval)},
          {"output_dir", config.output_dir},
          {"seed", config.seed}};
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  if (j.contains("config_version") && j.at("config_version").get<int>() != 1)
    throw std::invalid_argument("unsupported config_version");
  if (j.contains("d")) c.d = j.at("d").get<int>();
  if (j.contains("format")) c.format = format_from_string(j.at("format").get<std::string>());
  if (j.contains("directions")) {
    c.directions.clear();
    for (const nlohmann::json& s : j.at("directions"))
      c.directions.push_back(direction_from_string(s.get<std::string>()));
  }
  if (j.contains("test_size")) c.test_size = j.at("test_size").get<int64_t>();
  if (j.contains("model")) model_config_from_json(j.at("model"), c.model);
  if (j.contains("train")) train_config_from_json(j.at("train"), c.train);
  if (j.contains("eval")) eval_config_from_json(j.at("eval"), c.eval);
  if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
  if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
  if (c.model.max_seq_len < instance_length(c.d)) c.model.max_seq_len = instance_length(c.d);
  return c;
}

std::vector<std::string> default_paradigms(Format format) {
  if (format == Format::ForwardX)
    return {"forward", "R2L(m,n)", "R2L(m)",   "R2L(n)",
            "reverse_p1", "reverse_p2", "reverse_p3"};
  return {"R2L(p)", "L2R(m,n)", "L2R(n)", "L2R(m)"};
}

SpanTarget native_answer_target(Format format, Direction direction) {
  const bool forward_format = format == Format::ForwardX;
  const bool l2r = direction == Direction::L2R;
  return forward_format == l2r ? SpanTarget::P : SpanTarget::MN;
}

EvalReport run_experiment(const ExperimentConfig& config) {
  validate(config);
  fs::create_directories(config.output_dir);
  const std::string report_path = config.output_dir + "/report.json";
  const nlohmann::json config_echo = experiment_config_to_json(config);

  if (config.reuse_cached && fs::exists(report_path)) {
    try {
      nlohmann::json j;
      std::ifstream in(report_path);
      in >> j;
      validate_report_json(j);
      EvalReport cached = report_from_json(j);
      if (cached.config_echo == config_echo && cached.seed == config.seed) {
        std::fprintf(stderr, "[stage report] reusing cached report %s\n", report_path.c_str());
        return cached;
      }
    } catch (const std::exception&) {
      // stale or foreign report: recompute
    }
  }

  EvalReport report;
  report.timestamp = iso8601_now();
  report.seed = config.seed;
  report.git_commit = current_git_commit();
  report.config_echo = config_echo;
  report.d = config.d;
  report.format = format_name(config.format);
  report.param_count = param_count(config.model);
  report.test_size = config.test_size;

  Split split = stage("split", config, [&] {
    SplitSpec spec{config.d, config.format, config.test_size, config.seed};
    return generate_split(spec);
  });
  report.train_instances = split.train.size();
  report.train_tokens = report.train_instances * instance_length(config.d);

  // Same MCQ sets and train subsample for every direction: cross-direction
  // significance tests stay paired item-for-item.
  struct EvalSets {
    std::vector<MCQInstance> test_mcqs, train_mcqs;
    std::vector<ArithmeticInstance> train_sample;
  };
  EvalSets sets = stage("mcq", config, [&] {
    EvalSets s;
    s.test_mcqs = make_mcq_set(split.test, config.eval.num_choices, config.eval.augment,
                               derive_seed(config.seed, "mcq-test"));
    split.train.reset();
    for (int64_t i = 0; i < config.test_size; ++i) {
      auto inst = split.train.next();
      if (!inst) break;
      s.train_sample.push_back(*inst);
    }
    split.train.reset();
    s.train_mcqs = make_mcq_set(s.train_sample, config.eval.num_choices, config.eval.augment,
                                derive_seed(config.seed, "mcq-train"));
    return s;
  });
  report.mcq_count = static_cast<int64_t>(sets.test_mcqs.size());

  const std::vector<std::string> paradigm_names =
      config.eval.paradigms.empty() ? default_paradigms(config.format) : config.eval.paradigms;

  // paradigm name -> test-task correctness (aligned across directions)
  std::map<std::string, std::vector<int>> test_correct;

  for (Direction dir : config.directions) {
    const std::string dname = direction_name(dir);
    DirectionReport dr;
    dr.direction = dname;

    TrainedDirection trained =
        stage("train " + dname, config, [&] { return obtain_model(config, split, dir); });
    dr.final_train_loss = trained.final_loss;
    dr.total_steps = trained.total_steps;
    dr.checkpoint_path = trained.ckpt_path;

    stage("eval " + dname, config, [&] {
      for (const std::string& name : paradigm_names) {
        const ScoreParadigm paradigm = paradigm_from_name(name);
        if (paradigm.direction != dir) continue;
        const EvalResult test_res = evaluate_mcq(trained.model, dir, sets.test_mcqs, paradigm);
        const EvalResult train_res = evaluate_mcq(trained.model, dir, sets.train_mcqs, paradigm);
        write_score_records(config.output_dir + "/records_test_" + sanitize(name) + ".jsonl",
                            name, test_res.records);
        write_score_records(config.output_dir + "/records_train_" + sanitize(name) + ".jsonl",
                            name, train_res.records);
        std::vector<int>& correct = test_correct[name];
        for (const ScoreRecord& r : test_res.records) correct.push_back(r.correct ? 1 : 0);
        dr.paradigms.push_back({name, test_res.accuracy, train_res.accuracy});
        std::fprintf(stderr, "[eval %s] %s test %.2f%% train %.2f%%\n", dname.c_str(),
                     name.c_str(), 100 * test_res.accuracy, 100 * train_res.accuracy);
      }
      return 0;
    });

    stage("entropy " + dname, config, [&] {
      const SpanTarget target = native_answer_target(config.format, dir);
      const int cap = config.eval.entropy_prompts;
      auto prompts_of = [&](const std::vector<ArithmeticInstance>& insts) {
        std::vector<TokenSequence> prompts;
        int rollout = config.eval.fixed_rollout_len;
        const size_t limit =
            cap > 0 ? std::min<size_t>(insts.size(), static_cast<size_t>(cap)) : insts.size();
        for (size_t i = 0; i < limit; ++i) {
          auto [prompt, span_len] = entropy_prompt(insts[i], dir, target);
          if (config.eval.natural_rollout_len) rollout = span_len;
          prompts.push_back(std::move(prompt));
        }
        return std::make_pair(std::move(prompts), rollout);
      };
      for (const char* task : {"test", "train"}) {
        auto [prompts, rollout] =
            prompts_of(std::string(task) == "test" ? split.test : sets.train_sample);
        EntropyEstimate est = mc_conditional_entropy(
            trained.model, prompts, rollout, config.eval.rollouts_per_prompt, 1.0,
            derive_seed(config.seed, ("mc-" + dname + "-" + task).c_str()));
        est.direction = dname;
        dr.entropy.push_back({dname, task, est.mean_nll, static_cast<int>(prompts.size()),
                              rollout, config.eval.rollouts_per_prompt});
        std::fprintf(stderr, "[entropy %s] %s %.4f nats over %zu prompts x %d rollouts\n",
                     dname.c_str(), task, est.mean_nll, prompts.size(),
                     config.eval.rollouts_per_prompt);
      }
      const EntropyTarget theo_target = native_answer_target(config.format, dir) == SpanTarget::P
                                            ? EntropyTarget::Product
                                            : EntropyTarget::FactorPair;
      dr.theoretical_target =
          theo_target == EntropyTarget::Product ? "Product" : "FactorPair";
      dr.theoretical_entropy = theoretical_mult_entropy(config.d, theo_target);
      return 0;
    });

    if (config.eval.free_generation) {
      stage("freegen " + dname, config, [&] {
        const SpanTarget target = native_answer_target(config.format, dir);
        dr.free_generation_accuracy =
            exact_match_generation(trained.model, dir, split.test, target,
                                   derive_seed(config.seed, ("freegen-" + dname).c_str()));
        std::fprintf(stderr, "[freegen %s] exact match %.2f%%\n", dname.c_str(),
                     100 * *dr.free_generation_accuracy);
        return 0;
      });
    }

    report.directions.push_back(std::move(dr));
  }

  stage("stats", config, [&] {
    std::vector<std::string> evaluated;
    for (const std::string& name : paradigm_names)
      if (test_correct.count(name)) evaluated.push_back(name);
    const uint64_t boot_seed = derive_seed(config.seed, "bootstrap-stats");
    for (size_t i = 0; i < evaluated.size(); ++i)
      for (size_t j = i + 1; j < evaluated.size(); ++j) {
        const BootstrapResult a =
            bootstrap_accuracy(test_correct[evaluated[i]], config.eval.bootstrap_replicates,
                               config.eval.bootstrap_fraction, boot_seed);
        const BootstrapResult b =
            bootstrap_accuracy(test_correct[evaluated[j]], config.eval.bootstrap_replicates,
                               config.eval.bootstrap_fraction, boot_seed);
        const TTestResult tt = paired_t_test(a.replicate_means, b.replicate_means);
        report.stats.push_back({"test", evaluated[i], evaluated[j], a.mean, a.std, b.mean,
                                b.std, tt.t, tt.p});
      }
    return 0;
  });

  stage("report", config, [&] {
    emit_report(report, report_path);
    std::fprintf(stderr, "[report] wrote %s\n", report_path.c_str());
    return 0;
  });
  return report;
}

}  // namespace revlab
