#include "revlab/report.hpp"

#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace revlab {
namespace {

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

std::string pct(double frac) { return fmt("%.2f", frac * 100.0); }

nlohmann::json entropy_to_json(const EntropyRecord& e) {
  return {{"direction", e.direction},
          {"task", e.task},
          {"mean_nll", e.mean_nll},
          {"n_prompts", e.n_prompts},
          {"rollout_len", e.rollout_len},
          {"rollouts_per_prompt", e.rollouts_per_prompt}};
}

EntropyRecord entropy_from_json(const nlohmann::json& j) {
  EntropyRecord e;
  e.direction = j.at("direction").get<std::string>();
  e.task = j.at("task").get<std::string>();
  e.mean_nll = j.at("mean_nll").get<double>();
  e.n_prompts = j.at("n_prompts").get<int>();
  e.rollout_len = j.at("rollout_len").get<int>();
  e.rollouts_per_prompt = j.at("rollouts_per_prompt").get<int>();
  return e;
}

void fail(const std::string& what) { throw std::runtime_error("report schema: " + what); }

void require(const nlohmann::json& j, const char* key, const char* type) {
  if (!j.contains(key)) fail(std::string("missing key '") + key + "'");
  const nlohmann::json& v = j.at(key);
  const std::string t = type;
  bool ok = (t == "number" && v.is_number()) || (t == "integer" && v.is_number_integer()) ||
            (t == "string" && v.is_string()) || (t == "array" && v.is_array()) ||
            (t == "object" && v.is_object());
  if (!ok) fail(std::string("key '") + key + "' must be a " + type);
}

void check_fraction(const nlohmann::json& v, const std::string& what) {
  if (!v.is_number()) fail(what + " must be a number");
  const double x = v.get<double>();
  if (x < 0.0 || x > 1.0) fail(what + " out of [0,1]: " + std::to_string(x));
}

}  // namespace

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json dirs = nlohmann::json::array();
  for (const DirectionReport& d : report.directions) {
    nlohmann::json paradigms = nlohmann::json::array();
    for (const ParadigmResult& p : d.paradigms)
      paradigms.push_back({{"paradigm", p.paradigm},
                           {"test_accuracy", p.test_accuracy},
                           {"train_accuracy", p.train_accuracy}});
    nlohmann::json entropy = nlohmann::json::array();
    for (const EntropyRecord& e : d.entropy) entropy.push_back(entropy_to_json(e));
    nlohmann::json jd = {{"direction", d.direction},
                         {"final_train_loss", d.final_train_loss},
                         {"total_steps", d.total_steps},
                         {"paradigms", paradigms},
                         {"entropy", entropy},
                         {"theoretical_target", d.theoretical_target},
                         {"theoretical_entropy", d.theoretical_entropy},
                         {"checkpoint_path", d.checkpoint_path}};
    jd["free_generation_accuracy"] =
        d.free_generation_accuracy ? nlohmann::json(*d.free_generation_accuracy)
                                   : nlohmann::json(nullptr);
    dirs.push_back(std::move(jd));
  }
  nlohmann::json stats = nlohmann::json::array();
  for (const StatsRecord& s : report.stats)
    stats.push_back({{"task", s.task},
                     {"scorer_a", s.scorer_a},
                     {"scorer_b", s.scorer_b},
                     {"mean_a", s.mean_a},
                     {"std_a", s.std_a},
                     {"mean_b", s.mean_b},
                     {"std_b", s.std_b},
                     {"t", s.t},
                     {"p", s.p}});
  return {{"schema_version", report.schema_version},
          {"timestamp", report.timestamp},
          {"seed", report.seed},
          {"git_commit", report.git_commit},
          {"config", report.config_echo},
          {"d", report.d},
          {"format", report.format},
          {"param_count", report.param_count},
          {"train_instances", report.train_instances},
          {"train_tokens", report.train_tokens},
          {"test_size", report.test_size},
          {"mcq_count", report.mcq_count},
          {"directions", dirs},
          {"stats", stats}};
}

EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.schema_version = j.at("schema_version").get<int>();
  r.timestamp = j.at("timestamp").get<std::string>();
  r.seed = j.at("seed").get<uint64_t>();
  r.git_commit = j.at("git_commit").get<std::string>();
  r.config_echo = j.at("config");
  r.d = j.at("d").get<int>();
  r.format = j.at("format").get<std::string>();
  r.param_count = j.at("param_count").get<int64_t>();
  r.train_instances = j.at("train_instances").get<int64_t>();
  r.train_tokens = j.at("train_tokens").get<int64_t>();
  r.test_size = j.at("test_size").get<int64_t>();
  r.mcq_count = j.at("mcq_count").get<int64_t>();
  for (const nlohmann::json& jd : j.at("directions")) {
    DirectionReport d;
    d.direction = jd.at("direction").get<std::string>();
    d.final_train_loss = jd.at("final_train_loss").get<double>();
    d.total_steps = jd.at("total_steps").get<int64_t>();
    for (const nlohmann::json& jp : jd.at("paradigms")) {
      ParadigmResult p;
      p.paradigm = jp.at("paradigm").get<std::string>();
      p.test_accuracy = jp.at("test_accuracy").get<double>();
      p.train_accuracy = jp.at("train_accuracy").get<double>();
      d.paradigms.push_back(std::move(p));
    }
    for (const nlohmann::json& je : jd.at("entropy")) d.entropy.push_back(entropy_from_json(je));
    d.theoretical_target = jd.at("theoretical_target").get<std::string>();
    d.theoretical_entropy = jd.at("theoretical_entropy").get<double>();
    if (jd.contains("free_generation_accuracy") && !jd.at("free_generation_accuracy").is_null())
      d.free_generation_accuracy = jd.at("free_generation_accuracy").get<double>();
    d.checkpoint_path = jd.at("checkpoint_path").get<std::string>();
    r.directions.push_back(std::move(d));
  }
  for (const nlohmann::json& js : j.at("stats")) {
    StatsRecord s;
    s.task = js.at("task").get<std::string>();
    s.scorer_a = js.at("scorer_a").get<std::string>();
    s.scorer_b = js.at("scorer_b").get<std::string>();
    s.mean_a = js.at("mean_a").get<double>();
    s.std_a = js.at("std_a").get<double>();
    s.mean_b = js.at("mean_b").get<double>();
    s.std_b = js.at("std_b").get<double>();
    s.t = js.at("t").get<double>();
    s.p = js.at("p").get<double>();
    r.stats.push_back(std::move(s));
  }
  return r;
}

void validate_report_json(const nlohmann::json& j) {
  if (!j.is_object()) fail("report must be a JSON object");
  require(j, "schema_version", "integer");
  if (j.at("schema_version").get<int>() != kReportSchemaVersion)
    fail("unsupported schema_version " + j.at("schema_version").dump());
  require(j, "timestamp", "string");
  require(j, "seed", "number");
  require(j, "git_commit", "string");
  require(j, "config", "object");
  require(j, "d", "integer");
  require(j, "format", "string");
  require(j, "param_count", "integer");
  require(j, "train_instances", "integer");
  require(j, "train_tokens", "integer");
  require(j, "test_size", "integer");
  require(j, "mcq_count", "integer");
  require(j, "directions", "array");
  require(j, "stats", "array");
  for (const nlohmann::json& jd : j.at("directions")) {
    require(jd, "direction", "string");
    require(jd, "final_train_loss", "number");
    require(jd, "total_steps", "integer");
    require(jd, "paradigms", "array");
    require(jd, "entropy", "array");
    require(jd, "theoretical_target", "string");
    require(jd, "theoretical_entropy", "number");
    require(jd, "checkpoint_path", "string");
    for (const nlohmann::json& jp : jd.at("paradigms")) {
      require(jp, "paradigm", "string");
      check_fraction(jp.at("test_accuracy"), "test_accuracy");
      check_fraction(jp.at("train_accuracy"), "train_accuracy");
    }
    for (const nlohmann::json& je : jd.at("entropy")) {
      require(je, "direction", "string");
      require(je, "task", "string");
      require(je, "mean_nll", "number");
      if (je.at("mean_nll").get<double>() < 0) fail("mean_nll must be >= 0");
      require(je, "n_prompts", "integer");
      require(je, "rollout_len", "integer");
      require(je, "rollouts_per_prompt", "integer");
    }
    if (jd.contains("free_generation_accuracy") && !jd.at("free_generation_accuracy").is_null())
      check_fraction(jd.at("free_generation_accuracy"), "free_generation_accuracy");
  }
  for (const nlohmann::json& js : j.at("stats")) {
    require(js, "task", "string");
    require(js, "scorer_a", "string");
    require(js, "scorer_b", "string");
    require(js, "mean_a", "number");
    require(js, "std_a", "number");
    require(js, "mean_b", "number");
    require(js, "std_b", "number");
    require(js, "t", "number");
    require(js, "p", "number");
  }
}

std::string render_text_table(const EvalReport& report) {
  std::ostringstream out;
  out << "revlab report (schema v" << report.schema_version << ")\n";
  out << "format " << report.format << ", d=" << report.d << ", params " << report.param_count
      << ", train " << report.train_instances << " instances (" << report.train_tokens
      << " tokens), test " << report.test_size << ", mcqs " << report.mcq_count << "\n";
  out << "seed " << report.seed << ", git " << report.git_commit << ", " << report.timestamp
      << "\n\n";

  std::vector<std::string> cols;
  for (const DirectionReport& d : report.directions) cols.push_back(d.direction);
  std::vector<std::string> rows;
  for (const DirectionReport& d : report.directions)
    for (const ParadigmResult& p : d.paradigms) {
      bool seen = false;
      for (const std::string& r : rows) seen = seen || r == p.paradigm;
      if (!seen) rows.push_back(p.paradigm);
    }

  auto cell = [&](const DirectionReport& d, const std::string& row,
                  bool train) -> std::string {
    for (const ParadigmResult& p : d.paradigms)
      if (p.paradigm == row) return pct(train ? p.train_accuracy : p.test_accuracy);
    return "-";
  };
  auto print_row = [&](const std::string& label, const std::vector<std::string>& cells) {
    out << "  ";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%-18s", label.c_str());
    out << buf;
    for (const std::string& c : cells) {
      std::snprintf(buf, sizeof buf, "%12s", c.c_str());
      out << buf;
    }
    out << "\n";
  };

  for (bool train : {false, true}) {
    out << (train ? "Train Accuracy (%)\n" : "Test Accuracy (%)\n");
    print_row("scorer", cols);
    for (const std::string& row : rows) {
      std::vector<std::string> cells;
      for (const DirectionReport& d : report.directions) cells.push_back(cell(d, row, train));
      print_row(row, cells);
    }
    out << "\n";
  }

  out << "Training loss\n";
  {
    std::vector<std::string> cells;
    for (const DirectionReport& d : report.directions) cells.push_back(fmt("%.4f", d.final_train_loss));
    print_row("final", cells);
  }
  out << "\n";

  out << "Cond. Ent. (nats)\n";
  for (const std::string& task : {std::string("test"), std::string("train")}) {
    std::vector<std::string> cells;
    bool any = false;
    for (const DirectionReport& d : report.directions) {
      std::string c = "-";
      for (const EntropyRecord& e : d.entropy)
        if (e.task == task) {
          c = fmt("%.4f", e.mean_nll);
          any = true;
        }
      cells.push_back(c);
    }
    if (any) print_row(task, cells);
  }
  {
    std::vector<std::string> values, targets;
    for (const DirectionReport& d : report.directions) {
      values.push_back(fmt("%.4f", d.theoretical_entropy));
      targets.push_back(d.theoretical_target);
    }
    print_row("theoretical", values);
    print_row("  target", targets);
  }
  out << "\n";

  {
    bool any = false;
    for (const DirectionReport& d : report.directions) any = any || d.free_generation_accuracy.has_value();
    if (any) {
      out << "Free generation (%)\n";
      std::vector<std::string> cells;
      for (const DirectionReport& d : report.directions)
        cells.push_back(d.free_generation_accuracy ? pct(*d.free_generation_accuracy) : "-");
      print_row("exact match", cells);
      out << "\n";
    }
  }

  if (!report.stats.empty()) {
    out << "Significance (paired t over bootstrap replicates)\n";
    for (const StatsRecord& s : report.stats) {
      out << "  " << s.scorer_a << " vs " << s.scorer_b << " [" << s.task << "]: " << pct(s.mean_a)
          << "±" << pct(s.std_a) << " vs " << pct(s.mean_b) << "±" << pct(s.std_b)
          << ", t=" << fmt("%.4f", s.t) << ", p=" << fmt("%.6f", s.p) << "\n";
    }
  }
  return out.str();
}

void emit_report(const EvalReport& report, const std::string& json_path) {
  const nlohmann::json j = to_json(report);
  {
    std::ofstream out(json_path);
    if (!out) throw std::runtime_error("cannot write report: " + json_path);
    out << j.dump(2) << "\n";
  }
  std::string text_path = json_path;
  if (text_path.size() >= 5 && text_path.substr(text_path.size() - 5) == ".json")
    text_path = text_path.substr(0, text_path.size() - 5) + ".txt";
  else
    text_path += ".txt";
  std::ofstream out(text_path);
  if (!out) throw std::runtime_error("cannot write report table: " + text_path);
  out << render_text_table(report);
}

void write_score_records(const std::string& path, const std::string& paradigm,
                         const std::vector<ScoreRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write records: " + path);
  for (const ScoreRecord& r : records) {
    nlohmann::json j = {{"mcq_id", r.mcq_id},
                        {"paradigm", paradigm},
                        {"scores", r.scores},
                        {"chosen", r.chosen_index},
                        {"correct", r.correct}};
    out << j.dump() << "\n";
  }
}

std::vector<ScoreRecord> read_score_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read records: " + path);
  std::vector<ScoreRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line);
    ScoreRecord r;
    r.mcq_id = j.at("mcq_id").get<int64_t>();
    r.scores = j.at("scores").get<std::vector<double>>();
    r.chosen_index = j.at("chosen").get<int>();
    r.correct = j.at("correct").get<bool>();
    records.push_back(std::move(r));
  }
  return records;
}

std::string current_git_commit() {
  FILE* pipe = ::popen("git rev-parse HEAD 2>/dev/null", "r");
  if (!pipe) return "unknown";
  char buf[128] = {0};
  std::string hash;
  if (std::fgets(buf, sizeof buf, pipe)) hash = buf;
  ::pclose(pipe);
  while (!hash.empty() && (hash.back() == '\n' || hash.back() == '\r')) hash.pop_back();
  return hash.empty() ? "unknown" : hash;
}

std::string iso8601_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace revlab
