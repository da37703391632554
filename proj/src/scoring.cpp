#include "revlab/scoring.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>
#include <utility>

#include "revlab/rng.hpp"

namespace revlab {
namespace {

TokenSequence reversed(const TokenSequence& v) {
  return TokenSequence(v.rbegin(), v.rend());
}

// Half-open span of `target` in content coordinates (rendered layout minus
// the BOS slot). MN is the contiguous "m x n" run including the interior MUL.
std::pair<int, int> content_span(int d, Format format, SpanTarget target) {
  const InstanceLayout lay = instance_layout(d, format);
  switch (target) {
    case SpanTarget::M:
      return {lay.m_begin - 1, lay.m_end - 1};
    case SpanTarget::N:
      return {lay.n_begin - 1, lay.n_end - 1};
    case SpanTarget::MN:
      return {lay.m_begin - 1, lay.n_end - 1};
    case SpanTarget::P:
      return {lay.p_begin - 1, lay.p_end - 1};
  }
  throw std::logic_error("unknown span target");
}

struct ScoreItem {
  TokenSequence seq;
  std::pair<int, int> span;
};

// The sequence fed to the model for one (mcq, choice) and the scored span.
// Reverse paradigms share one construction: BOS + reverse(a) + reverse(q),
// which is also BOS + reverse(q + a), so PartialTarget R2L reuses it with a
// remapped span.
ScoreItem main_item(const MCQInstance& mcq, const TokenSequence& choice,
                    const ScoreParadigm& paradigm) {
  const int q_len = static_cast<int>(mcq.question.size());
  const int a_len = static_cast<int>(choice.size());
  ScoreItem item;
  switch (paradigm.kind) {
    case ParadigmKind::ForwardNormalized: {
      item.seq.reserve(1 + q_len + a_len);
      item.seq.push_back(tok::BOS);
      item.seq.insert(item.seq.end(), mcq.question.begin(), mcq.question.end());
      item.seq.insert(item.seq.end(), choice.begin(), choice.end());
      item.span = {1 + q_len, 1 + q_len + a_len};
      return item;
    }
    case ParadigmKind::ReverseNormalizedWithPrior:
    case ParadigmKind::ReverseUnnormalizedWithPrior:
    case ParadigmKind::ReverseQuestionOnly: {
      const TokenSequence ra = reversed(choice);
      const TokenSequence rq = reversed(mcq.question);
      item.seq.reserve(1 + q_len + a_len);
      item.seq.push_back(tok::BOS);
      item.seq.insert(item.seq.end(), ra.begin(), ra.end());
      item.seq.insert(item.seq.end(), rq.begin(), rq.end());
      item.span = {1 + a_len, 1 + a_len + q_len};
      return item;
    }
    case ParadigmKind::PartialTarget: {
      TokenSequence content = mcq.question;
      content.insert(content.end(), choice.begin(), choice.end());
      const int total = static_cast<int>(content.size());
      auto [s, e] = content_span(mcq.d, mcq.format, paradigm.target);
      if (e > total)
        throw std::invalid_argument("partial-target span lies outside the instance content");
      if (paradigm.direction == Direction::R2L) {
        content = reversed(content);
        const int rs = total - e, re = total - s;
        s = rs;
        e = re;
      }
      item.seq.reserve(1 + total);
      item.seq.push_back(tok::BOS);
      item.seq.insert(item.seq.end(), content.begin(), content.end());
      item.span = {1 + s, 1 + e};
      return item;
    }
  }
  throw std::logic_error("unknown paradigm kind");
}

// log p_R2L(a): reverse(a) scored against BOS alone.
ScoreItem prior_item(const TokenSequence& choice) {
  ScoreItem item;
  const TokenSequence ra = reversed(choice);
  item.seq.reserve(1 + ra.size());
  item.seq.push_back(tok::BOS);
  item.seq.insert(item.seq.end(), ra.begin(), ra.end());
  item.span = {1, 1 + static_cast<int>(choice.size())};
  return item;
}

bool needs_prior(ParadigmKind kind) {
  return kind == ParadigmKind::ReverseNormalizedWithPrior ||
         kind == ParadigmKind::ReverseUnnormalizedWithPrior;
}

void check_direction(Direction direction, const ScoreParadigm& paradigm) {
  if (paradigm.direction != direction)
    throw std::invalid_argument("paradigm direction does not match the model direction");
}

}  // namespace

double combine_scores(const ScoreParadigm& paradigm, double main_logprob,
                      double prior_logprob, int q_len, int a_len) {
  switch (paradigm.kind) {
    case ParadigmKind::ForwardNormalized:
      return main_logprob / a_len;
    case ParadigmKind::ReverseNormalizedWithPrior:
      return (main_logprob + prior_logprob) / (q_len + a_len);
    case ParadigmKind::ReverseUnnormalizedWithPrior:
      return main_logprob + prior_logprob;
    case ParadigmKind::ReverseQuestionOnly:
      return main_logprob;
    case ParadigmKind::PartialTarget:
      return main_logprob;
  }
  throw std::logic_error("unknown paradigm kind");
}

std::string paradigm_name(const ScoreParadigm& paradigm) {
  switch (paradigm.kind) {
    case ParadigmKind::ForwardNormalized:
      return "forward";
    case ParadigmKind::ReverseNormalizedWithPrior:
      return "reverse_p1";
    case ParadigmKind::ReverseUnnormalizedWithPrior:
      return "reverse_p2";
    case ParadigmKind::ReverseQuestionOnly:
      return "reverse_p3";
    case ParadigmKind::PartialTarget: {
      const char* t = paradigm.target == SpanTarget::M    ? "m"
                      : paradigm.target == SpanTarget::N  ? "n"
                      : paradigm.target == SpanTarget::MN ? "m,n"
                                                          : "p";
      return std::string(direction_name(paradigm.direction)) + "(" + t + ")";
    }
  }
  throw std::logic_error("unknown paradigm kind");
}

ScoreParadigm paradigm_from_name(const std::string& name) {
  if (name == "forward") return forward_normalized();
  if (name == "reverse_p1") return reverse_with_prior(true);
  if (name == "reverse_p2") return reverse_with_prior(false);
  if (name == "reverse_p3") return reverse_question_only();
  for (Direction dir : {Direction::L2R, Direction::R2L}) {
    const std::string prefix = std::string(direction_name(dir)) + "(";
    if (name.size() > prefix.size() + 1 && name.compare(0, prefix.size(), prefix) == 0 &&
        name.back() == ')') {
      const std::string t = name.substr(prefix.size(), name.size() - prefix.size() - 1);
      if (t == "m") return partial_target(dir, SpanTarget::M);
      if (t == "n") return partial_target(dir, SpanTarget::N);
      if (t == "m,n") return partial_target(dir, SpanTarget::MN);
      if (t == "p") return partial_target(dir, SpanTarget::P);
    }
  }
  throw std::invalid_argument("unknown scoring paradigm: " + name);
}

double score_choice(const Model& model, Direction direction, const MCQInstance& mcq,
                    int choice_index, const ScoreParadigm& paradigm) {
  check_direction(direction, paradigm);
  if (choice_index < 0 || choice_index >= static_cast<int>(mcq.choices.size()))
    throw std::invalid_argument("choice index out of range");
  const TokenSequence& choice = mcq.choices[choice_index];
  const ScoreItem main = main_item(mcq, choice, paradigm);
  const double main_lp = span_logprob(model, main.seq, main.span.first, main.span.second);
  double prior_lp = 0;
  if (needs_prior(paradigm.kind)) {
    const ScoreItem prior = prior_item(choice);
    prior_lp = span_logprob(model, prior.seq, prior.span.first, prior.span.second);
  }
  return combine_scores(paradigm, main_lp, prior_lp, static_cast<int>(mcq.question.size()),
                 static_cast<int>(choice.size()));
}

EvalResult evaluate_mcq(const Model& model, Direction direction,
                        const std::vector<MCQInstance>& mcqs,
                        const ScoreParadigm& paradigm) {
  check_direction(direction, paradigm);
  if (mcqs.empty()) throw std::invalid_argument("evaluate_mcq: empty mcq list");

  std::vector<TokenSequence> seqs;
  std::vector<std::pair<int, int>> spans;
  std::vector<TokenSequence> prior_seqs;
  std::vector<std::pair<int, int>> prior_spans;
  for (const MCQInstance& mcq : mcqs) {
    for (const TokenSequence& choice : mcq.choices) {
      ScoreItem item = main_item(mcq, choice, paradigm);
      seqs.push_back(std::move(item.seq));
      spans.push_back(item.span);
      if (needs_prior(paradigm.kind)) {
        ScoreItem prior = prior_item(choice);
        prior_seqs.push_back(std::move(prior.seq));
        prior_spans.push_back(prior.span);
      }
    }
  }
  const std::vector<double> main_lp = span_logprob_batch(model, seqs, spans);
  std::vector<double> prior_lp;
  if (needs_prior(paradigm.kind)) prior_lp = span_logprob_batch(model, prior_seqs, prior_spans);

  EvalResult result;
  result.records.reserve(mcqs.size());
  size_t flat = 0;
  int64_t hits = 0;
  for (size_t i = 0; i < mcqs.size(); ++i) {
    const MCQInstance& mcq = mcqs[i];
    ScoreRecord rec;
    rec.mcq_id = static_cast<int64_t>(i);
    rec.scores.resize(mcq.choices.size());
    for (size_t c = 0; c < mcq.choices.size(); ++c, ++flat) {
      const double prior = needs_prior(paradigm.kind) ? prior_lp[flat] : 0.0;
      rec.scores[c] = combine_scores(paradigm, main_lp[flat], prior,
                              static_cast<int>(mcq.question.size()),
                              static_cast<int>(mcq.choices[c].size()));
    }
    rec.chosen_index = 0;
    for (size_t c = 1; c < rec.scores.size(); ++c)
      if (rec.scores[c] > rec.scores[rec.chosen_index]) rec.chosen_index = static_cast<int>(c);
    rec.correct = rec.chosen_index == mcq.correct_index;
    hits += rec.correct ? 1 : 0;
    result.records.push_back(std::move(rec));
  }
  result.accuracy = static_cast<double>(hits) / static_cast<double>(mcqs.size());
  return result;
}

std::pair<TokenSequence, std::pair<int, int>> native_content_span(
    const ArithmeticInstance& inst, Direction direction, SpanTarget target) {
  const TokenSequence rendered = render_instance(inst.m, inst.n, inst.d, inst.format);
  TokenSequence content(rendered.begin() + 1, rendered.end() - 1);
  auto [s, e] = content_span(inst.d, inst.format, target);
  if (direction == Direction::R2L) {
    content = reversed(content);
    const int total = static_cast<int>(content.size());
    const int rs = total - e, re = total - s;
    s = rs;
    e = re;
  }
  return {std::move(content), {s, e}};
}

double exact_match_generation(const Model& model, Direction direction,
                              const std::vector<ArithmeticInstance>& instances,
                              SpanTarget target, uint64_t seed) {
  if (instances.empty())
    throw std::invalid_argument("exact_match_generation: empty instance list");
  std::vector<TokenSequence> prompts;
  std::vector<TokenSequence> truths;
  prompts.reserve(instances.size());
  truths.reserve(instances.size());
  int span_len = -1;
  for (const ArithmeticInstance& inst : instances) {
    auto [content, span] = native_content_span(inst, direction, target);
    if (span.second != static_cast<int>(content.size()))
      throw std::invalid_argument("completion span must be a suffix in the native order");
    const int len = span.second - span.first;
    if (span_len < 0)
      span_len = len;
    else if (span_len != len)
      throw std::invalid_argument("instances disagree on completion span length");
    TokenSequence prompt;
    prompt.reserve(1 + span.first);
    prompt.push_back(tok::BOS);
    prompt.insert(prompt.end(), content.begin(), content.begin() + span.first);
    prompts.push_back(std::move(prompt));
    truths.emplace_back(content.begin() + span.first, content.end());
  }
  const BatchSample out =
      sample_batch(model, prompts, span_len, 1.0, false, derive_seed(seed, "freegen"));
  int64_t hits = 0;
  for (size_t i = 0; i < instances.size(); ++i) {
    const TokenSequence& seq = out.sequences[i];
    if (std::equal(truths[i].begin(), truths[i].end(), seq.end() - span_len)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(instances.size());
}

std::pair<TokenSequence, int> entropy_prompt(const ArithmeticInstance& inst,
                                             Direction direction, SpanTarget target) {
  auto [content, span] = native_content_span(inst, direction, target);
  if (span.second != static_cast<int>(content.size()))
    throw std::invalid_argument("entropy target must be a suffix in the native order");
  TokenSequence prompt;
  prompt.reserve(1 + span.first);
  prompt.push_back(tok::BOS);
  prompt.insert(prompt.end(), content.begin(), content.begin() + span.first);
  return {std::move(prompt), span.second - span.first};
}

}  // namespace revlab
