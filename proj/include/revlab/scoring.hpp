// Choice-scoring paradigms: forward thinking, the three reverse-thinking
// paradigms, partial-target variants, MCQ evaluation, and free-generation
// exact match.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "revlab/datagen.hpp"
#include "revlab/model.hpp"

namespace revlab {

enum class Direction { L2R, R2L };

inline const char* direction_name(Direction d) { return d == Direction::L2R ? "L2R" : "R2L"; }

enum class ParadigmKind {
  ForwardNormalized,             // s = log p(a|q) / N_a
  ReverseNormalizedWithPrior,    // paradigm 1: [log p(q|a) + log p(a)] / (N_q + N_a)
  ReverseUnnormalizedWithPrior,  // paradigm 2: log p(q|a) + log p(a)
  ReverseQuestionOnly,           // paradigm 3: log p(q|a)
  PartialTarget,                 // span logprob of one named part, given the rest
};

enum class SpanTarget { M, N, MN, P };

struct ScoreParadigm {
  ParadigmKind kind = ParadigmKind::ForwardNormalized;
  Direction direction = Direction::L2R;
  SpanTarget target = SpanTarget::MN;  // PartialTarget only
};

inline ScoreParadigm forward_normalized() {
  return {ParadigmKind::ForwardNormalized, Direction::L2R, SpanTarget::MN};
}
inline ScoreParadigm reverse_with_prior(bool normalized) {
  return {normalized ? ParadigmKind::ReverseNormalizedWithPrior
                     : ParadigmKind::ReverseUnnormalizedWithPrior,
          Direction::R2L, SpanTarget::MN};
}
inline ScoreParadigm reverse_question_only() {
  return {ParadigmKind::ReverseQuestionOnly, Direction::R2L, SpanTarget::MN};
}
inline ScoreParadigm partial_target(Direction dir, SpanTarget target) {
  return {ParadigmKind::PartialTarget, dir, target};
}

std::string paradigm_name(const ScoreParadigm& paradigm);

// Inverse of paradigm_name: "forward", "reverse_p1".."reverse_p3",
// "L2R(m)", "R2L(m,n)", ... Throws std::invalid_argument on unknown names.
ScoreParadigm paradigm_from_name(const std::string& name);

struct ScoreRecord {
  int64_t mcq_id = 0;
  std::vector<double> scores;
  int chosen_index = 0;
  bool correct = false;
};

// Pure paradigm arithmetic over precomputed log-probabilities: paradigm 1
// divides (main + prior) by q_len + a_len, paradigm 2 leaves it raw,
// paradigm 3 and the partial targets use main alone, ForwardNormalized
// divides main by a_len.
double combine_scores(const ScoreParadigm& paradigm, double main_logprob,
                      double prior_logprob, int q_len, int a_len);

// The paradigm's direction must match `direction` (the model's training
// direction); mismatches are contract errors.
double score_choice(const Model& model, Direction direction, const MCQInstance& mcq,
                    int choice_index, const ScoreParadigm& paradigm);

struct EvalResult {
  double accuracy = 0;
  std::vector<ScoreRecord> records;
};

// Argmax with lowest-index tie-breaking; batched forward passes internally.
EvalResult evaluate_mcq(const Model& model, Direction direction,
                        const std::vector<MCQInstance>& mcqs,
                        const ScoreParadigm& paradigm);

// Content tokens (no BOS/EOS) in the model's native reading order, plus the
// half-open native-coordinate span covering `target`.
std::pair<TokenSequence, std::pair<int, int>> native_content_span(
    const ArithmeticInstance& inst, Direction direction, SpanTarget target);

// Free ancestral sampling (temperature 1, EOS allowed): condition on the
// native-order content before `target` (which must be a native suffix) and
// report the fraction of exact token matches.
double exact_match_generation(const Model& model, Direction direction,
                              const std::vector<ArithmeticInstance>& instances,
                              SpanTarget target, uint64_t seed);

// MC-entropy prompt: BOS + native content before the target span. Returns the
// prompt and the natural rollout length (the span length).
std::pair<TokenSequence, int> entropy_prompt(const ArithmeticInstance& inst,
                                             Direction direction, SpanTarget target);

}  // namespace revlab
