// Multiplication corpora: rendering, deterministic splits, the R2L reversal
// transform, and hard-negative MCQ construction.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <unordered_set>
#include <vector>

#include "revlab/tokens.hpp"

namespace revlab {

enum class Format { ForwardX, ReverseX };

inline const char* format_name(Format f) {
  return f == Format::ForwardX ? "ForwardX" : "ReverseX";
}

struct ArithmeticInstance {
  int64_t m = 0;
  int64_t n = 0;
  int64_t p = 0;  // = m * n
  int d = 0;
  Format format = Format::ForwardX;
};

// ForwardX: BOS m MUL n EQ p EOS; ReverseX: BOS p EQ m MUL n EOS.
// m, n zero-padded to d digits, p to 2d digits, most-significant first.
// Total length 4d + 4 for either format.
TokenSequence render_instance(int64_t m, int64_t n, int d, Format format);

inline int instance_length(int d) { return 4 * d + 4; }

// Half-open token index ranges of the rendered parts, BOS at index 0.
struct InstanceLayout {
  int d;
  Format format;
  int m_begin, m_end;
  int n_begin, n_end;
  int p_begin, p_end;
  // Prompt/answer split for MCQs: ForwardX answers with p, ReverseX with
  // "m x n" (answer includes the interior MUL for ReverseX).
  int question_end;   // question = [1, question_end), BOS excluded
  int answer_begin, answer_end;
};
InstanceLayout instance_layout(int d, Format format);

// Reverses the content between BOS and EOS; markers stay at the boundaries.
TokenSequence reverse_sequence(const TokenSequence& seq);

struct SplitSpec {
  int d = 3;
  Format format = Format::ForwardX;
  int64_t test_size = 1000;
  uint64_t seed = 0;
};

// Lazy shuffled stream over all (m, n) pairs except the held-out test set.
// The order is a seeded Feistel permutation of [0, 10^2d); memory is O(test).
class TrainStream {
 public:
  TrainStream(const SplitSpec& spec, std::unordered_set<int64_t> test_indices);
  std::optional<ArithmeticInstance> next();
  int64_t size() const { return total_ - static_cast<int64_t>(test_.size()); }
  void reset() { cursor_ = 0; }

 private:
  SplitSpec spec_;
  std::unordered_set<int64_t> test_;
  int64_t total_;
  int64_t cursor_ = 0;
  int half_bits_;
  uint64_t round_keys_[4];

  int64_t permute(int64_t i) const;
};

struct Split {
  TrainStream train;
  std::vector<ArithmeticInstance> test;
};

Split generate_split(const SplitSpec& spec);

struct MCQInstance {
  TokenSequence question;               // conditioning content, no BOS/EOS
  std::vector<TokenSequence> choices;   // 4 spans, equal length
  int correct_index = 0;
  int64_t source_id = 0;                // m * 10^d + n of the source pair
  int replicate = 0;
  int d = 0;
  Format format = Format::ForwardX;
};

// One MCQ per (instance, replicate): 3 negatives at digit-Hamming distance 1
// from the true answer, mutually distinct, seeded choice shuffle.
std::vector<MCQInstance> make_mcq_set(const std::vector<ArithmeticInstance>& test,
                                      int num_choices = 4, int augment = 10,
                                      uint64_t seed = 0);

// Optional corpus export: one instance per line, space-separated decimal ids.
void export_tokens(TrainStream& stream, std::function<void(const TokenSequence&)> sink);

}  // namespace revlab
