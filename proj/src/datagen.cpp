#include "revlab/datagen.hpp"

#include <algorithm>
#include <stdexcept>

#include "revlab/rng.hpp"

namespace revlab {

namespace {

int64_t pow10i(int e) {
  int64_t v = 1;
  while (e-- > 0) v *= 10;
  return v;
}

void append_digits(TokenSequence& seq, int64_t value, int width) {
  size_t at = seq.size();
  seq.resize(at + width);
  for (int i = width - 1; i >= 0; --i) {
    seq[at + i] = static_cast<Token>(value % 10);
    value /= 10;
  }
}

}  // namespace

TokenSequence render_instance(int64_t m, int64_t n, int d, Format format) {
  int64_t lim = pow10i(d);
  if (m < 0 || m >= lim || n < 0 || n >= lim)
    throw std::invalid_argument("factor out of range for d=" + std::to_string(d));
  TokenSequence seq;
  seq.reserve(instance_length(d));
  seq.push_back(tok::BOS);
  if (format == Format::ForwardX) {
    append_digits(seq, m, d);
    seq.push_back(tok::MUL);
    append_digits(seq, n, d);
    seq.push_back(tok::EQ);
    append_digits(seq, m * n, 2 * d);
  } else {
    append_digits(seq, m * n, 2 * d);
    seq.push_back(tok::EQ);
    append_digits(seq, m, d);
    seq.push_back(tok::MUL);
    append_digits(seq, n, d);
  }
  seq.push_back(tok::EOS);
  return seq;
}

InstanceLayout instance_layout(int d, Format format) {
  InstanceLayout lay{};
  lay.d = d;
  lay.format = format;
  if (format == Format::ForwardX) {
    lay.m_begin = 1;
    lay.m_end = 1 + d;
    lay.n_begin = lay.m_end + 1;
    lay.n_end = lay.n_begin + d;
    lay.p_begin = lay.n_end + 1;
    lay.p_end = lay.p_begin + 2 * d;
    lay.question_end = lay.p_begin;  // "m x n ="
    lay.answer_begin = lay.p_begin;
    lay.answer_end = lay.p_end;
  } else {
    lay.p_begin = 1;
    lay.p_end = 1 + 2 * d;
    lay.m_begin = lay.p_end + 1;
    lay.m_end = lay.m_begin + d;
    lay.n_begin = lay.m_end + 1;
    lay.n_end = lay.n_begin + d;
    lay.question_end = lay.m_begin;  // "p ="
    lay.answer_begin = lay.m_begin;  // "m x n"
    lay.answer_end = lay.n_end;
  }
  return lay;
}

TokenSequence reverse_sequence(const TokenSequence& seq) {
  if (seq.size() < 2 || seq.front() != tok::BOS || seq.back() != tok::EOS)
    throw std::invalid_argument("reverse_sequence expects BOS ... EOS framing");
  TokenSequence out(seq);
  std::reverse(out.begin() + 1, out.end() - 1);
  return out;
}

// 4-round balanced Feistel over 2*half_bits_ bits with cycle-walking keeps the
// permutation inside [0, 10^2d) without materializing it.
TrainStream::TrainStream(const SplitSpec& spec, std::unordered_set<int64_t> test_indices)
    : spec_(spec), test_(std::move(test_indices)), total_(pow10i(2 * spec.d)) {
  int bits = 1;
  while ((int64_t{1} << bits) < total_) ++bits;
  half_bits_ = (bits + 1) / 2;
  uint64_t k = derive_seed(spec.seed, "train-order");
  for (auto& rk : round_keys_) rk = k = splitmix64(k);
}

int64_t TrainStream::permute(int64_t i) const {
  uint64_t mask = (uint64_t{1} << half_bits_) - 1;
  uint64_t x = static_cast<uint64_t>(i);
  do {
    uint64_t left = x >> half_bits_, right = x & mask;
    for (uint64_t rk : round_keys_) {
      uint64_t f = splitmix64(right ^ rk) & mask;
      uint64_t next = left ^ f;
      left = right;
      right = next;
    }
    x = (left << half_bits_) | right;
  } while (x >= static_cast<uint64_t>(total_));
  return static_cast<int64_t>(x);
}

std::optional<ArithmeticInstance> TrainStream::next() {
  int64_t lim = pow10i(spec_.d);
  while (cursor_ < total_) {
    int64_t idx = permute(cursor_++);
    if (test_.contains(idx)) continue;
    ArithmeticInstance inst;
    inst.m = idx / lim;
    inst.n = idx % lim;
    inst.p = inst.m * inst.n;
    inst.d = spec_.d;
    inst.format = spec_.format;
    return inst;
  }
  return std::nullopt;
}

Split generate_split(const SplitSpec& spec) {
  int64_t total = pow10i(2 * spec.d);
  if (spec.test_size <= 0 || spec.test_size >= total)
    throw std::invalid_argument("test_size must be in (0, 10^2d)");
  auto rng = make_rng(spec.seed, "test-select");
  std::unordered_set<int64_t> test_idx;
  test_idx.reserve(spec.test_size * 2);
  while (static_cast<int64_t>(test_idx.size()) < spec.test_size)
    test_idx.insert(static_cast<int64_t>(uniform_below(rng, static_cast<uint64_t>(total))));

  std::vector<int64_t> ordered(test_idx.begin(), test_idx.end());
  std::sort(ordered.begin(), ordered.end());
  int64_t lim = pow10i(spec.d);
  std::vector<ArithmeticInstance> test;
  test.reserve(ordered.size());
  for (int64_t idx : ordered)
    test.push_back({idx / lim, idx % lim, (idx / lim) * (idx % lim), spec.d, spec.format});

  return Split{TrainStream(spec, std::move(test_idx)), std::move(test)};
}

std::vector<MCQInstance> make_mcq_set(const std::vector<ArithmeticInstance>& test,
                                      int num_choices, int augment, uint64_t seed) {
  if (num_choices < 2) throw std::invalid_argument("num_choices must be >= 2");
  std::vector<MCQInstance> out;
  out.reserve(test.size() * augment);
  for (const auto& inst : test) {
    InstanceLayout lay = instance_layout(inst.d, inst.format);
    TokenSequence rendered = render_instance(inst.m, inst.n, inst.d, inst.format);
    TokenSequence question(rendered.begin() + 1, rendered.begin() + lay.question_end);
    TokenSequence answer(rendered.begin() + lay.answer_begin, rendered.begin() + lay.answer_end);
    // digit positions within the answer span (ReverseX answers contain MUL)
    std::vector<int> digit_pos;
    for (int i = 0; i < static_cast<int>(answer.size()); ++i)
      if (answer[i] <= 9) digit_pos.push_back(i);
    if (digit_pos.empty()) throw std::logic_error("answer span has no digits");
    int64_t source_id = inst.m * pow10i(inst.d) + inst.n;

    for (int rep = 0; rep < augment; ++rep) {
      std::mt19937_64 rng(splitmix64(derive_seed(seed, "mcq") ^
                                     splitmix64(static_cast<uint64_t>(source_id) * 0x10001ull + rep)));
      std::vector<TokenSequence> choices{answer};
      int attempts = 0;
      while (static_cast<int>(choices.size()) < num_choices) {
        if (++attempts > 1000) throw std::runtime_error("could not draw distinct negatives");
        TokenSequence neg(answer);
        int pos = digit_pos[uniform_below(rng, digit_pos.size())];
        Token old = neg[pos];
        Token sub = static_cast<Token>(uniform_below(rng, 9));
        if (sub >= old) ++sub;  // uniform over the 9 other digits
        neg[pos] = sub;
        if (std::find(choices.begin(), choices.end(), neg) == choices.end())
          choices.push_back(std::move(neg));
      }
      std::vector<int> order(choices.size());
      for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
      shuffle_inplace(order, rng);

      MCQInstance mcq;
      mcq.question = question;
      mcq.choices.resize(choices.size());
      for (size_t slot = 0; slot < order.size(); ++slot) {
        mcq.choices[slot] = choices[order[slot]];
        if (order[slot] == 0) mcq.correct_index = static_cast<int>(slot);
      }
      mcq.source_id = source_id;
      mcq.replicate = rep;
      mcq.d = inst.d;
      mcq.format = inst.format;
      out.push_back(std::move(mcq));
    }
  }
  return out;
}

void export_tokens(TrainStream& stream, std::function<void(const TokenSequence&)> sink) {
  stream.reset();
  while (auto inst = stream.next())
    sink(render_instance(inst->m, inst->n, inst->d, inst->format));
}

}  // namespace revlab
