// Fixed 15-symbol arithmetic vocabulary and token sequence helpers.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace revlab {

using Token = int32_t;
using TokenSequence = std::vector<Token>;

namespace tok {
constexpr Token MUL = 10;
constexpr Token EQ = 11;
constexpr Token BOS = 12;
constexpr Token EOS = 13;
constexpr Token PAD = 14;
constexpr int VOCAB = 15;

inline char symbol(Token t) {
  if (t >= 0 && t <= 9) return static_cast<char>('0' + t);
  switch (t) {
    case MUL: return 'x';
    case EQ: return '=';
    case BOS: return '^';
    case EOS: return '$';
    case PAD: return '_';
    default: throw std::invalid_argument("token id out of range: " + std::to_string(t));
  }
}

inline std::string to_string(const TokenSequence& seq) {
  std::string s;
  s.reserve(seq.size());
  for (Token t : seq) s.push_back(symbol(t));
  return s;
}
}  // namespace tok

}  // namespace revlab
