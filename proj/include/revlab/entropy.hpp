// Directional conditional entropy, measured two ways: Monte-Carlo rollouts
// scored under the model itself, and the exact multiplication oracle.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "revlab/model.hpp"

namespace revlab {

struct EntropyEstimate {
  double mean_nll = 0;  // nats
  std::vector<double> per_prompt;
  int rollout_len = 0;
  int rollouts_per_prompt = 0;
  std::string direction;  // label filled in by the caller ("L2R"/"R2L")
};

// For each prompt draw continuations of exactly rollout_len tokens with EOS
// suppressed, score each continuation's nll under the unsuppressed model,
// average within prompt and then across prompts.
EntropyEstimate mc_conditional_entropy(const Model& model,
                                       const std::vector<TokenSequence>& prompts,
                                       int rollout_len = 10,
                                       int rollouts_per_prompt = 1,
                                       double temperature = 1.0, uint64_t seed = 0);

enum class EntropyTarget { Product, FactorPair };

// Product -> 0 (multiplication is deterministic).
// FactorPair -> H(M,N | P) = sum_p (c_p / 10^2d) ln c_p with
// c_p = |{(m,n) in [0,10^d)^2 : m*n = p}|.
// d <= 4; larger d raises a capacity error rather than truncating.
double theoretical_mult_entropy(int d, EntropyTarget target);

}  // namespace revlab
