#include "revlab/entropy.hpp"

#include <cmath>
#include <stdexcept>

#include "revlab/rng.hpp"

namespace revlab {

EntropyEstimate mc_conditional_entropy(const Model& model,
                                       const std::vector<TokenSequence>& prompts,
                                       int rollout_len, int rollouts_per_prompt,
                                       double temperature, uint64_t seed) {
  if (prompts.empty()) throw std::invalid_argument("prompts must be non-empty");
  if (rollout_len <= 0) throw std::invalid_argument("rollout_len must be positive");
  if (rollouts_per_prompt <= 0)
    throw std::invalid_argument("rollouts_per_prompt must be positive");

  EntropyEstimate est;
  est.rollout_len = rollout_len;
  est.rollouts_per_prompt = rollouts_per_prompt;
  est.per_prompt.assign(prompts.size(), 0.0);
  for (int rep = 0; rep < rollouts_per_prompt; ++rep) {
    uint64_t rep_seed = derive_seed(seed, "mc-entropy") ^ splitmix64(rep);
    BatchSample rollout = sample_batch(model, prompts, rollout_len, temperature,
                                       /*suppress_eos=*/true, rep_seed);
    for (size_t i = 0; i < prompts.size(); ++i)
      est.per_prompt[i] += -rollout.logprobs[i] / rollouts_per_prompt;
  }
  double sum = 0;
  for (double v : est.per_prompt) sum += v;
  est.mean_nll = sum / static_cast<double>(est.per_prompt.size());
  return est;
}

double theoretical_mult_entropy(int d, EntropyTarget target) {
  if (d < 1) throw std::invalid_argument("d must be >= 1");
  if (target == EntropyTarget::Product) return 0.0;
  if (d > 4)
    throw std::length_error("theoretical_mult_entropy: d > 4 needs " +
                            std::to_string(4.0 * std::pow(10.0, 2 * d) / (1 << 30)) +
                            " GiB of counters; refusing");
  int64_t lim = 1;
  for (int i = 0; i < d; ++i) lim *= 10;
  const int64_t pmax = (lim - 1) * (lim - 1);
  std::vector<uint32_t> counts(static_cast<size_t>(pmax) + 1, 0);
  for (int64_t m = 0; m < lim; ++m) {
    uint32_t* row = counts.data();
    for (int64_t n = 0; n < lim; ++n) ++row[m * n];
  }

  const double total = static_cast<double>(lim) * static_cast<double>(lim);
  // Kahan summation; 10^8 small terms otherwise lose a few digits
  double h = 0, comp = 0;
  uint64_t mass = 0;
  for (size_t p = 0; p <= static_cast<size_t>(pmax); ++p) {
    uint32_t cp = counts[p];
    if (cp == 0) continue;
    mass += cp;
    if (cp == 1) continue;  // ln 1 = 0
    double term = (cp / total) * std::log(static_cast<double>(cp));
    double y = term - comp;
    double t = h + y;
    comp = (t - h) - y;
    h = t;
  }
  if (mass != static_cast<uint64_t>(total))
    throw std::logic_error("multiplicity counts do not cover the pair space");
  return h;
}

}  // namespace revlab
