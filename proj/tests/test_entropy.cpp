#include <doctest.h>

#include <cmath>

#include "revlab/entropy.hpp"

using namespace revlab;

namespace {

const double kLn15 = std::log(15.0);

ModelConfig micro() {
  ModelConfig c;
  c.num_layers = 1;
  c.num_heads = 2;
  c.embed_dim = 12;
  c.mlp_dim = 24;
  c.max_seq_len = 16;
  return c;
}

}  // namespace

TEST_CASE("theoretical factor-pair entropy matches the exact counts") {
  CHECK(theoretical_mult_entropy(1, EntropyTarget::FactorPair) ==
        doctest::Approx(1.273520512352).epsilon(1e-9));
  CHECK(theoretical_mult_entropy(2, EntropyTarget::FactorPair) ==
        doctest::Approx(1.501416428284).epsilon(1e-9));
  CHECK(theoretical_mult_entropy(3, EntropyTarget::FactorPair) ==
        doctest::Approx(1.708448996624).epsilon(1e-9));
}

TEST_CASE("product entropy is zero and factor-pair entropy grows with d") {
  for (int d = 1; d <= 4; ++d) CHECK(theoretical_mult_entropy(d, EntropyTarget::Product) == 0.0);
  double prev = 0;
  for (int d = 1; d <= 3; ++d) {
    const double h = theoretical_mult_entropy(d, EntropyTarget::FactorPair);
    CHECK(h > prev);
    prev = h;
  }
}

TEST_CASE("theoretical entropy rejects out-of-range d") {
  CHECK_THROWS_AS(theoretical_mult_entropy(0, EntropyTarget::FactorPair), std::invalid_argument);
  CHECK_THROWS_AS(theoretical_mult_entropy(-2, EntropyTarget::Product), std::invalid_argument);
  CHECK_THROWS_AS(theoretical_mult_entropy(5, EntropyTarget::FactorPair), std::length_error);
}

TEST_CASE("uniform model rolls out at exactly len times ln 15") {
  Model m = init_model<float>(micro(), 50);
  m.unembed.setZero();
  const std::vector<TokenSequence> prompts{{tok::BOS}, {tok::BOS, 3, 7}};
  const EntropyEstimate est = mc_conditional_entropy(m, prompts, 10, 3, 1.0, 4);
  CHECK(est.mean_nll == doctest::Approx(10 * kLn15).epsilon(1e-12));
  REQUIRE(est.per_prompt.size() == 2);
  for (double v : est.per_prompt) CHECK(v == doctest::Approx(10 * kLn15).epsilon(1e-12));
  CHECK(est.rollout_len == 10);
  CHECK(est.rollouts_per_prompt == 3);
  // EOS suppression cannot bias the scored distribution
  CHECK(std::abs(est.mean_nll / (10 * kLn15) - 1.0) < 0.05);
}

TEST_CASE("near-deterministic model rolls out near zero nll") {
  Model m = init_model<float>(micro(), 51);
  m.unembed *= 3000.0f;
  const std::vector<TokenSequence> prompts{{tok::BOS, 1}};
  const EntropyEstimate est = mc_conditional_entropy(m, prompts, 5, 4, 1.0, 9);
  CHECK(est.mean_nll >= 0.0);
  CHECK(est.mean_nll < 0.05);
}

TEST_CASE("estimate aggregates per-prompt nll and is seed-deterministic") {
  Model m = init_model<float>(micro(), 52);
  std::vector<TokenSequence> prompts;
  for (int i = 0; i < 12; ++i) prompts.push_back({tok::BOS, i % 10, tok::EQ});
  const EntropyEstimate a = mc_conditional_entropy(m, prompts, 8, 2, 1.0, 7);
  const EntropyEstimate b = mc_conditional_entropy(m, prompts, 8, 2, 1.0, 7);
  const EntropyEstimate c = mc_conditional_entropy(m, prompts, 8, 2, 1.0, 8);
  REQUIRE(a.per_prompt.size() == prompts.size());
  double sum = 0;
  for (double v : a.per_prompt) {
    CHECK(v > 0);
    sum += v;
  }
  CHECK(a.mean_nll == doctest::Approx(sum / prompts.size()).epsilon(1e-12));
  CHECK(a.mean_nll == b.mean_nll);
  CHECK(a.per_prompt == b.per_prompt);
  CHECK(a.mean_nll != c.mean_nll);

  // a freshly initialized model stays near the uniform per-token entropy
  CHECK(a.mean_nll == doctest::Approx(8 * kLn15).epsilon(0.15));
}

TEST_CASE("mc entropy argument validation") {
  Model m = init_model<float>(micro(), 53);
  const std::vector<TokenSequence> prompts{{tok::BOS}};
  CHECK_THROWS_AS(mc_conditional_entropy(m, {}, 5, 1, 1.0, 0), std::invalid_argument);
  CHECK_THROWS_AS(mc_conditional_entropy(m, prompts, 0, 1, 1.0, 0), std::invalid_argument);
  CHECK_THROWS_AS(mc_conditional_entropy(m, prompts, 5, 0, 1.0, 0), std::invalid_argument);
  CHECK_THROWS_AS(mc_conditional_entropy(m, prompts, 5, 1, 0.0, 0), std::invalid_argument);
  CHECK_THROWS_AS(mc_conditional_entropy(m, prompts, 16, 1, 1.0, 0), std::length_error);
}
