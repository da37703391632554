#include <doctest.h>

#include <cmath>
#include <limits>

#include "revlab/train.hpp"

using namespace revlab;

namespace {

ModelConfig memo_config() {
  ModelConfig c;
  c.num_layers = 2;
  c.num_heads = 2;
  c.embed_dim = 32;
  c.mlp_dim = 64;
  c.max_seq_len = 16;
  return c;
}

std::vector<TokenSequence> memo_corpus() {
  std::vector<TokenSequence> out;
  for (int i = 0; i < 50; ++i)
    out.push_back(render_instance(i * 2 + 1, 99 - i, 2, Format::ForwardX));
  return out;
}

}  // namespace

TEST_CASE("warmup step count") {
  CHECK(warmup_steps(1000, 0.02) == 20);
  CHECK(warmup_steps(10, 0.02) == 1);  // never zero
  CHECK(warmup_steps(15609, 0.02) == 312);
}

TEST_CASE("lr schedule hits its endpoints and is unimodal") {
  TrainConfig tc;
  const int64_t total = 1000;
  CHECK(lr_at_step(20, total, tc) == doctest::Approx(tc.peak_lr).epsilon(1e-12));
  CHECK(lr_at_step(total, total, tc) == doctest::Approx(tc.min_lr).epsilon(1e-9));
  CHECK(lr_at_step(1, total, tc) == doctest::Approx(tc.peak_lr / 20).epsilon(1e-12));
  for (int64_t s = 2; s <= 20; ++s) CHECK(lr_at_step(s, total, tc) > lr_at_step(s - 1, total, tc));
  for (int64_t s = 21; s <= total; ++s)
    CHECK(lr_at_step(s, total, tc) < lr_at_step(s - 1, total, tc));
  CHECK_THROWS_AS(lr_at_step(0, total, tc), std::out_of_range);
  CHECK_THROWS_AS(lr_at_step(total + 1, total, tc), std::out_of_range);
}

TEST_CASE("trainer memorizes a small corpus") {
  Model model = init_model<float>(memo_config(), 21);
  VectorStream data(memo_corpus());
  TrainConfig tc;
  tc.peak_lr = 5e-3;
  tc.min_lr = 5e-4;
  tc.batch_size = 10;
  tc.num_epochs = 200;

  const TrainResult res = train(model, data, tc);
  CHECK(res.total_steps == 1000);  // 5 steps/epoch
  REQUIRE(res.curve.size() == 1000);
  for (size_t i = 0; i < res.curve.size(); ++i)
    CHECK(res.curve[i].first == static_cast<int64_t>(i) + 1);

  double tail = 0;
  for (size_t i = 900; i < 1000; ++i) tail += res.curve[i].second;
  CHECK(res.final_loss == doctest::Approx(tail / 100).epsilon(1e-12));

  // m is unpredictable from BOS (10 tens digits x 5 units, uniform); every
  // later token is determined by the prefix, so the best reachable mean loss
  // over the 11 scored positions is (ln 10 + ln 5) / 11.
  const double floor = (std::log(10.0) + std::log(5.0)) / 11.0;
  CHECK(res.final_loss == doctest::Approx(floor).epsilon(0.06));
  CHECK(res.final_loss > floor - 0.01);

  // conditioned on the factors, the product and EOS are memorized outright
  const TokenSequence first = memo_corpus().front();
  CHECK(span_logprob(model, first, 7, 12) > 5 * -0.05);
}

TEST_CASE("progress callback sees every step") {
  Model model = init_model<float>(memo_config(), 22);
  VectorStream data(memo_corpus());
  TrainConfig tc;
  tc.batch_size = 25;
  tc.num_epochs = 2;
  int64_t calls = 0, last_step = 0, last_total = 0;
  train(model, data, tc, [&](int64_t step, int64_t total, double loss) {
    ++calls;
    CHECK(step == calls);
    CHECK(std::isfinite(loss));
    last_step = step;
    last_total = total;
  });
  CHECK(calls == 4);
  CHECK(last_step == 4);
  CHECK(last_total == 4);
}

TEST_CASE("non-finite loss aborts with the step index") {
  Model model = init_model<float>(memo_config(), 23);
  model.embed(tok::BOS, 0) = std::numeric_limits<float>::quiet_NaN();
  VectorStream data(memo_corpus());
  TrainConfig tc;
  tc.batch_size = 10;
  CHECK_THROWS_WITH_AS(train(model, data, tc),
                       doctest::Contains("aborted at step 1"), std::runtime_error);
}

TEST_CASE("trainer validates its config") {
  Model model = init_model<float>(memo_config(), 24);
  VectorStream data(memo_corpus());
  TrainConfig tc;
  tc.batch_size = 0;
  CHECK_THROWS_AS(train(model, data, tc), std::invalid_argument);
  tc.batch_size = 8;
  tc.num_epochs = 0;
  CHECK_THROWS_AS(train(model, data, tc), std::invalid_argument);
  VectorStream empty({});
  tc.num_epochs = 1;
  CHECK_THROWS_AS(train(model, empty, tc), std::invalid_argument);
}

TEST_CASE("rendered stream applies the reversal transform") {
  Split a = generate_split({1, Format::ForwardX, 10, 77});
  Split b = generate_split({1, Format::ForwardX, 10, 77});
  RenderedStream fwd(std::move(a.train), false);
  RenderedStream rev(std::move(b.train), true);
  CHECK(fwd.size() == 90);
  CHECK(rev.size() == 90);
  for (int i = 0; i < 90; ++i) {
    auto f = fwd.next();
    auto r = rev.next();
    REQUIRE(f.has_value());
    REQUIRE(r.has_value());
    CHECK(*r == reverse_sequence(*f));
  }
  CHECK_FALSE(fwd.next().has_value());
  CHECK(rev.next() == std::nullopt);
}
