#include "revlab/train.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace revlab {

std::optional<TokenSequence> RenderedStream::next() {
  auto inst = stream_.next();
  if (!inst) return std::nullopt;
  TokenSequence seq = render_instance(inst->m, inst->n, inst->d, inst->format);
  return reverse_ ? reverse_sequence(seq) : seq;
}

int64_t warmup_steps(int64_t total_steps, double warmup_fraction) {
  return std::max<int64_t>(1, std::llround(warmup_fraction * total_steps));
}

double lr_at_step(int64_t step, int64_t total_steps, const TrainConfig& tc) {
  if (step < 1 || step > total_steps) throw std::out_of_range("step outside schedule");
  int64_t warm = warmup_steps(total_steps, tc.warmup_fraction);
  if (step <= warm) return tc.peak_lr * static_cast<double>(step) / warm;
  if (total_steps == warm) return tc.peak_lr;
  double frac = static_cast<double>(step - warm) / static_cast<double>(total_steps - warm);
  return tc.min_lr + 0.5 * (tc.peak_lr - tc.min_lr) * (1.0 + std::cos(M_PI * frac));
}

TrainResult train(Model& model, SequenceStream& data, const TrainConfig& tc,
                  const ProgressFn& progress) {
  if (tc.batch_size < 1) throw std::invalid_argument("batch_size must be positive");
  if (tc.num_epochs < 1) throw std::invalid_argument("num_epochs must be positive");
  int64_t per_epoch = (data.size() + tc.batch_size - 1) / tc.batch_size;
  int64_t total_steps = per_epoch * tc.num_epochs;
  if (total_steps == 0) throw std::invalid_argument("empty dataset");

  Model grad = zeros_like(model);
  Model m1 = zeros_like(model);
  Model m2 = zeros_like(model);
  auto prefs = tensor_refs(model);
  auto grefs = tensor_refs(grad);
  auto m1refs = tensor_refs(m1);
  auto m2refs = tensor_refs(m2);
  Workspace ws;

  const double eps = 1e-8;
  TrainResult result;
  result.total_steps = total_steps;
  result.curve.reserve(total_steps);

  std::vector<TokenSequence> batch;
  std::vector<int32_t> tokens;
  int64_t step = 0;
  for (int epoch = 0; epoch < tc.num_epochs; ++epoch) {
    data.reset();
    for (;;) {
      batch.clear();
      while (static_cast<int>(batch.size()) < tc.batch_size) {
        auto seq = data.next();
        if (!seq) break;
        batch.push_back(std::move(*seq));
      }
      if (batch.empty()) break;
      ++step;
      int B = static_cast<int>(batch.size());
      int T = 0;
      for (const auto& s : batch) T = std::max(T, static_cast<int>(s.size()));
      tokens.assign(static_cast<size_t>(B) * T, tok::PAD);
      for (int b = 0; b < B; ++b)
        std::copy(batch[b].begin(), batch[b].end(), tokens.begin() + static_cast<size_t>(b) * T);

      double loss;
      try {
        loss = loss_and_grad(model, tokens.data(), B, T, grad, ws);
      } catch (const std::runtime_error& e) {
        throw std::runtime_error("training aborted at step " + std::to_string(step) +
                                 ", batch " + std::to_string(step - 1) + ": " + e.what());
      }
      result.curve.emplace_back(step, loss);

      if (tc.grad_clip > 0) {
        double sq = 0;
        for (auto& g : grefs)
          sq += Eigen::Map<Eigen::ArrayXf>(g.data, g.rows * g.cols).cast<double>().square().sum();
        double norm = std::sqrt(sq);
        if (norm > tc.grad_clip) {
          float scale = static_cast<float>(tc.grad_clip / norm);
          for (auto& g : grefs)
            Eigen::Map<Eigen::ArrayXf>(g.data, g.rows * g.cols) *= scale;
        }
      }

      double lr = lr_at_step(step, total_steps, tc);
      double bc1 = 1.0 - std::pow(tc.beta1, static_cast<double>(step));
      double bc2 = 1.0 - std::pow(tc.beta2, static_cast<double>(step));
      for (size_t i = 0; i < prefs.size(); ++i) {
        int64_t count = prefs[i].rows * prefs[i].cols;
        Eigen::Map<Eigen::ArrayXf> p(prefs[i].data, count);
        Eigen::Map<Eigen::ArrayXf> g(grefs[i].data, count);
        Eigen::Map<Eigen::ArrayXf> m(m1refs[i].data, count);
        Eigen::Map<Eigen::ArrayXf> v(m2refs[i].data, count);
        m = static_cast<float>(tc.beta1) * m + static_cast<float>(1 - tc.beta1) * g;
        v = static_cast<float>(tc.beta2) * v + static_cast<float>(1 - tc.beta2) * g.square();
        float wd = prefs[i].decay ? static_cast<float>(tc.weight_decay) : 0.0f;
        p -= static_cast<float>(lr) *
             ((m / static_cast<float>(bc1)) /
                  ((v / static_cast<float>(bc2)).sqrt() + static_cast<float>(eps)) +
              wd * p);
      }
      if (progress) progress(step, total_steps, loss);
    }
  }

  size_t tail = std::min<size_t>(100, result.curve.size());
  double sum = 0;
  for (size_t i = result.curve.size() - tail; i < result.curve.size(); ++i)
    sum += result.curve[i].second;
  result.final_loss = sum / tail;
  return result;
}

}  // namespace revlab
