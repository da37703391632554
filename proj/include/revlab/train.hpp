// Single-epoch-friendly trainer: AdamW with linear warmup into cosine decay.
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "revlab/datagen.hpp"
#include "revlab/model.hpp"

namespace revlab {

struct TrainConfig {
  double peak_lr = 3e-4;
  double min_lr = 3e-5;
  double warmup_fraction = 0.02;
  int batch_size = 64;
  int num_epochs = 1;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double weight_decay = 0.1;
  double grad_clip = 1.0;  // <= 0 disables clipping
  uint64_t seed = 0;
};

int64_t warmup_steps(int64_t total_steps, double warmup_fraction);

// step is 1-based; lr equals peak_lr at the last warmup step and min_lr at
// step == total_steps.
double lr_at_step(int64_t step, int64_t total_steps, const TrainConfig& tc);

// Training consumes an upstream-ordered stream; shuffling happens upstream.
struct SequenceStream {
  virtual ~SequenceStream() = default;
  virtual std::optional<TokenSequence> next() = 0;
  virtual void reset() = 0;
  virtual int64_t size() const = 0;
};

class VectorStream final : public SequenceStream {
 public:
  explicit VectorStream(std::vector<TokenSequence> data) : data_(std::move(data)) {}
  std::optional<TokenSequence> next() override {
    if (at_ >= data_.size()) return std::nullopt;
    return data_[at_++];
  }
  void reset() override { at_ = 0; }
  int64_t size() const override { return static_cast<int64_t>(data_.size()); }

 private:
  std::vector<TokenSequence> data_;
  size_t at_ = 0;
};

// Renders arithmetic instances on the fly; reverse applies the R2L transform.
class RenderedStream final : public SequenceStream {
 public:
  RenderedStream(TrainStream stream, bool reverse)
      : stream_(std::move(stream)), reverse_(reverse) {}
  std::optional<TokenSequence> next() override;
  void reset() override { stream_.reset(); }
  int64_t size() const override { return stream_.size(); }

 private:
  TrainStream stream_;
  bool reverse_;
};

struct TrainResult {
  std::vector<std::pair<int64_t, double>> curve;  // (step, batch mean nll)
  double final_loss = 0;  // mean over the trailing 100 steps
  int64_t total_steps = 0;
};

using ProgressFn = std::function<void(int64_t step, int64_t total, double loss)>;

TrainResult train(Model& model, SequenceStream& data, const TrainConfig& tc,
                  const ProgressFn& progress = {});

}  // namespace revlab
