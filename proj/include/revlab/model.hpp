// Tiny decoder-only autoregressive model: pre-RMSNorm blocks with rotary
// attention and a gated-SiLU MLP. One code path serves L2R and R2L models;
// direction lives entirely in the data transform. Templated on the scalar so
// the gradient check can run the whole pipeline in double.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "revlab/tokens.hpp"

namespace revlab {

struct ModelConfig {
  int num_layers = 4;
  int num_heads = 4;
  int embed_dim = 192;
  int mlp_dim = 768;
  int vocab_size = tok::VOCAB;
  int max_seq_len = 16;
  float rope_base = 10000.0f;
};

void validate(const ModelConfig& config);  // throws std::invalid_argument
int64_t param_count(const ModelConfig& config);

template <typename S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using RowX = Eigen::Matrix<S, 1, Eigen::Dynamic>;

template <typename S>
struct ModelT {
  struct Layer {
    RowX<S> attn_norm;  // [D]
    MatX<S> wqkv;       // [D, 3D], fused q|k|v
    MatX<S> wo;         // [D, D]
    RowX<S> mlp_norm;   // [D]
    MatX<S> wgu;        // [D, 2F], fused gate|up
    MatX<S> wdown;      // [F, D]
  };
  ModelConfig config;
  MatX<S> embed;      // [V, D]
  std::vector<Layer> layers;
  RowX<S> final_norm;  // [D]
  MatX<S> unembed;     // [D, V]
};

using Model = ModelT<float>;

template <typename S>
struct TensorRef {
  std::string name;
  S* data;
  int64_t rows, cols;
  bool decay;  // weight decay applies (2D projections only)
};

// Stable tensor directory; the checkpoint layout and the optimizer both
// iterate in this order.
template <typename S>
std::vector<TensorRef<S>> tensor_refs(ModelT<S>& model);
template <typename S>
std::vector<TensorRef<const S>> tensor_refs(const ModelT<S>& model);

template <typename S>
ModelT<S> init_model(const ModelConfig& config, uint64_t seed);

// Zero-shaped clone used as a gradient accumulator.
template <typename S>
ModelT<S> zeros_like(const ModelT<S>& model);

// Per-layer activation caches for one forward/backward pass over a [B, T]
// token block. Reused across steps; resized on demand.
template <typename S>
struct WorkspaceT {
  int B = 0, T = 0;
  ModelConfig shaped_for{0, 0, 0, 0, 0, 0, 0};  // which model the caches fit
  std::vector<MatX<S>> x;     // layer inputs, num_layers + 1 entries
  std::vector<MatX<S>> xmid;  // post-attention residual per layer
  std::vector<MatX<S>> xn1, qkv, probs, ctx, xn2, gu, act;
  std::vector<RowX<S>> rms1, rms2;  // 1/rms per row
  MatX<S> xnf;
  RowX<S> rmsf;
  MatX<S> logits;
  MatX<S> rope_cos, rope_sin;  // [T, head_dim/2]
  // backward scratch
  MatX<S> d_x, d_xmid, d_tmp, d_xn, d_qkv, d_ctx, d_gu, d_act, d_s, d_logits,
      scratch_f;
};
using Workspace = WorkspaceT<float>;

// Fills ws.logits with [B*T, V] raw logits; row b*T+t sees tokens[b][<=t].
// PAD rows are computed but meaningless; callers mask them out.
template <typename S>
void forward(const ModelT<S>& model, const int32_t* tokens, int B, int T,
             WorkspaceT<S>& ws);

// Mean next-token cross-entropy over scored targets (targets[b][t] =
// tokens[b][t+1], skipping PAD targets) plus full parameter gradients.
// Overwrites grad. Throws on non-finite loss.
template <typename S>
S loss_and_grad(const ModelT<S>& model, const int32_t* tokens, int B, int T,
                ModelT<S>& grad, WorkspaceT<S>& ws);

// Forward-only mean nll (validation / loss probes).
template <typename S>
S batch_nll(const ModelT<S>& model, const int32_t* tokens, int B, int T,
            WorkspaceT<S>& ws);

// One row per input position, V columns, rows log-normalized.
Eigen::MatrixXf next_token_logprobs(const Model& model, const TokenSequence& input);

// Sum of log p(seq[t] | seq[<t]) for t in [begin, end); begin >= 1.
double span_logprob(const Model& model, const TokenSequence& seq, int begin, int end);

// Batched variant; spans.size() == seqs.size(). Sequences may differ in
// length; internally right-padded per chunk.
std::vector<double> span_logprob_batch(const Model& model,
                                       const std::vector<TokenSequence>& seqs,
                                       const std::vector<std::pair<int, int>>& spans);

// Ancestral sampling at the given temperature from the full softmax; when
// suppress_eos is set the EOS logit is masked to -inf. Appends exactly
// `length` tokens to the prefix.
TokenSequence sample(const Model& model, const TokenSequence& prefix, int length,
                     double temperature, bool suppress_eos, uint64_t seed);

struct BatchSample {
  std::vector<TokenSequence> sequences;
  // Sum over appended tokens of log p(token | prefix so far) under the
  // unsuppressed model distribution.
  std::vector<double> logprobs;
};

// Per-prefix RNG streams are derived from (seed, prefix index), so results
// do not depend on how callers chunk the batch. Prefixes may differ in length.
BatchSample sample_batch(const Model& model, const std::vector<TokenSequence>& prefixes,
                         int length, double temperature, bool suppress_eos,
                         uint64_t seed);

}  // namespace revlab
