#include "revlab/model.hpp"

#include <cmath>
#include <stdexcept>

#include "revlab/rng.hpp"

namespace revlab {

void validate(const ModelConfig& c) {
  if (c.num_layers < 1 || c.num_heads < 1 || c.embed_dim < 1 || c.mlp_dim < 1)
    throw std::invalid_argument("model dimensions must be positive");
  if (c.embed_dim % c.num_heads != 0)
    throw std::invalid_argument("embed_dim must be divisible by num_heads");
  if ((c.embed_dim / c.num_heads) % 2 != 0)
    throw std::invalid_argument("head_dim must be even for rotary embedding");
  if (c.vocab_size != tok::VOCAB)
    throw std::invalid_argument("vocab_size is fixed at 15");
  if (c.max_seq_len < 2) throw std::invalid_argument("max_seq_len too small");
  if (c.rope_base <= 0) throw std::invalid_argument("rope_base must be positive");
}

int64_t param_count(const ModelConfig& c) {
  int64_t D = c.embed_dim, F = c.mlp_dim, V = c.vocab_size;
  return 2 * V * D + D + c.num_layers * (4 * D * D + 3 * D * F + 2 * D);
}

template <typename S>
std::vector<TensorRef<S>> tensor_refs(ModelT<S>& m) {
  std::vector<TensorRef<S>> refs;
  auto add = [&](const std::string& name, auto& t, bool decay) {
    refs.push_back({name, t.data(), t.rows(), t.cols(), decay});
  };
  add("embed", m.embed, true);
  for (size_t l = 0; l < m.layers.size(); ++l) {
    auto& lay = m.layers[l];
    std::string p = "layers." + std::to_string(l) + ".";
    add(p + "attn_norm", lay.attn_norm, false);
    add(p + "wqkv", lay.wqkv, true);
    add(p + "wo", lay.wo, true);
    add(p + "mlp_norm", lay.mlp_norm, false);
    add(p + "wgu", lay.wgu, true);
    add(p + "wdown", lay.wdown, true);
  }
  add("final_norm", m.final_norm, false);
  add("unembed", m.unembed, true);
  return refs;
}

template <typename S>
std::vector<TensorRef<const S>> tensor_refs(const ModelT<S>& m) {
  auto refs = tensor_refs(const_cast<ModelT<S>&>(m));
  std::vector<TensorRef<const S>> out;
  out.reserve(refs.size());
  for (auto& r : refs) out.push_back({r.name, r.data, r.rows, r.cols, r.decay});
  return out;
}

namespace {

// Deterministic Box-Muller normal, resampled until |z| <= 2.
template <typename S>
S truncated_normal(std::mt19937_64& rng) {
  for (;;) {
    double u1 = 1.0 - uniform01(rng);
    double u2 = uniform01(rng);
    double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    if (std::abs(z) <= 2.0) return static_cast<S>(z);
  }
}

}  // namespace

template <typename S>
ModelT<S> init_model(const ModelConfig& config, uint64_t seed) {
  validate(config);
  ModelT<S> m;
  m.config = config;
  int D = config.embed_dim, F = config.mlp_dim, V = config.vocab_size;
  m.embed.resize(V, D);
  m.layers.resize(config.num_layers);
  for (auto& lay : m.layers) {
    lay.attn_norm = RowX<S>::Ones(D);
    lay.wqkv.resize(D, 3 * D);
    lay.wo.resize(D, D);
    lay.mlp_norm = RowX<S>::Ones(D);
    lay.wgu.resize(D, 2 * F);
    lay.wdown.resize(F, D);
  }
  m.final_norm = RowX<S>::Ones(D);
  m.unembed.resize(D, V);

  auto rng = make_rng(seed, "init");
  const S std_base = static_cast<S>(0.02);
  // residual-output projections get the usual depth-scaled std
  const S std_resid = std_base / static_cast<S>(std::sqrt(2.0 * config.num_layers));
  for (auto& ref : tensor_refs(m)) {
    if (!ref.decay) continue;  // norm gains stay at 1
    bool resid = ref.name.ends_with(".wo") || ref.name.ends_with(".wdown");
    S std = resid ? std_resid : std_base;
    for (int64_t i = 0; i < ref.rows * ref.cols; ++i)
      ref.data[i] = truncated_normal<S>(rng) * std;
  }
  return m;
}

template <typename S>
ModelT<S> zeros_like(const ModelT<S>& model) {
  ModelT<S> z;
  z.config = model.config;
  z.embed = MatX<S>::Zero(model.embed.rows(), model.embed.cols());
  z.layers.resize(model.layers.size());
  for (size_t l = 0; l < model.layers.size(); ++l) {
    const auto& src = model.layers[l];
    auto& dst = z.layers[l];
    dst.attn_norm = RowX<S>::Zero(src.attn_norm.cols());
    dst.wqkv = MatX<S>::Zero(src.wqkv.rows(), src.wqkv.cols());
    dst.wo = MatX<S>::Zero(src.wo.rows(), src.wo.cols());
    dst.mlp_norm = RowX<S>::Zero(src.mlp_norm.cols());
    dst.wgu = MatX<S>::Zero(src.wgu.rows(), src.wgu.cols());
    dst.wdown = MatX<S>::Zero(src.wdown.rows(), src.wdown.cols());
  }
  z.final_norm = RowX<S>::Zero(model.final_norm.cols());
  z.unembed = MatX<S>::Zero(model.unembed.rows(), model.unembed.cols());
  return z;
}

namespace {

constexpr double kRmsEps = 1e-5;

bool same_shape(const ModelConfig& a, const ModelConfig& b) {
  return a.num_layers == b.num_layers && a.num_heads == b.num_heads &&
         a.embed_dim == b.embed_dim && a.mlp_dim == b.mlp_dim &&
         a.vocab_size == b.vocab_size && a.rope_base == b.rope_base;
}

template <typename S>
void ensure_workspace(WorkspaceT<S>& ws, const ModelConfig& c, int B, int T) {
  if (ws.B == B && ws.T == T && same_shape(ws.shaped_for, c)) return;
  ws.shaped_for = c;
  int L = c.num_layers, D = c.embed_dim, F = c.mlp_dim, H = c.num_heads;
  int hd = D / H;
  int BT = B * T;
  ws.B = B;
  ws.T = T;
  ws.x.assign(L + 1, MatX<S>(BT, D));
  ws.xmid.assign(L, MatX<S>(BT, D));
  ws.xn1.assign(L, MatX<S>(BT, D));
  ws.qkv.assign(L, MatX<S>(BT, 3 * D));
  ws.probs.assign(L, MatX<S>(B * H * T, T));
  ws.ctx.assign(L, MatX<S>(BT, D));
  ws.xn2.assign(L, MatX<S>(BT, D));
  ws.gu.assign(L, MatX<S>(BT, 2 * F));
  ws.act.assign(L, MatX<S>(BT, F));
  ws.rms1.assign(L, RowX<S>(BT));
  ws.rms2.assign(L, RowX<S>(BT));
  ws.xnf.resize(BT, D);
  ws.rmsf.resize(BT);
  ws.logits.resize(BT, c.vocab_size);
  ws.d_x.resize(BT, D);
  ws.d_xmid.resize(BT, D);
  ws.d_tmp.resize(BT, D);
  ws.d_xn.resize(BT, D);
  ws.d_qkv.resize(BT, 3 * D);
  ws.d_ctx.resize(BT, D);
  ws.d_gu.resize(BT, 2 * F);
  ws.d_act.resize(BT, F);
  ws.d_s.resize(T, T);
  ws.d_logits.resize(BT, c.vocab_size);
  ws.scratch_f.resize(BT, F);

  ws.rope_cos.resize(T, hd / 2);
  ws.rope_sin.resize(T, hd / 2);
  for (int t = 0; t < T; ++t)
    for (int i = 0; i < hd / 2; ++i) {
      double theta = t * std::pow(static_cast<double>(c.rope_base), -2.0 * i / hd);
      ws.rope_cos(t, i) = static_cast<S>(std::cos(theta));
      ws.rope_sin(t, i) = static_cast<S>(std::sin(theta));
    }
}

// y = (x / rms(x)) .* gain, row-wise; records 1/rms per row.
template <typename S>
void rmsnorm(const MatX<S>& x, const RowX<S>& gain, MatX<S>& y, RowX<S>& inv_rms) {
  const int64_t R = x.rows();
  const S invd = S(1) / static_cast<S>(x.cols());
  for (int64_t r = 0; r < R; ++r) {
    S ir = S(1) / std::sqrt(x.row(r).squaredNorm() * invd + static_cast<S>(kRmsEps));
    inv_rms(r) = ir;
    y.row(r) = (x.row(r) * ir).cwiseProduct(gain);
  }
}

template <typename S>
void rmsnorm_backward(const MatX<S>& x, const RowX<S>& gain, const RowX<S>& inv_rms,
                      const MatX<S>& dy, MatX<S>& dx, RowX<S>& dgain) {
  const int64_t R = x.rows();
  const S invd = S(1) / static_cast<S>(x.cols());
  for (int64_t r = 0; r < R; ++r) {
    S ir = inv_rms(r);
    dgain += dy.row(r).cwiseProduct(x.row(r) * ir);
    auto u = dy.row(r).cwiseProduct(gain);
    S dot = u.dot(x.row(r));
    dx.row(r) = u * ir - x.row(r) * (ir * ir * ir * dot * invd);
  }
}

template <typename S>
void rope_rotate(Eigen::Block<MatX<S>> blk, const MatX<S>& cosv, const MatX<S>& sinv,
                 bool inverse) {
  const int T = static_cast<int>(blk.rows());
  const int half = static_cast<int>(cosv.cols());
  for (int t = 0; t < T; ++t)
    for (int i = 0; i < half; ++i) {
      S c = cosv(t, i), s = inverse ? -sinv(t, i) : sinv(t, i);
      S a = blk(t, 2 * i), b = blk(t, 2 * i + 1);
      blk(t, 2 * i) = a * c - b * s;
      blk(t, 2 * i + 1) = a * s + b * c;
    }
}

template <typename S>
void forward_impl(const ModelT<S>& m, const int32_t* tokens, int B, int T,
                  WorkspaceT<S>& ws) {
  const auto& c = m.config;
  if (T > c.max_seq_len) throw std::length_error("sequence exceeds max_seq_len");
  ensure_workspace(ws, c, B, T);
  const int D = c.embed_dim, F = c.mlp_dim, H = c.num_heads, L = c.num_layers;
  const int hd = D / H;
  const S alpha = S(1) / std::sqrt(static_cast<S>(hd));
  const int BT = B * T;

  for (int r = 0; r < BT; ++r) {
    int32_t t = tokens[r];
    if (t < 0 || t >= c.vocab_size) throw std::invalid_argument("token id out of range");
    ws.x[0].row(r) = m.embed.row(t);
  }

  for (int l = 0; l < L; ++l) {
    const auto& lay = m.layers[l];
    rmsnorm(ws.x[l], lay.attn_norm, ws.xn1[l], ws.rms1[l]);
    ws.qkv[l].noalias() = ws.xn1[l] * lay.wqkv;
    for (int b = 0; b < B; ++b)
      for (int h = 0; h < H; ++h) {
        rope_rotate<S>(ws.qkv[l].block(b * T, h * hd, T, hd), ws.rope_cos, ws.rope_sin,
                       false);
        rope_rotate<S>(ws.qkv[l].block(b * T, D + h * hd, T, hd), ws.rope_cos,
                       ws.rope_sin, false);
      }
    for (int b = 0; b < B; ++b)
      for (int h = 0; h < H; ++h) {
        auto Q = ws.qkv[l].block(b * T, h * hd, T, hd);
        auto K = ws.qkv[l].block(b * T, D + h * hd, T, hd);
        auto V = ws.qkv[l].block(b * T, 2 * D + h * hd, T, hd);
        auto P = ws.probs[l].block((b * H + h) * T, 0, T, T);
        P.noalias() = Q * K.transpose() * alpha;
        for (int i = 0; i < T; ++i) {
          auto row = P.row(i);
          S mx = row.head(i + 1).maxCoeff();
          S sum = 0;
          for (int j = 0; j <= i; ++j) {
            S e = std::exp(row(j) - mx);
            row(j) = e;
            sum += e;
          }
          row.head(i + 1) /= sum;
          row.tail(T - i - 1).setZero();
        }
        ws.ctx[l].block(b * T, h * hd, T, hd).noalias() = P * V;
      }
    ws.xmid[l].noalias() = ws.ctx[l] * lay.wo;
    ws.xmid[l] += ws.x[l];

    rmsnorm(ws.xmid[l], lay.mlp_norm, ws.xn2[l], ws.rms2[l]);
    ws.gu[l].noalias() = ws.xn2[l] * lay.wgu;
    auto gate = ws.gu[l].leftCols(F).array();
    auto up = ws.gu[l].rightCols(F).array();
    ws.act[l] = (gate * gate.logistic() * up).matrix();
    ws.x[l + 1].noalias() = ws.act[l] * lay.wdown;
    ws.x[l + 1] += ws.xmid[l];
  }

  rmsnorm(ws.x[L], m.final_norm, ws.xnf, ws.rmsf);
  ws.logits.noalias() = ws.xnf * m.unembed;
}

// Mean-nll numerator and scored-row gradient; loss in double for stability.
template <typename S>
std::pair<double, int64_t> ce_rows(const MatX<S>& logits, const int32_t* tokens, int B,
                                   int T, MatX<S>* dlogits) {
  const int V = static_cast<int>(logits.cols());
  double loss_sum = 0;
  int64_t scored = 0;
  if (dlogits) dlogits->setZero();
  for (int b = 0; b < B; ++b)
    for (int t = 0; t + 1 < T; ++t) {
      int32_t target = tokens[b * T + t + 1];
      if (target == tok::PAD || tokens[b * T + t] == tok::PAD) continue;
      int64_t r = static_cast<int64_t>(b) * T + t;
      auto row = logits.row(r);
      S mx = row.maxCoeff();
      double sum = 0;
      for (int v = 0; v < V; ++v) sum += std::exp(static_cast<double>(row(v) - mx));
      loss_sum += static_cast<double>(mx) + std::log(sum) - static_cast<double>(row(target));
      ++scored;
      if (dlogits) {
        for (int v = 0; v < V; ++v)
          (*dlogits)(r, v) =
              static_cast<S>(std::exp(static_cast<double>(row(v) - mx)) / sum);
        (*dlogits)(r, target) -= S(1);
      }
    }
  return {loss_sum, scored};
}

}  // namespace

template <typename S>
void forward(const ModelT<S>& model, const int32_t* tokens, int B, int T,
             WorkspaceT<S>& ws) {
  forward_impl(model, tokens, B, T, ws);
}

template <typename S>
S batch_nll(const ModelT<S>& model, const int32_t* tokens, int B, int T,
            WorkspaceT<S>& ws) {
  forward_impl(model, tokens, B, T, ws);
  auto [loss_sum, scored] = ce_rows<S>(ws.logits, tokens, B, T, nullptr);
  if (scored == 0) throw std::invalid_argument("batch has no scored targets");
  return static_cast<S>(loss_sum / scored);
}

template <typename S>
S loss_and_grad(const ModelT<S>& model, const int32_t* tokens, int B, int T,
                ModelT<S>& grad, WorkspaceT<S>& ws) {
  forward_impl(model, tokens, B, T, ws);
  const auto& c = model.config;
  const int D = c.embed_dim, F = c.mlp_dim, H = c.num_heads, L = c.num_layers;
  const int hd = D / H;
  const S alpha = S(1) / std::sqrt(static_cast<S>(hd));
  const int BT = B * T;

  auto [loss_sum, scored] = ce_rows<S>(ws.logits, tokens, B, T, &ws.d_logits);
  if (scored == 0) throw std::invalid_argument("batch has no scored targets");
  double loss = loss_sum / scored;
  if (!std::isfinite(loss)) throw std::runtime_error("non-finite training loss");
  ws.d_logits *= S(1) / static_cast<S>(scored);

  grad.unembed.noalias() = ws.xnf.transpose() * ws.d_logits;
  ws.d_xn.noalias() = ws.d_logits * model.unembed.transpose();
  grad.final_norm.setZero();
  rmsnorm_backward(ws.x[L], model.final_norm, ws.rmsf, ws.d_xn, ws.d_x, grad.final_norm);

  for (int l = L - 1; l >= 0; --l) {
    const auto& lay = model.layers[l];
    auto& g = grad.layers[l];

    // mlp branch; d_x = dL/dx[l+1]
    auto gate = ws.gu[l].leftCols(F).array();
    auto up = ws.gu[l].rightCols(F).array();
    g.wdown.noalias() = ws.act[l].transpose() * ws.d_x;
    ws.d_act.noalias() = ws.d_x * lay.wdown.transpose();
    ws.scratch_f = gate.logistic().matrix();
    {
      auto sg = ws.scratch_f.array();
      auto da = ws.d_act.array();
      ws.d_gu.rightCols(F) = (da * gate * sg).matrix();
      ws.d_gu.leftCols(F) = (da * up * sg * (S(1) + gate * (S(1) - sg))).matrix();
    }
    g.wgu.noalias() = ws.xn2[l].transpose() * ws.d_gu;
    ws.d_xn.noalias() = ws.d_gu * lay.wgu.transpose();
    g.mlp_norm.setZero();
    rmsnorm_backward(ws.xmid[l], lay.mlp_norm, ws.rms2[l], ws.d_xn, ws.d_tmp, g.mlp_norm);
    ws.d_xmid = ws.d_x + ws.d_tmp;  // residual + norm path

    // attention branch; d_xmid = dL/dxmid
    g.wo.noalias() = ws.ctx[l].transpose() * ws.d_xmid;
    ws.d_ctx.noalias() = ws.d_xmid * lay.wo.transpose();
    for (int b = 0; b < B; ++b)
      for (int h = 0; h < H; ++h) {
        auto Q = ws.qkv[l].block(b * T, h * hd, T, hd);
        auto K = ws.qkv[l].block(b * T, D + h * hd, T, hd);
        auto V = ws.qkv[l].block(b * T, 2 * D + h * hd, T, hd);
        auto P = ws.probs[l].block((b * H + h) * T, 0, T, T);
        auto dctx = ws.d_ctx.block(b * T, h * hd, T, hd);
        auto dQ = ws.d_qkv.block(b * T, h * hd, T, hd);
        auto dK = ws.d_qkv.block(b * T, D + h * hd, T, hd);
        auto dV = ws.d_qkv.block(b * T, 2 * D + h * hd, T, hd);
        ws.d_s.noalias() = dctx * V.transpose();  // dP
        dV.noalias() = P.transpose() * dctx;
        for (int i = 0; i < T; ++i) {
          S dot = 0;
          for (int j = 0; j <= i; ++j) dot += P(i, j) * ws.d_s(i, j);
          for (int j = 0; j < T; ++j)
            ws.d_s(i, j) = P(i, j) * (ws.d_s(i, j) - dot) * alpha;
        }
        dQ.noalias() = ws.d_s * K;
        dK.noalias() = ws.d_s.transpose() * Q;
        rope_rotate<S>(dQ, ws.rope_cos, ws.rope_sin, true);
        rope_rotate<S>(dK, ws.rope_cos, ws.rope_sin, true);
      }
    g.wqkv.noalias() = ws.xn1[l].transpose() * ws.d_qkv;
    ws.d_xn.noalias() = ws.d_qkv * lay.wqkv.transpose();
    g.attn_norm.setZero();
    rmsnorm_backward(ws.x[l], lay.attn_norm, ws.rms1[l], ws.d_xn, ws.d_tmp, g.attn_norm);
    ws.d_x = ws.d_xmid + ws.d_tmp;  // dL/dx[l] for the next iteration
  }

  grad.embed.setZero();
  for (int r = 0; r < BT; ++r) grad.embed.row(tokens[r]) += ws.d_x.row(r);
  return static_cast<S>(loss);
}

namespace {

thread_local Workspace g_eval_ws;

std::vector<int32_t> pack_padded(const std::vector<TokenSequence>& seqs, size_t begin,
                                 size_t end, int Tmax) {
  std::vector<int32_t> tokens(static_cast<size_t>(end - begin) * Tmax, tok::PAD);
  for (size_t i = begin; i < end; ++i)
    std::copy(seqs[i].begin(), seqs[i].end(), tokens.begin() + (i - begin) * Tmax);
  return tokens;
}

double row_logprob(const Eigen::Ref<const Eigen::RowVectorXf>& logits, int token) {
  double mx = logits.maxCoeff();
  double sum = 0;
  for (int v = 0; v < logits.cols(); ++v)
    sum += std::exp(static_cast<double>(logits(v)) - mx);
  return static_cast<double>(logits(token)) - mx - std::log(sum);
}

}  // namespace

Eigen::MatrixXf next_token_logprobs(const Model& model, const TokenSequence& input) {
  if (input.empty()) throw std::invalid_argument("empty input");
  const int T = static_cast<int>(input.size());
  forward(model, input.data(), 1, T, g_eval_ws);
  Eigen::MatrixXf out(T, model.config.vocab_size);
  for (int t = 0; t < T; ++t) {
    auto row = g_eval_ws.logits.row(t);
    double mx = row.maxCoeff();
    double sum = 0;
    for (int v = 0; v < model.config.vocab_size; ++v)
      sum += std::exp(static_cast<double>(row(v)) - mx);
    double lse = mx + std::log(sum);
    for (int v = 0; v < model.config.vocab_size; ++v)
      out(t, v) = static_cast<float>(static_cast<double>(row(v)) - lse);
  }
  return out;
}

double span_logprob(const Model& model, const TokenSequence& seq, int begin, int end) {
  std::vector<TokenSequence> seqs{seq};
  return span_logprob_batch(model, seqs, {{begin, end}})[0];
}

std::vector<double> span_logprob_batch(const Model& model,
                                       const std::vector<TokenSequence>& seqs,
                                       const std::vector<std::pair<int, int>>& spans) {
  if (seqs.size() != spans.size()) throw std::invalid_argument("seqs/spans size mismatch");
  std::vector<double> out(seqs.size(), 0.0);
  for (size_t i = 0; i < seqs.size(); ++i) {
    if (seqs[i].empty()) throw std::invalid_argument("empty sequence");
    auto [b, e] = spans[i];
    if (b < 1 || e > static_cast<int>(seqs[i].size()) || b > e)
      throw std::out_of_range("span outside sequence");
  }
  const size_t chunk = 2048;
  for (size_t lo = 0; lo < seqs.size(); lo += chunk) {
    size_t hi = std::min(seqs.size(), lo + chunk);
    int Tmax = 0;
    for (size_t i = lo; i < hi; ++i)
      Tmax = std::max(Tmax, static_cast<int>(seqs[i].size()));
    auto tokens = pack_padded(seqs, lo, hi, Tmax);
    forward(model, tokens.data(), static_cast<int>(hi - lo), Tmax, g_eval_ws);
    for (size_t i = lo; i < hi; ++i) {
      auto [b, e] = spans[i];
      double lp = 0;
      for (int t = b; t < e; ++t) {
        int64_t r = static_cast<int64_t>(i - lo) * Tmax + (t - 1);
        lp += row_logprob(g_eval_ws.logits.row(r), seqs[i][t]);
      }
      out[i] = lp;
    }
  }
  return out;
}

BatchSample sample_batch(const Model& model, const std::vector<TokenSequence>& prefixes,
                         int length, double temperature, bool suppress_eos,
                         uint64_t seed) {
  if (length <= 0) throw std::invalid_argument("length must be positive");
  if (temperature <= 0) throw std::invalid_argument("temperature must be positive");
  for (const auto& p : prefixes)
    if (p.empty() || static_cast<int>(p.size()) + length > model.config.max_seq_len)
      throw std::length_error("prefix+length exceeds max_seq_len");

  BatchSample result;
  result.sequences = prefixes;
  result.logprobs.assign(prefixes.size(), 0.0);
  const int V = model.config.vocab_size;
  const uint64_t base = derive_seed(seed, "sample");

  // per-prefix splitmix streams keyed by global index, so caller-side
  // chunking cannot change the draw for a given prefix
  std::vector<uint64_t> stream(prefixes.size());
  for (size_t i = 0; i < prefixes.size(); ++i) stream[i] = splitmix64(base ^ splitmix64(i));

  const size_t chunk = 2048;
  std::vector<double> probs(V);
  for (size_t lo = 0; lo < prefixes.size(); lo += chunk) {
    size_t hi = std::min(prefixes.size(), lo + chunk);
    for (int step = 0; step < length; ++step) {
      int Tmax = 0;
      for (size_t i = lo; i < hi; ++i)
        Tmax = std::max(Tmax, static_cast<int>(result.sequences[i].size()));
      auto tokens = pack_padded(result.sequences, lo, hi, Tmax);
      forward(model, tokens.data(), static_cast<int>(hi - lo), Tmax, g_eval_ws);
      for (size_t i = lo; i < hi; ++i) {
        int64_t r = static_cast<int64_t>(i - lo) * Tmax +
                    (static_cast<int64_t>(result.sequences[i].size()) - 1);
        auto logits = g_eval_ws.logits.row(r);
        double mx = logits.maxCoeff();
        double lse_sum = 0;
        double psum = 0;
        for (int v = 0; v < V; ++v) {
          double z = static_cast<double>(logits(v)) - mx;
          lse_sum += std::exp(z);
          if (suppress_eos && v == tok::EOS) {
            probs[v] = 0;
          } else {
            probs[v] = std::exp(z / temperature);
            psum += probs[v];
          }
        }
        stream[i] = splitmix64(stream[i]);
        double u = static_cast<double>(stream[i] >> 11) * 0x1.0p-53 * psum;
        int choice = -1;
        double acc = 0;
        for (int v = 0; v < V; ++v) {
          if (probs[v] <= 0) continue;
          acc += probs[v];
          choice = v;
          if (u < acc) break;
        }
        if (choice < 0) {
          // every unsuppressed probability underflowed; take the best one
          for (int v = 0; v < V; ++v)
            if (!(suppress_eos && v == tok::EOS) &&
                (choice < 0 || logits(v) > logits(choice)))
              choice = v;
        }
        result.sequences[i].push_back(choice);
        // nll contribution under the unsuppressed temperature-1 distribution
        result.logprobs[i] +=
            static_cast<double>(logits(choice)) - mx - std::log(lse_sum);
      }
    }
  }
  return result;
}

TokenSequence sample(const Model& model, const TokenSequence& prefix, int length,
                     double temperature, bool suppress_eos, uint64_t seed) {
  std::vector<TokenSequence> prefixes{prefix};
  return sample_batch(model, prefixes, length, temperature, suppress_eos, seed)
      .sequences[0];
}

template std::vector<TensorRef<float>> tensor_refs(ModelT<float>&);
template std::vector<TensorRef<double>> tensor_refs(ModelT<double>&);
template std::vector<TensorRef<const float>> tensor_refs(const ModelT<float>&);
template std::vector<TensorRef<const double>> tensor_refs(const ModelT<double>&);
template ModelT<float> init_model(const ModelConfig&, uint64_t);
template ModelT<double> init_model(const ModelConfig&, uint64_t);
template ModelT<float> zeros_like(const ModelT<float>&);
template ModelT<double> zeros_like(const ModelT<double>&);
template void forward(const ModelT<float>&, const int32_t*, int, int, WorkspaceT<float>&);
template void forward(const ModelT<double>&, const int32_t*, int, int,
                      WorkspaceT<double>&);
template float loss_and_grad(const ModelT<float>&, const int32_t*, int, int,
                             ModelT<float>&, WorkspaceT<float>&);
template double loss_and_grad(const ModelT<double>&, const int32_t*, int, int,
                              ModelT<double>&, WorkspaceT<double>&);
template float batch_nll(const ModelT<float>&, const int32_t*, int, int,
                         WorkspaceT<float>&);
template double batch_nll(const ModelT<double>&, const int32_t*, int, int,
                          WorkspaceT<double>&);

}  // namespace revlab
