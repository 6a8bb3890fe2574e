#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "hcln/tensor.hpp"

namespace hcln {

enum class PosKind { learned, rotary };
enum class NormKind { layernorm, rmsnorm };
enum class Mode { train, eval };

constexpr double kNormEps = 1e-5;

// Decoder-only transformer hyperparameters. d_model == n_heads * d_head.
// rotary_fold > 1 marks a head-dim-expanded model whose rotary frequency
// ladder is the source model's ladder replicated per duplicated sub-block.
struct ModelConfig {
  Index n_layers = 2;
  Index n_heads = 4;
  Index d_model = 32;
  Index d_head = 8;
  Index d_ffn = 64;
  Index vocab_size = 256;
  Index max_seq = 128;
  PosKind pos_kind = PosKind::learned;
  NormKind norm_kind = NormKind::layernorm;
  bool has_bias = true;
  double dropout_p = 0.0;
  bool tied_unembedding = false;
  Index rotary_fold = 1;

  void validate() const {
    HCLN_CHECK(n_layers >= 1 && n_heads >= 1 && d_model >= 1 && d_head >= 1 &&
                   d_ffn >= 1 && vocab_size >= 1 && max_seq >= 1,
               "ModelConfig: all counts must be >= 1");
    HCLN_CHECK(d_model == n_heads * d_head,
               "ModelConfig: d_model " << d_model << " != n_heads*d_head "
                                       << n_heads * d_head);
    HCLN_CHECK(dropout_p >= 0.0 && dropout_p < 1.0, "ModelConfig: dropout_p in [0,1)");
    HCLN_CHECK(rotary_fold >= 1, "ModelConfig: rotary_fold >= 1");
    if (pos_kind == PosKind::rotary)
      HCLN_CHECK(d_head % (2 * rotary_fold) == 0,
                 "ModelConfig: d_head must be divisible by 2*rotary_fold");
  }

  bool operator==(const ModelConfig&) const = default;
};

// Named architecture presets. The large ones ship as configs only; they are
// not trained here.
inline ModelConfig preset(const std::string& name) {
  auto make = [](Index L, Index H, Index d, Index dh, Index f, Index v, Index seq,
                 PosKind pk, NormKind nk, bool bias, bool tied) {
    ModelConfig c;
    c.n_layers = L;
    c.n_heads = H;
    c.d_model = d;
    c.d_head = dh;
    c.d_ffn = f;
    c.vocab_size = v;
    c.max_seq = seq;
    c.pos_kind = pk;
    c.norm_kind = nk;
    c.has_bias = bias;
    c.tied_unembedding = tied;
    return c;
  };
  if (name == "tiny")
    return make(2, 2, 8, 4, 16, 11, 16, PosKind::learned, NormKind::layernorm, true, false);
  if (name == "micro")
    return make(2, 4, 32, 8, 64, 256, 128, PosKind::learned, NormKind::layernorm, true, false);
  if (name == "micro-byte")
    return make(2, 4, 32, 8, 64, 257, 256, PosKind::learned, NormKind::layernorm, true, false);
  if (name == "opt-350m")
    return make(24, 16, 1024, 64, 4096, 50272, 2048, PosKind::learned, NormKind::layernorm, true, true);
  if (name == "opt-1.3b")
    return make(24, 32, 2048, 64, 8192, 50272, 2048, PosKind::learned, NormKind::layernorm, true, true);
  if (name == "pythia-410m")
    return make(24, 16, 1024, 64, 4096, 50304, 2048, PosKind::rotary, NormKind::layernorm, true, false);
  if (name == "pythia-1.4b")
    return make(24, 32, 2048, 64, 8192, 50304, 2048, PosKind::rotary, NormKind::layernorm, true, false);
  if (name == "olmo-1b")
    return make(16, 16, 2048, 128, 16384, 50304, 2048, PosKind::rotary, NormKind::rmsnorm, false, false);
  if (name == "olmo-2.9b")
    return make(16, 32, 4096, 128, 16384, 50304, 2048, PosKind::rotary, NormKind::rmsnorm, false, false);
  throw ContractViolation("unknown preset: " + name);
}

inline std::vector<std::string> preset_names() {
  return {"tiny", "micro", "micro-byte", "opt-350m", "opt-1.3b",
          "pythia-410m", "pythia-1.4b", "olmo-1b", "olmo-2.9b"};
}

template <class S>
struct BlockParams {
  Mat<S> attn_gamma, attn_beta;
  Mat<S> wq, bq, wk, bk, wv, bv, wo, bo;
  Mat<S> ffn_gamma, ffn_beta;
  Mat<S> w_up, b_up, w_down, b_down;
};

template <class S>
struct TransformerParams {
  Mat<S> embedding;      // [vocab x d_model]
  Mat<S> pos_embedding;  // [max_seq x d_model], learned-absolute only
  std::vector<BlockParams<S>> blocks;
  Mat<S> final_gamma, final_beta;
  Mat<S> unembedding;  // [vocab x d_model], absent when tied
};

enum class TensorKind { weight, bias, norm };

// Single source of truth for tensor names, shapes and iteration order.
inline void enumerate_tensor_shapes(
    const ModelConfig& c,
    const std::function<void(const std::string&, Index, Index, TensorKind)>& fn) {
  const bool ln_beta = c.norm_kind == NormKind::layernorm && c.has_bias;
  fn("embedding", c.vocab_size, c.d_model, TensorKind::weight);
  if (c.pos_kind == PosKind::learned)
    fn("pos_embedding", c.max_seq, c.d_model, TensorKind::weight);
  for (Index i = 0; i < c.n_layers; ++i) {
    std::string p = "blocks." + std::to_string(i) + ".";
    fn(p + "attn_norm.gamma", 1, c.d_model, TensorKind::norm);
    if (ln_beta) fn(p + "attn_norm.beta", 1, c.d_model, TensorKind::norm);
    fn(p + "attn.wq", c.d_model, c.d_model, TensorKind::weight);
    if (c.has_bias) fn(p + "attn.bq", 1, c.d_model, TensorKind::bias);
    fn(p + "attn.wk", c.d_model, c.d_model, TensorKind::weight);
    if (c.has_bias) fn(p + "attn.bk", 1, c.d_model, TensorKind::bias);
    fn(p + "attn.wv", c.d_model, c.d_model, TensorKind::weight);
    if (c.has_bias) fn(p + "attn.bv", 1, c.d_model, TensorKind::bias);
    fn(p + "attn.wo", c.d_model, c.d_model, TensorKind::weight);
    if (c.has_bias) fn(p + "attn.bo", 1, c.d_model, TensorKind::bias);
    fn(p + "ffn_norm.gamma", 1, c.d_model, TensorKind::norm);
    if (ln_beta) fn(p + "ffn_norm.beta", 1, c.d_model, TensorKind::norm);
    fn(p + "ffn.w_up", c.d_ffn, c.d_model, TensorKind::weight);
    if (c.has_bias) fn(p + "ffn.b_up", 1, c.d_ffn, TensorKind::bias);
    fn(p + "ffn.w_down", c.d_model, c.d_ffn, TensorKind::weight);
    if (c.has_bias) fn(p + "ffn.b_down", 1, c.d_model, TensorKind::bias);
  }
  fn("final_norm.gamma", 1, c.d_model, TensorKind::norm);
  if (ln_beta) fn("final_norm.beta", 1, c.d_model, TensorKind::norm);
  if (!c.tied_unembedding) fn("unembedding", c.vocab_size, c.d_model, TensorKind::weight);
}

namespace detail {

template <class P, class M>
M* tensor_by_name(P& params, const std::string& name) {
  if (name == "embedding") return &params.embedding;
  if (name == "pos_embedding") return &params.pos_embedding;
  if (name == "final_norm.gamma") return &params.final_gamma;
  if (name == "final_norm.beta") return &params.final_beta;
  if (name == "unembedding") return &params.unembedding;
  if (name.rfind("blocks.", 0) == 0) {
    size_t dot = name.find('.', 7);
    size_t layer = std::stoul(name.substr(7, dot - 7));
    if (layer >= params.blocks.size()) return nullptr;
    auto& b = params.blocks[layer];
    std::string rest = name.substr(dot + 1);
    if (rest == "attn_norm.gamma") return &b.attn_gamma;
    if (rest == "attn_norm.beta") return &b.attn_beta;
    if (rest == "attn.wq") return &b.wq;
    if (rest == "attn.bq") return &b.bq;
    if (rest == "attn.wk") return &b.wk;
    if (rest == "attn.bk") return &b.bk;
    if (rest == "attn.wv") return &b.wv;
    if (rest == "attn.bv") return &b.bv;
    if (rest == "attn.wo") return &b.wo;
    if (rest == "attn.bo") return &b.bo;
    if (rest == "ffn_norm.gamma") return &b.ffn_gamma;
    if (rest == "ffn_norm.beta") return &b.ffn_beta;
    if (rest == "ffn.w_up") return &b.w_up;
    if (rest == "ffn.b_up") return &b.b_up;
    if (rest == "ffn.w_down") return &b.w_down;
    if (rest == "ffn.b_down") return &b.b_down;
  }
  return nullptr;
}

}  // namespace detail

template <class S>
Mat<S>* find_tensor(TransformerParams<S>& p, const std::string& name) {
  return detail::tensor_by_name<TransformerParams<S>, Mat<S>>(p, name);
}
template <class S>
const Mat<S>* find_tensor(const TransformerParams<S>& p, const std::string& name) {
  return detail::tensor_by_name<const TransformerParams<S>, const Mat<S>>(p, name);
}

// Visits every existing tensor in canonical order.
template <class S, class Fn>
void for_each_tensor(TransformerParams<S>& p, const ModelConfig& c, Fn&& fn) {
  p.blocks.resize(static_cast<size_t>(c.n_layers));
  enumerate_tensor_shapes(c, [&](const std::string& name, Index r, Index cc, TensorKind k) {
    Mat<S>* m = find_tensor(p, name);
    HCLN_CHECK(m != nullptr, "for_each_tensor: unresolved " << name);
    fn(name, *m, r, cc, k);
  });
}

template <class S, class Fn>
void for_each_tensor(const TransformerParams<S>& p, const ModelConfig& c, Fn&& fn) {
  HCLN_CHECK(p.blocks.size() == static_cast<size_t>(c.n_layers),
             "for_each_tensor: layer count mismatch");
  enumerate_tensor_shapes(c, [&](const std::string& name, Index r, Index cc, TensorKind k) {
    const Mat<S>* m = find_tensor(p, name);
    HCLN_CHECK(m != nullptr, "for_each_tensor: unresolved " << name);
    fn(name, *m, r, cc, k);
  });
}

template <class S>
TransformerParams<S> zero_params(const ModelConfig& c) {
  TransformerParams<S> p;
  for_each_tensor(p, c, [](const std::string&, Mat<S>& m, Index r, Index cc, TensorKind) {
    m.setZero(r, cc);
  });
  return p;
}

template <class To, class From>
TransformerParams<To> cast_params(const TransformerParams<From>& p, const ModelConfig& c) {
  TransformerParams<To> out = zero_params<To>(c);
  for_each_tensor(out, c, [&](const std::string& name, Mat<To>& m, Index, Index, TensorKind) {
    m = find_tensor(p, name)->template cast<To>();
  });
  return out;
}

// Glorot-style init: weights ~ N(0, sqrt(2/(fan_in+fan_out))), biases and
// norm betas zero, norm gammas one. Draw order is the canonical tensor order.
template <class S>
TransformerParams<S> init_random(const ModelConfig& c, Rng& rng) {
  c.validate();
  TransformerParams<S> p;
  for_each_tensor(p, c, [&](const std::string&, Mat<S>& m, Index r, Index cc, TensorKind k) {
    switch (k) {
      case TensorKind::weight:
        m = gaussian<S>(rng, r, cc, std::sqrt(2.0 / static_cast<double>(r + cc)));
        break;
      case TensorKind::bias:
        m.setZero(r, cc);
        break;
      case TensorKind::norm:
        m.setConstant(r, cc, S(1));
        break;
    }
  });
  // beta tensors are norms initialized to zero, not one
  enumerate_tensor_shapes(c, [&](const std::string& name, Index, Index, TensorKind) {
    if (name.size() > 5 && name.compare(name.size() - 5, 5, ".beta") == 0)
      find_tensor(p, name)->setZero();
  });
  return p;
}

// ---------------------------------------------------------------------------
// Rotary position encoding. The rotation is computed with the source head
// dimension d_head/fold and its frequency ladder, applied identically to each
// of the fold duplicated sub-blocks; fold == 1 is standard rotary with
// adjacent-pair layout.
// ---------------------------------------------------------------------------

template <class S>
Mat<S> rotary_apply(const Mat<S>& x, const std::vector<Index>& positions, Index fold) {
  const Index t_len = x.rows(), d = x.cols();
  HCLN_CHECK(fold >= 1 && d % (2 * fold) == 0,
             "rotary_apply: head dim " << d << " not divisible by 2*fold " << 2 * fold);
  HCLN_CHECK(static_cast<Index>(positions.size()) == t_len,
             "rotary_apply: positions size mismatch");
  const Index sub = d / fold;
  Mat<S> out(t_len, d);
  for (Index t = 0; t < t_len; ++t) {
    const double pos = static_cast<double>(positions[static_cast<size_t>(t)]);
    for (Index i = 0; i < sub / 2; ++i) {
      const double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(sub));
      const double theta = pos * freq;
      const double ct = std::cos(theta), st = std::sin(theta);
      for (Index b = 0; b < fold; ++b) {
        const Index j = b * sub + 2 * i;
        const double x0 = static_cast<double>(x(t, j));
        const double x1 = static_cast<double>(x(t, j + 1));
        out(t, j) = static_cast<S>(x0 * ct - x1 * st);
        out(t, j + 1) = static_cast<S>(x0 * st + x1 * ct);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Forward pass. Pre-norm blocks: x += Attn(Norm(x)); x += FFN(Norm(x));
// causal masking, scores scaled by 1/sqrt(d_head). Dropout (train mode only)
// acts on attention probabilities and on the FFN output.
// ---------------------------------------------------------------------------

template <class S>
struct ForwardTrace {
  Mat<S> logits;  // [T x vocab]
  std::vector<std::pair<std::string, Mat<S>>> hidden;
  std::vector<Mat<S>> attn_probs;  // per (layer, head) when captured
};

struct ForwardOptions {
  bool capture_hidden = true;
  bool capture_attn = false;
};

namespace detail {

template <class S>
void norm_rows(const ModelConfig& c, const Mat<S>& x, const Mat<S>& gamma,
               const Mat<S>& beta, Mat<S>& out, std::vector<NormStats>* stats) {
  if (c.norm_kind == NormKind::layernorm) {
    const Mat<S>* b = beta.size() > 0 ? &beta : nullptr;
    layer_norm_rows_into(x, gamma, b, kNormEps, out, stats);
  } else {
    rms_norm_rows_into(x, gamma, kNormEps, out, stats);
  }
}

template <class S>
void add_row_bias(Mat<S>& x, const Mat<S>& b) {
  if (b.size() == 0) return;
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < x.cols(); ++j) x(i, j) += b(0, j);
}

// In-place inverted dropout; draws one uniform per entry in row-major order.
template <class S>
void dropout_inplace(Mat<S>& x, double p, Rng& rng) {
  const S scale = static_cast<S>(1.0 / (1.0 - p));
  S* d = x.data();
  for (Index i = 0; i < x.size(); ++i)
    d[i] = rng.uniform() < p ? S(0) : d[i] * scale;
}

}  // namespace detail

template <class S>
ForwardTrace<S> forward(const TransformerParams<S>& params, const ModelConfig& c,
                        const std::vector<int32_t>& tokens, Mode mode, Rng* rng = nullptr,
                        const ForwardOptions& opts = {}) {
  c.validate();
  const Index t_len = static_cast<Index>(tokens.size());
  HCLN_CHECK(t_len >= 1 && t_len <= c.max_seq,
             "forward: sequence length " << t_len << " out of range [1," << c.max_seq << "]");
  for (int32_t t : tokens)
    HCLN_CHECK(t >= 0 && t < c.vocab_size, "forward: token id " << t << " out of range");
  const bool use_dropout = (mode == Mode::train) && c.dropout_p > 0.0;
  if (use_dropout) HCLN_CHECK(rng != nullptr, "forward: train mode with dropout needs an rng");

  ForwardTrace<S> trace;
  auto snap = [&](const std::string& name, const Mat<S>& x) {
    if (opts.capture_hidden) trace.hidden.emplace_back(name, x);
  };

  Mat<S> x(t_len, c.d_model);
  for (Index t = 0; t < t_len; ++t) {
    x.row(t) = params.embedding.row(tokens[static_cast<size_t>(t)]);
    if (c.pos_kind == PosKind::learned) x.row(t) += params.pos_embedding.row(t);
  }
  snap("embed", x);

  std::vector<Index> positions(static_cast<size_t>(t_len));
  for (Index t = 0; t < t_len; ++t) positions[static_cast<size_t>(t)] = t;

  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(c.d_head));
  Mat<S> n1, q, k, v, a, o, n2, u, g, f, tmp;
  for (Index layer = 0; layer < c.n_layers; ++layer) {
    const auto& blk = params.blocks[static_cast<size_t>(layer)];
    detail::norm_rows(c, x, blk.attn_gamma, blk.attn_beta, n1, nullptr);
    tmp = transpose(blk.wq);
    matmul_into(n1, tmp, q);
    detail::add_row_bias(q, blk.bq);
    tmp = transpose(blk.wk);
    matmul_into(n1, tmp, k);
    detail::add_row_bias(k, blk.bk);
    tmp = transpose(blk.wv);
    matmul_into(n1, tmp, v);
    detail::add_row_bias(v, blk.bv);

    a.resize(t_len, c.d_model);
    for (Index h = 0; h < c.n_heads; ++h) {
      Mat<S> qh = q.block(0, h * c.d_head, t_len, c.d_head);
      Mat<S> kh = k.block(0, h * c.d_head, t_len, c.d_head);
      if (c.pos_kind == PosKind::rotary) {
        qh = rotary_apply(qh, positions, c.rotary_fold);
        kh = rotary_apply(kh, positions, c.rotary_fold);
      }
      Mat<S> kt = transpose(kh);
      Mat<S> scores = matmul(qh, kt);
      const S scale = static_cast<S>(inv_scale);
      for (Index i = 0; i < t_len; ++i) {
        for (Index j = 0; j <= i; ++j) scores(i, j) *= scale;
        for (Index j = i + 1; j < t_len; ++j)
          scores(i, j) = -std::numeric_limits<S>::infinity();
      }
      Mat<S> probs = softmax_rows(scores);
      if (opts.capture_attn) trace.attn_probs.push_back(probs);
      if (use_dropout) detail::dropout_inplace(probs, c.dropout_p, *rng);
      Mat<S> vh = v.block(0, h * c.d_head, t_len, c.d_head);
      Mat<S> ah = matmul(probs, vh);
      a.block(0, h * c.d_head, t_len, c.d_head) = ah;
    }

    tmp = transpose(blk.wo);
    matmul_into(a, tmp, o);
    detail::add_row_bias(o, blk.bo);
    x += o;
    snap("block" + std::to_string(layer) + ".attn", x);

    detail::norm_rows(c, x, blk.ffn_gamma, blk.ffn_beta, n2, nullptr);
    tmp = transpose(blk.w_up);
    matmul_into(n2, tmp, u);
    detail::add_row_bias(u, blk.b_up);
    g = gelu(u);
    tmp = transpose(blk.w_down);
    matmul_into(g, tmp, f);
    detail::add_row_bias(f, blk.b_down);
    if (use_dropout) detail::dropout_inplace(f, c.dropout_p, *rng);
    x += f;
    snap("block" + std::to_string(layer) + ".ffn", x);
  }

  Mat<S> xf;
  detail::norm_rows(c, x, params.final_gamma, params.final_beta, xf, nullptr);
  snap("final", xf);

  const Mat<S>& unemb = c.tied_unembedding ? params.embedding : params.unembedding;
  tmp = transpose(unemb);
  matmul_into(xf, tmp, trace.logits);
  return trace;
}

}  // namespace hcln
