#pragma once

#include <Eigen/Core>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "obqa/common.hpp"
#include "obqa/corpus.hpp"
#include "obqa/extractor/params.hpp"

namespace obqa {

// Question tokens (segment 0) followed by window tokens (segment 1), already
// mapped to hash buckets. Per-token outputs cover only the window part.
struct EncoderInput {
  std::vector<int> token_ids;
  Eigen::Index question_len = 0;

  Eigen::Index length() const { return static_cast<Eigen::Index>(token_ids.size()); }
  Eigen::Index window_len() const { return length() - question_len; }
  int segment(Eigen::Index i) const { return i < question_len ? 0 : 1; }

  // Positions whose bucket also occurs in the other segment (exact-match
  // feature; lets the model line window tokens up with the question).
  std::vector<bool> shared_mask() const {
    const auto q_end = token_ids.begin() + question_len;
    const std::set<int> in_question(token_ids.begin(), q_end);
    const std::set<int> in_window(q_end, token_ids.end());
    std::vector<bool> mask(token_ids.size());
    for (std::size_t i = 0; i < token_ids.size(); ++i) {
      const auto& other = static_cast<Eigen::Index>(i) < question_len ? in_window : in_question;
      mask[i] = other.count(token_ids[i]) > 0;
    }
    return mask;
  }
};

// The question is truncated to max_question_len tokens; a window longer than
// max_window_len throws ConfigError (re-window instead).
EncoderInput make_encoder_input(const EncoderConfig& config, const TokenList& question,
                                const TokenList& window);

inline EncoderInput make_encoder_input(const EncoderConfig& config, const TokenList& window) {
  return make_encoder_input(config, TokenList{}, window);
}

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

// Fixed sinusoidal position table, positions x hidden.
template <typename Scalar>
MatrixX<Scalar> positional_encoding(Eigen::Index positions, Eigen::Index hidden) {
  MatrixX<Scalar> pe(positions, hidden);
  for (Eigen::Index p = 0; p < positions; ++p) {
    for (Eigen::Index i = 0; i < hidden; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) /
                                                static_cast<double>(hidden));
      const double angle = static_cast<double>(p) * rate;
      pe(p, i) = static_cast<Scalar>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return pe;
}

namespace detail {

inline constexpr double kLayerNormEps = 1e-5;

template <typename Scalar>
struct LayerNormCache {
  MatrixX<Scalar> xhat;
  VectorX<Scalar> inv_std;
};

// Row-wise layer norm.
template <typename Scalar>
MatrixX<Scalar> layer_norm(const MatrixX<Scalar>& x, const Eigen::Map<const RowVectorX<Scalar>>& gain,
                           const Eigen::Map<const RowVectorX<Scalar>>& bias,
                           LayerNormCache<Scalar>& cache) {
  const Eigen::Index h = x.cols();
  const VectorX<Scalar> mean = x.rowwise().mean();
  cache.xhat = x.colwise() - mean;
  cache.inv_std.resize(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Scalar var = cache.xhat.row(r).squaredNorm() / static_cast<Scalar>(h);
    cache.inv_std(r) = Scalar(1) / std::sqrt(var + static_cast<Scalar>(kLayerNormEps));
  }
  cache.xhat = cache.inv_std.asDiagonal() * cache.xhat;
  MatrixX<Scalar> y = cache.xhat.array().rowwise() * gain.array();
  y.rowwise() += bias;
  return y;
}

template <typename Scalar>
MatrixX<Scalar> layer_norm_backward(const MatrixX<Scalar>& dy, const LayerNormCache<Scalar>& cache,
                                    const Eigen::Map<const RowVectorX<Scalar>>& gain,
                                    Eigen::Map<RowVectorX<Scalar>> dgain,
                                    Eigen::Map<RowVectorX<Scalar>> dbias) {
  dgain += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  dbias += dy.colwise().sum();
  const MatrixX<Scalar> dxhat = dy.array().rowwise() * gain.array();
  const VectorX<Scalar> mean_dxhat = dxhat.rowwise().mean();
  const VectorX<Scalar> mean_dxhat_xhat = (dxhat.array() * cache.xhat.array()).rowwise().mean();
  MatrixX<Scalar> dx = dxhat;
  dx.colwise() -= mean_dxhat;
  dx -= (cache.xhat.array().colwise() * mean_dxhat_xhat.array()).matrix();
  return cache.inv_std.asDiagonal() * dx;
}

// tanh approximation of GELU.
template <typename Scalar>
Scalar gelu(Scalar x) {
  const Scalar c = static_cast<Scalar>(0.7978845608028654);  // sqrt(2/pi)
  const Scalar u = c * (x + static_cast<Scalar>(0.044715) * x * x * x);
  return static_cast<Scalar>(0.5) * x * (Scalar(1) + std::tanh(u));
}

template <typename Scalar>
Scalar gelu_grad(Scalar x) {
  const Scalar c = static_cast<Scalar>(0.7978845608028654);
  const Scalar a = static_cast<Scalar>(0.044715);
  const Scalar t = std::tanh(c * (x + a * x * x * x));
  return static_cast<Scalar>(0.5) * (Scalar(1) + t) +
         static_cast<Scalar>(0.5) * x * (Scalar(1) - t * t) * c * (Scalar(1) + Scalar(3) * a * x * x);
}

template <typename Scalar>
void softmax_rows(MatrixX<Scalar>& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const Scalar mx = m.row(r).maxCoeff();
    m.row(r) = (m.row(r).array() - mx).exp();
    m.row(r) /= m.row(r).sum();
  }
}

}  // namespace detail

template <typename Scalar>
struct LayerCache {
  MatrixX<Scalar> x_in, q, k, v, context;
  std::vector<MatrixX<Scalar>> attention;  // per head, rows sum to 1
  detail::LayerNormCache<Scalar> ln1, ln2;
  MatrixX<Scalar> x_mid;    // output of the first layer norm
  MatrixX<Scalar> ffn_pre;  // before GELU
  MatrixX<Scalar> ffn_act;
};

template <typename Scalar>
struct EncoderOutput {
  MatrixX<Scalar> states;     // window_len x H
  RowVectorX<Scalar> pooled;  // mean over every position (question and window)
};

template <typename Scalar>
struct EncoderCache {
  std::vector<LayerCache<Scalar>> layers;
  MatrixX<Scalar> final_states;  // sequence x H
};

// Forward pass. When cache is non-null it receives what backward needs.
template <typename Scalar>
EncoderOutput<Scalar> encode(const ModelParams<Scalar>& params, const EncoderInput& input,
                             EncoderCache<Scalar>* cache = nullptr) {
  using Eigen::Index;
  const EncoderConfig& cfg = params.config();
  const ParamLayout& lay = params.layout();
  const Index n = input.length();
  const Index h = cfg.hidden;
  if (input.window_len() > cfg.max_window_len || input.question_len > cfg.max_question_len) {
    throw ConfigError("encoder input exceeds the configured window or question length");
  }
  if (n == 0) throw ConfigError("encoder input is empty");

  const auto tok = params.tensor(lay.token_embedding);
  const auto seg = params.tensor(lay.segment_embedding);
  const auto match = params.row(lay.match_embedding);
  const std::vector<bool> shared = input.shared_mask();
  MatrixX<Scalar> x = positional_encoding<Scalar>(n, h);
  for (Index i = 0; i < n; ++i) {
    x.row(i) += tok.row(input.token_ids[static_cast<std::size_t>(i)]) + seg.row(input.segment(i));
    if (shared[static_cast<std::size_t>(i)]) x.row(i) += match;
  }

  const Index heads = cfg.heads;
  const Index d = cfg.head_dim();
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(d));
  if (cache) cache->layers.assign(lay.layers.size(), {});

  for (std::size_t l = 0; l < lay.layers.size(); ++l) {
    const LayerSlots& s = lay.layers[l];
    LayerCache<Scalar> local;
    LayerCache<Scalar>& c = cache ? cache->layers[l] : local;
    c.x_in = x;
    c.q = (x * params.tensor(s.wq)).rowwise() + params.row(s.bq);
    c.k = x * params.tensor(s.wk);
    c.v = (x * params.tensor(s.wv)).rowwise() + params.row(s.bv);
    c.context.resize(n, h);
    c.attention.resize(static_cast<std::size_t>(heads));
    for (Index a = 0; a < heads; ++a) {
      MatrixX<Scalar>& p = c.attention[static_cast<std::size_t>(a)];
      p = (c.q.middleCols(a * d, d) * c.k.middleCols(a * d, d).transpose()) * scale;
      detail::softmax_rows(p);
      c.context.middleCols(a * d, d) = p * c.v.middleCols(a * d, d);
    }
    MatrixX<Scalar> residual = x + ((c.context * params.tensor(s.wo)).rowwise() + params.row(s.bo));
    c.x_mid = detail::layer_norm<Scalar>(residual, params.row(s.ln1_gain), params.row(s.ln1_bias), c.ln1);
    c.ffn_pre = (c.x_mid * params.tensor(s.w1)).rowwise() + params.row(s.b1);
    c.ffn_act = c.ffn_pre.unaryExpr([](Scalar z) { return detail::gelu(z); });
    residual = c.x_mid + ((c.ffn_act * params.tensor(s.w2)).rowwise() + params.row(s.b2));
    x = detail::layer_norm<Scalar>(residual, params.row(s.ln2_gain), params.row(s.ln2_bias), c.ln2);
  }

  EncoderOutput<Scalar> out;
  out.states = x.bottomRows(input.window_len());
  out.pooled = x.colwise().mean();
  if (cache) cache->final_states = std::move(x);
  return out;
}

// Backpropagates d(loss)/d(window states) and d(loss)/d(pooled) through the
// encoder, accumulating parameter gradients into grad.
template <typename Scalar>
void encode_backward(const ModelParams<Scalar>& params, const EncoderInput& input,
                     const EncoderCache<Scalar>& cache, const MatrixX<Scalar>& d_states,
                     const RowVectorX<Scalar>& d_pooled, ModelParams<Scalar>& grad) {
  using Eigen::Index;
  const EncoderConfig& cfg = params.config();
  const ParamLayout& lay = params.layout();
  const Index n = input.length();
  const Index heads = cfg.heads;
  const Index d = cfg.head_dim();
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(d));

  MatrixX<Scalar> dx = MatrixX<Scalar>::Zero(n, cfg.hidden);
  dx.bottomRows(input.window_len()) = d_states;
  dx.rowwise() += d_pooled / static_cast<Scalar>(n);

  for (std::size_t l = lay.layers.size(); l-- > 0;) {
    const LayerSlots& s = lay.layers[l];
    const LayerCache<Scalar>& c = cache.layers[l];

    const MatrixX<Scalar> d_res2 = detail::layer_norm_backward<Scalar>(
        dx, c.ln2, params.row(s.ln2_gain), grad.row(s.ln2_gain), grad.row(s.ln2_bias));
    grad.tensor(s.w2) += c.ffn_act.transpose() * d_res2;
    grad.row(s.b2) += d_res2.colwise().sum();
    MatrixX<Scalar> d_pre = d_res2 * params.tensor(s.w2).transpose();
    d_pre.array() *= c.ffn_pre.unaryExpr([](Scalar z) { return detail::gelu_grad(z); }).array();
    grad.tensor(s.w1) += c.x_mid.transpose() * d_pre;
    grad.row(s.b1) += d_pre.colwise().sum();
    const MatrixX<Scalar> d_mid = d_res2 + d_pre * params.tensor(s.w1).transpose();

    const MatrixX<Scalar> d_res1 = detail::layer_norm_backward<Scalar>(
        d_mid, c.ln1, params.row(s.ln1_gain), grad.row(s.ln1_gain), grad.row(s.ln1_bias));
    grad.tensor(s.wo) += c.context.transpose() * d_res1;
    grad.row(s.bo) += d_res1.colwise().sum();
    const MatrixX<Scalar> d_context = d_res1 * params.tensor(s.wo).transpose();

    MatrixX<Scalar> dq(n, cfg.hidden), dk(n, cfg.hidden), dv(n, cfg.hidden);
    for (Index a = 0; a < heads; ++a) {
      const MatrixX<Scalar>& p = c.attention[static_cast<std::size_t>(a)];
      const auto d_ctx = d_context.middleCols(a * d, d);
      const MatrixX<Scalar> dp = d_ctx * c.v.middleCols(a * d, d).transpose();
      dv.middleCols(a * d, d) = p.transpose() * d_ctx;
      const VectorX<Scalar> row_dot = (dp.array() * p.array()).rowwise().sum();
      const MatrixX<Scalar> ds = (p.array() * (dp.colwise() - row_dot).array()).matrix() * scale;
      dq.middleCols(a * d, d) = ds * c.k.middleCols(a * d, d);
      dk.middleCols(a * d, d) = ds.transpose() * c.q.middleCols(a * d, d);
    }
    grad.tensor(s.wq) += c.x_in.transpose() * dq;
    grad.tensor(s.wk) += c.x_in.transpose() * dk;
    grad.tensor(s.wv) += c.x_in.transpose() * dv;
    grad.row(s.bq) += dq.colwise().sum();
    grad.row(s.bv) += dv.colwise().sum();
    dx = d_res1 + dq * params.tensor(s.wq).transpose() + dk * params.tensor(s.wk).transpose() +
         dv * params.tensor(s.wv).transpose();
  }

  auto d_tok = grad.tensor(lay.token_embedding);
  auto d_seg = grad.tensor(lay.segment_embedding);
  auto d_match = grad.row(lay.match_embedding);
  const std::vector<bool> shared = input.shared_mask();
  for (Index i = 0; i < n; ++i) {
    d_tok.row(input.token_ids[static_cast<std::size_t>(i)]) += dx.row(i);
    d_seg.row(input.segment(i)) += dx.row(i);
    if (shared[static_cast<std::size_t>(i)]) d_match += dx.row(i);
  }
}

}  // namespace obqa
