#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "obqa/common.hpp"
#include "obqa/extractor/encoder.hpp"

namespace obqa {

template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;

// Raw head outputs for one window: per-token start/end logits and the
// yes/no/none logits (ordered as Ynn).
template <typename Scalar>
struct HeadLogits {
  VectorX<Scalar> start;
  VectorX<Scalar> end;
  Vector3<Scalar> ynn = Vector3<Scalar>::Zero();

  Eigen::Index size() const { return start.size(); }
};

template <typename Scalar>
struct HeadProbabilities {
  VectorX<Scalar> start;  // sigmoid(start logits)
  VectorX<Scalar> end;
  Vector3<Scalar> ynn;    // softmax(ynn logits)
};

// Gold tuple for one window: token indices of answer starts and ends (sorted,
// unique) and the yes/no/none verdict.
struct AnswerLabel {
  std::vector<Eigen::Index> start_positions;
  std::vector<Eigen::Index> end_positions;
  Ynn yn = Ynn::kNone;

  bool has_span() const { return !start_positions.empty(); }

  // Throws DataError when an index is out of range, sets are unsorted, or an
  // end has no start at or before it.
  void validate(Eigen::Index window_len) const;
};

template <typename Scalar>
HeadLogits<Scalar> heads_forward(const ModelParams<Scalar>& params, const MatrixX<Scalar>& states,
                                 const RowVectorX<Scalar>& pooled) {
  const ParamLayout& lay = params.layout();
  HeadLogits<Scalar> out;
  out.start = states * params.tensor(lay.start_weight);
  out.start.array() += params.values()(lay.start_bias.offset);
  out.end = states * params.tensor(lay.end_weight);
  out.end.array() += params.values()(lay.end_bias.offset);
  out.ynn = params.tensor(lay.ynn_weight) * pooled.transpose() +
            params.row(lay.ynn_bias).transpose();
  return out;
}

template <typename Scalar>
Scalar stable_sigmoid(Scalar x) {
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

// log(1 + exp(x)) without overflow.
template <typename Scalar>
Scalar softplus(Scalar x) {
  return std::max(x, Scalar(0)) + std::log1p(std::exp(-std::abs(x)));
}

template <typename Scalar>
Vector3<Scalar> softmax3(const Vector3<Scalar>& logits) {
  const Vector3<Scalar> e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

template <typename Scalar>
HeadProbabilities<Scalar> probabilities(const HeadLogits<Scalar>& logits) {
  HeadProbabilities<Scalar> p;
  p.start = logits.start.unaryExpr([](Scalar x) { return stable_sigmoid(x); });
  p.end = logits.end.unaryExpr([](Scalar x) { return stable_sigmoid(x); });
  p.ynn = softmax3(logits.ynn);
  return p;
}

namespace detail {

template <typename Scalar>
VectorX<Scalar> indicator(Eigen::Index n, const std::vector<Eigen::Index>& positions) {
  VectorX<Scalar> y = VectorX<Scalar>::Zero(n);
  for (Eigen::Index i : positions) y(i) = Scalar(1);
  return y;
}

// Mean binary cross-entropy from logits.
template <typename Scalar>
Scalar mean_bce(const VectorX<Scalar>& logits, const VectorX<Scalar>& targets) {
  Scalar total(0);
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    total += softplus(logits(i)) - targets(i) * logits(i);
  }
  return total / static_cast<Scalar>(logits.size());
}

}  // namespace detail

// Negative log-likelihood averaged over the three heads:
//   (BCE_start + BCE_end + CE_ynn) / 3
// where the BCE terms average over every window position with the gold
// start/end positions as positives.
template <typename Scalar>
Scalar loss(const HeadLogits<Scalar>& logits, const AnswerLabel& label) {
  const Eigen::Index n = logits.size();
  label.validate(n);
  const Scalar bce_start = detail::mean_bce(logits.start, detail::indicator<Scalar>(n, label.start_positions));
  const Scalar bce_end = detail::mean_bce(logits.end, detail::indicator<Scalar>(n, label.end_positions));
  const Scalar mx = logits.ynn.maxCoeff();
  const Scalar log_norm = mx + std::log((logits.ynn.array() - mx).exp().sum());
  const Scalar ce = log_norm - logits.ynn(static_cast<int>(label.yn));
  return (bce_start + bce_end + ce) / Scalar(3);
}

// d loss / d logits.
template <typename Scalar>
HeadLogits<Scalar> loss_gradient(const HeadLogits<Scalar>& logits, const AnswerLabel& label) {
  const Eigen::Index n = logits.size();
  label.validate(n);
  const HeadProbabilities<Scalar> p = probabilities(logits);
  const Scalar per_token = Scalar(1) / (Scalar(3) * static_cast<Scalar>(n));
  HeadLogits<Scalar> g;
  g.start = (p.start - detail::indicator<Scalar>(n, label.start_positions)) * per_token;
  g.end = (p.end - detail::indicator<Scalar>(n, label.end_positions)) * per_token;
  g.ynn = p.ynn;
  g.ynn(static_cast<int>(label.yn)) -= Scalar(1);
  g.ynn /= Scalar(3);
  return g;
}

// Backpropagates head-logit gradients into head parameters; returns the
// gradients with respect to window states and the pooled state.
template <typename Scalar>
std::pair<MatrixX<Scalar>, RowVectorX<Scalar>> heads_backward(
    const ModelParams<Scalar>& params, const MatrixX<Scalar>& states,
    const RowVectorX<Scalar>& pooled, const HeadLogits<Scalar>& d_logits,
    ModelParams<Scalar>& grad) {
  const ParamLayout& lay = params.layout();
  grad.tensor(lay.start_weight) += states.transpose() * d_logits.start;
  grad.values()(lay.start_bias.offset) += d_logits.start.sum();
  grad.tensor(lay.end_weight) += states.transpose() * d_logits.end;
  grad.values()(lay.end_bias.offset) += d_logits.end.sum();
  grad.tensor(lay.ynn_weight) += d_logits.ynn * pooled;
  grad.row(lay.ynn_bias) += d_logits.ynn.transpose();

  MatrixX<Scalar> d_states = d_logits.start * params.tensor(lay.start_weight).transpose() +
                             d_logits.end * params.tensor(lay.end_weight).transpose();
  RowVectorX<Scalar> d_pooled = d_logits.ynn.transpose() * params.tensor(lay.ynn_weight);
  return {std::move(d_states), std::move(d_pooled)};
}

}  // namespace obqa
