#pragma once

#include <Eigen/Core>
#include <cmath>
#include <random>

#include "obqa/extractor/config.hpp"

namespace obqa {

// All trainable tensors of the extractor held in one flat vector; individual
// tensors are exposed as Eigen::Map views. Gradients use the same type.
template <typename Scalar_>
class ModelParams {
 public:
  using Scalar = Scalar_;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

  ModelParams() = default;

  // Zero-filled.
  explicit ModelParams(const EncoderConfig& config)
      : config_(config), layout_(ParamLayout::for_config(config)) {
    values_.setZero(layout_.size);
  }

  const EncoderConfig& config() const { return config_; }
  const ParamLayout& layout() const { return layout_; }
  Eigen::Index size() const { return values_.size(); }

  Vector& values() { return values_; }
  const Vector& values() const { return values_; }

  Eigen::Map<Matrix> tensor(const TensorSlot& s) {
    return {values_.data() + s.offset, s.rows, s.cols};
  }
  Eigen::Map<const Matrix> tensor(const TensorSlot& s) const {
    return {values_.data() + s.offset, s.rows, s.cols};
  }
  // For 1 x n slots (biases, gains).
  Eigen::Map<RowVector> row(const TensorSlot& s) {
    return {values_.data() + s.offset, s.size()};
  }
  Eigen::Map<const RowVector> row(const TensorSlot& s) const {
    return {values_.data() + s.offset, s.size()};
  }

  void set_zero() { values_.setZero(); }
  bool all_finite() const { return values_.allFinite(); }

  template <typename NewScalar>
  ModelParams<NewScalar> cast() const {
    ModelParams<NewScalar> out(config_);
    out.values() = values_.template cast<NewScalar>();
    return out;
  }

  bool operator==(const ModelParams& other) const {
    return config_ == other.config_ && values_.size() == other.values_.size() &&
           values_ == other.values_;
  }

 private:
  EncoderConfig config_;
  ParamLayout layout_;
  Vector values_;
};

// Seeded initialization: embeddings ~ N(0, 0.5), dense weights
// ~ N(0, 1/sqrt(fan_in)), layer-norm gains 1, biases 0.
template <typename Scalar>
ModelParams<Scalar> init_params(const EncoderConfig& config) {
  config.validate();
  ModelParams<Scalar> params(config);
  std::mt19937_64 rng(config.seed);
  const auto fill_normal = [&](const TensorSlot& slot, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    auto t = params.tensor(slot);
    for (Eigen::Index c = 0; c < t.cols(); ++c) {
      for (Eigen::Index r = 0; r < t.rows(); ++r) t(r, c) = static_cast<Scalar>(dist(rng));
    }
  };
  const auto dense = [&](const TensorSlot& slot) {
    fill_normal(slot, 1.0 / std::sqrt(static_cast<double>(slot.rows)));
  };
  const ParamLayout& layout = params.layout();
  fill_normal(layout.token_embedding, 0.5);
  fill_normal(layout.segment_embedding, 0.5);
  fill_normal(layout.match_embedding, 0.5);
  for (const LayerSlots& l : layout.layers) {
    dense(l.wq);
    dense(l.wk);
    dense(l.wv);
    dense(l.wo);
    dense(l.w1);
    dense(l.w2);
    params.row(l.ln1_gain).setOnes();
    params.row(l.ln2_gain).setOnes();
  }
  dense(layout.start_weight);
  dense(layout.end_weight);
  fill_normal(layout.ynn_weight, 1.0 / std::sqrt(static_cast<double>(config.hidden)));
  return params;
}

}  // namespace obqa
