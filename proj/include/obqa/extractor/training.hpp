#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <vector>

#include "obqa/common.hpp"
#include "obqa/extractor/heads.hpp"

namespace obqa {

struct TrainingExample {
  EncoderInput input;
  AnswerLabel label;
};

template <typename Scalar>
HeadLogits<Scalar> forward(const ModelParams<Scalar>& params, const EncoderInput& input) {
  const EncoderOutput<Scalar> enc = encode(params, input);
  return heads_forward(params, enc.states, enc.pooled);
}

// Loss of one example; adds d loss / d params into grad.
template <typename Scalar>
Scalar loss_and_gradient(const ModelParams<Scalar>& params, const TrainingExample& example,
                         ModelParams<Scalar>& grad) {
  EncoderCache<Scalar> cache;
  const EncoderOutput<Scalar> enc = encode(params, example.input, &cache);
  const HeadLogits<Scalar> logits = heads_forward(params, enc.states, enc.pooled);
  const Scalar value = loss(logits, example.label);
  const HeadLogits<Scalar> d_logits = loss_gradient(logits, example.label);
  auto [d_states, d_pooled] = heads_backward(params, enc.states, enc.pooled, d_logits, grad);
  encode_backward(params, example.input, cache, d_states, d_pooled, grad);
  return value;
}

struct OptimizerConfig {
  double learning_rate = 1e-3;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 8;
  int epochs = 10;
  std::uint64_t seed = 1;  // example shuffling

  void validate() const;
};

// Adam with decoupled weight decay. Decay applies only to slots flagged in the
// layout (dense weights and embeddings, not biases or layer-norm parameters).
template <typename Scalar>
class AdamW {
 public:
  AdamW(const ModelParams<Scalar>& params, const OptimizerConfig& config) : config_(config) {
    m_.setZero(params.size());
    v_.setZero(params.size());
    decay_mask_.setZero(params.size());
    for (const TensorSlot& s : params.layout().all_slots()) {
      if (s.decay) decay_mask_.segment(s.offset, s.size()).setOnes();
    }
  }

  void step(ModelParams<Scalar>& params, const ModelParams<Scalar>& grad) {
    ++t_;
    const Scalar b1 = static_cast<Scalar>(config_.beta1);
    const Scalar b2 = static_cast<Scalar>(config_.beta2);
    const Scalar lr = static_cast<Scalar>(config_.learning_rate);
    const Scalar wd = static_cast<Scalar>(config_.weight_decay);
    const Scalar eps = static_cast<Scalar>(config_.epsilon);
    const Scalar c1 = Scalar(1) - std::pow(b1, static_cast<Scalar>(t_));
    const Scalar c2 = Scalar(1) - std::pow(b2, static_cast<Scalar>(t_));
    const auto& g = grad.values();
    m_ = b1 * m_ + (Scalar(1) - b1) * g;
    v_ = b2 * v_ + (Scalar(1) - b2) * g.cwiseAbs2();
    auto& theta = params.values();
    const VectorX<Scalar> update =
        (m_ / c1).array() / ((v_ / c2).array().sqrt() + eps) +
        wd * decay_mask_.array() * theta.array();
    theta -= lr * update;
  }

  long steps() const { return t_; }

 private:
  OptimizerConfig config_;
  VectorX<Scalar> m_, v_, decay_mask_;
  long t_ = 0;
};

template <typename Scalar>
struct TrainResult {
  ModelParams<Scalar> params;
  std::vector<double> epoch_loss;  // mean per-example loss seen during each epoch
};

// Mini-batch AdamW. Batch gradients are example means accumulated in a fixed
// order, so a given seed reproduces the trajectory exactly.
template <typename Scalar>
TrainResult<Scalar> train(const std::vector<TrainingExample>& examples, ModelParams<Scalar> params,
                          const OptimizerConfig& config,
                          const std::function<void(int, double)>& on_epoch = {}) {
  config.validate();
  if (examples.empty()) throw ConfigError("train: need at least one example");
  TrainResult<Scalar> result;
  AdamW<Scalar> optimizer(params, config);
  ModelParams<Scalar> grad(params.config());
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(config.seed);
  const auto batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_total = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += batch) {
      const std::size_t end = std::min(order.size(), begin + batch);
      grad.set_zero();
      for (std::size_t i = begin; i < end; ++i) {
        const Scalar value = loss_and_gradient(params, examples[order[i]], grad);
        if (!std::isfinite(static_cast<double>(value))) {
          std::ostringstream msg;
          msg << "non-finite loss at epoch " << epoch << ", example " << order[i]
              << " (learning rate " << config.learning_rate << " is likely too high)";
          throw TrainingError(msg.str());
        }
        epoch_total += static_cast<double>(value);
      }
      grad.values() /= static_cast<Scalar>(end - begin);
      optimizer.step(params, grad);
    }
    const double mean = epoch_total / static_cast<double>(examples.size());
    result.epoch_loss.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
  }
  result.params = std::move(params);
  return result;
}

struct AugmentConfig {
  int copies = 0;            // variants appended per example
  double rename_rate = 1.0;  // chance that a shared bucket is renamed
  std::uint64_t seed = 1;

  void validate() const;
};

// Returns the examples followed by config.copies variants of each. In a
// variant, every token bucket present in both the question and the window is,
// with probability rename_rate, replaced by one random bucket on both sides.
std::vector<TrainingExample> augment_shared_tokens(const std::vector<TrainingExample>& examples,
                                                   const AugmentConfig& config,
                                                   int vocab_hash_size);

struct GradCheckOptions {
  double eps = 1e-5;
  // 0 checks every coordinate; otherwise a seeded random subset of this size.
  std::size_t max_coords = 0;
  std::uint64_t seed = 0;
  // Restrict to the output-head parameters (encoder treated as frozen).
  bool heads_only = false;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  Eigen::Index worst_coord = -1;
  std::size_t checked = 0;
};

// Returns the loss and writes d loss / d params into its second argument.
using GradientFn = std::function<double(const ModelParams<double>&, ModelParams<double>&)>;

// Compares an analytic gradient against central finite differences,
//   |g_a - g_n| / max(1e-8, |g_a| + |g_n|),
// and reports the maximum over the checked coordinates. With no gradient_fn
// the model's own backward pass is checked.
GradCheckResult grad_check(const ModelParams<double>& params, const TrainingExample& example,
                           const GradCheckOptions& options, const GradientFn& gradient_fn = {});

}  // namespace obqa
