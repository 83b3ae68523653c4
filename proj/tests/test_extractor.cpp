#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "obqa/extractor.hpp"
#include "test_support.hpp"

using namespace obqa;
using obqa::testing::random_example;
using obqa::testing::toy_config;

namespace {

HeadLogits<double> zero_logits(Eigen::Index n) {
  HeadLogits<double> l;
  l.start = Eigen::VectorXd::Zero(n);
  l.end = Eigen::VectorXd::Zero(n);
  l.ynn.setZero();
  return l;
}

// Loss written out element by element from the textbook definitions.
double reference_loss(const HeadLogits<double>& l, const AnswerLabel& label) {
  const auto n = l.size();
  const auto bce = [&](const Eigen::VectorXd& f, const std::vector<Eigen::Index>& pos) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const bool y = std::find(pos.begin(), pos.end(), i) != pos.end();
      const double p = 1.0 / (1.0 + std::exp(-f(i)));
      total += y ? -std::log(p) : -std::log(1.0 - p);
    }
    return total / static_cast<double>(n);
  };
  double z = 0.0;
  for (int c = 0; c < 3; ++c) z += std::exp(l.ynn(c));
  const double ce = -std::log(std::exp(l.ynn(static_cast<int>(label.yn))) / z);
  return (bce(l.start, label.start_positions) + bce(l.end, label.end_positions) + ce) / 3.0;
}

}  // namespace

TEST_CASE("encoder output shapes") {
  const auto config = toy_config();
  const auto params = init_params<double>(config);
  const auto input = make_encoder_input(config, obqa::testing::words(5, 1), obqa::testing::words(32, 2));
  const auto out = encode(params, input);
  CHECK(out.states.rows() == 32);
  CHECK(out.states.cols() == 16);
  CHECK(out.pooled.size() == 16);
  const auto logits = forward(params, input);
  CHECK(logits.start.size() == 32);
  CHECK(logits.end.size() == 32);
}

TEST_CASE("identical windows give identical states") {
  const auto config = toy_config();
  const auto params = init_params<double>(config);
  const auto a = make_encoder_input(config, obqa::testing::words(4, 3), obqa::testing::words(20, 4));
  const auto b = make_encoder_input(config, obqa::testing::words(4, 3), obqa::testing::words(20, 4));
  CHECK(encode(params, a).states == encode(params, b).states);
}

TEST_CASE("tokens shared by question and window are flagged") {
  const auto config = toy_config();
  const auto input =
      make_encoder_input(config, tokenize("what does entity 7 do"), tokenize("entity 7 relates to value 7"));
  const std::vector<bool> want{false, false, true, true, false, true, true, false, false, false, true};
  CHECK(input.shared_mask() == want);

  // The flag changes the states; without a question nothing is flagged.
  auto params = init_params<double>(config);
  const auto before = encode(params, input).states;
  params.row(params.layout().match_embedding).setZero();
  CHECK((encode(params, input).states - before).norm() > 1e-6);
  const auto alone = make_encoder_input(config, tokenize("entity 7"));
  CHECK(alone.shared_mask() == std::vector<bool>{false, false});
}

TEST_CASE("window longer than the model accepts is rejected") {
  const auto config = toy_config();
  CHECK_THROWS_AS(make_encoder_input(config, {}, obqa::testing::words(33, 1)), ConfigError);
}

TEST_CASE("zero heads give zero logits") {
  const auto config = toy_config();
  auto params = init_params<double>(config);
  params.values().tail(params.size() - params.layout().heads_offset).setZero();
  const auto logits = forward(params, random_example(config, 12, 5).input);
  CHECK(logits.start.isZero(0.0));
  CHECK(logits.end.isZero(0.0));
  CHECK(logits.ynn.isZero(0.0));
}

TEST_CASE("start logits are linear in the start weights") {
  const auto config = toy_config();
  auto params = init_params<double>(config);
  params.values()(params.layout().start_bias.offset) = 0.0;
  const auto input = random_example(config, 10, 6).input;
  const auto base = forward(params, input).start;
  params.tensor(params.layout().start_weight) *= 2.0;
  const auto doubled = forward(params, input).start;
  CHECK((doubled - 2.0 * base).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("head probabilities") {
  auto l = zero_logits(4);
  auto p = probabilities(l);
  CHECK(p.start.isConstant(0.5, 0.0));
  CHECK(p.ynn.isApprox(Eigen::Vector3d::Constant(1.0 / 3.0), 1e-15));

  l.ynn << std::log(2.0), 0.0, 0.0;
  p = probabilities(l);
  CHECK(p.ynn(0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(p.ynn(1) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(p.ynn(2) == doctest::Approx(0.25).epsilon(1e-12));

  SUBCASE("extreme logits stay finite") {
    l.start << 1e4, -1e4, 0.0, 1.0;
    l.ynn << 1e4, -1e4, 0.0;
    p = probabilities(l);
    CHECK(p.start.allFinite());
    CHECK(p.ynn.allFinite());
    CHECK(p.start(0) == 1.0);
    CHECK(p.start(1) == 0.0);
    CHECK(std::abs(p.ynn.sum() - 1.0) < 1e-12);
    CHECK(std::isfinite(loss(l, AnswerLabel{{1}, {1}, Ynn::kNo})));
  }
}

TEST_CASE("loss of zero logits") {
  const AnswerLabel label{{2}, {3}, Ynn::kYes};
  const double expected = (2.0 * std::log(2.0) + std::log(3.0)) / 3.0;
  CHECK(std::abs(loss(zero_logits(8), label) - expected) < 1e-9);
  CHECK(std::abs(expected - 0.8283) < 1e-4);
}

TEST_CASE("saturated correct logits give near-zero loss") {
  auto l = zero_logits(8);
  l.start.setConstant(-30.0);
  l.end.setConstant(-30.0);
  l.start(2) = 30.0;
  l.end(5) = 30.0;
  l.ynn << -30.0, 30.0, -30.0;
  CHECK(loss(l, AnswerLabel{{2}, {5}, Ynn::kNo}) < 1e-9);
}

TEST_CASE("loss matches the elementwise reference") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> dist(0.0, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    auto l = zero_logits(9);
    for (Eigen::Index i = 0; i < 9; ++i) {
      l.start(i) = dist(rng);
      l.end(i) = dist(rng);
    }
    for (int c = 0; c < 3; ++c) l.ynn(c) = dist(rng);
    AnswerLabel label;
    if (trial % 4 != 0) {
      label.start_positions = {static_cast<Eigen::Index>(trial % 5)};
      label.end_positions = {static_cast<Eigen::Index>(trial % 5 + 2)};
    }
    label.yn = static_cast<Ynn>(trial % 3);
    const double value = loss(l, label);
    CHECK(value >= 0.0);
    CHECK(value == doctest::Approx(reference_loss(l, label)).epsilon(1e-12));
  }
}

TEST_CASE("label validation") {
  const auto l = zero_logits(4);
  CHECK_THROWS_AS(loss(l, AnswerLabel{{4}, {4}, Ynn::kYes}), DataError);
  CHECK_THROWS_AS(loss(l, AnswerLabel{{2}, {1}, Ynn::kYes}), DataError);
  CHECK_THROWS_AS(loss(l, AnswerLabel{{2, 1}, {3}, Ynn::kYes}), DataError);
}

TEST_CASE("relabeling the verdict classes leaves the loss unchanged") {
  const auto config = toy_config();
  auto params = init_params<double>(config);
  auto ex = random_example(config, 16, 7, Ynn::kYes);
  const double before = loss(forward(params, ex.input), ex.label);

  // Swap the yes and none rows of the verdict head and relabel to match.
  const auto& lay = params.layout();
  auto w = params.tensor(lay.ynn_weight);
  w.row(0).swap(w.row(2));
  auto b = params.row(lay.ynn_bias);
  std::swap(b(0), b(2));
  ex.label.yn = Ynn::kNone;
  CHECK(loss(forward(params, ex.input), ex.label) == doctest::Approx(before).epsilon(1e-12));
}

TEST_CASE("gradient check on the toy model") {
  const auto config = toy_config();
  const auto params = init_params<double>(config);
  const auto ex = random_example(config, 32, 9);
  const auto result = grad_check(params, ex, {});
  CHECK(result.checked == static_cast<std::size_t>(params.size()));
  CHECK(result.max_rel_error < 1e-4);
  const auto mask = ex.input.shared_mask();
  CHECK(std::count(mask.begin(), mask.end(), true) > 0);  // match embedding is exercised

  SUBCASE("output heads") {
    GradCheckOptions opts;
    opts.heads_only = true;
    const auto heads = grad_check(params, ex, opts);
    CHECK(heads.checked == static_cast<std::size_t>(params.size() - params.layout().heads_offset));
    CHECK(heads.max_rel_error < 1e-6);
  }

  SUBCASE("a corrupted end-head gradient is detected") {
    const GradientFn corrupted = [&](const ModelParams<double>& p, ModelParams<double>& g) {
      g.set_zero();
      const double value = loss_and_gradient(p, ex, g);
      g.tensor(p.layout().end_weight) *= 1.5;
      return value;
    };
    GradCheckOptions opts;
    opts.heads_only = true;
    const auto bad = grad_check(params, ex, opts, corrupted);
    CHECK(bad.max_rel_error > 1e-2);
    const auto& ew = params.layout().end_weight;
    CHECK(bad.worst_coord >= ew.offset);
    CHECK(bad.worst_coord < ew.offset + ew.size());
  }
}

TEST_CASE("gradient check with several spans and a negative window") {
  const auto config = toy_config(4);
  const auto params = init_params<double>(config);
  TrainingExample ex = random_example(config, 20, 12, Ynn::kNo);
  ex.label.start_positions = {1, 7};
  ex.label.end_positions = {3, 9};
  GradCheckOptions opts;
  opts.max_coords = 400;
  opts.seed = 5;
  CHECK(grad_check(params, ex, opts).max_rel_error < 1e-4);

  ex.label = AnswerLabel{};
  CHECK(grad_check(params, ex, opts).max_rel_error < 1e-4);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  const auto config = toy_config();
  const auto params = init_params<double>(config);
  std::vector<TrainingExample> examples;
  for (int i = 0; i < 6; ++i) examples.push_back(random_example(config, 10, 100 + i));
  OptimizerConfig opt;
  opt.learning_rate = 0.0;
  opt.epochs = 2;
  const auto result = train(examples, params, opt);
  CHECK(result.params == params);
}

TEST_CASE("training is deterministic and reduces the loss") {
  const auto config = toy_config();
  std::vector<TrainingExample> examples;
  for (int i = 0; i < 16; ++i) {
    examples.push_back(random_example(config, 12, 200 + i, static_cast<Ynn>(i % 3)));
  }
  OptimizerConfig opt;
  opt.learning_rate = 1e-2;
  opt.epochs = 15;
  opt.seed = 3;
  const auto a = train(examples, init_params<double>(config), opt);
  const auto b = train(examples, init_params<double>(config), opt);
  CHECK(a.params == b.params);
  CHECK(a.epoch_loss == b.epoch_loss);
  CHECK(a.epoch_loss.back() < a.epoch_loss.front());

  opt.seed = 4;
  const auto c = train(examples, init_params<double>(config), opt);
  CHECK_FALSE(c.params == a.params);
}

TEST_CASE("loss falls every epoch early in training on synthetic windows") {
  const auto config = toy_config(5);
  const auto windows = obqa::testing::synthetic_positive_windows(3, 50);
  REQUIRE(windows.size() == 50);
  OptimizerConfig opt;
  opt.learning_rate = 3e-3;
  opt.epochs = 5;
  opt.seed = 5;
  const auto r = train(to_training_examples(windows, config), init_params<double>(config), opt);
  for (std::size_t e = 1; e < r.epoch_loss.size(); ++e) CHECK(r.epoch_loss[e] < r.epoch_loss[e - 1]);
}

TEST_CASE("weight decay skips biases and layer-norm parameters") {
  const auto config = toy_config();
  auto params = init_params<double>(config);
  params.values().setConstant(1.0);
  ModelParams<double> grad(config);
  OptimizerConfig opt;
  opt.learning_rate = 0.1;
  opt.weight_decay = 0.5;
  AdamW<double> adam(params, opt);
  adam.step(params, grad);
  const auto& lay = params.layout();
  CHECK(params.row(lay.layers[0].bq)(0) == 1.0);
  CHECK(params.row(lay.layers[0].ln1_gain)(0) == 1.0);
  CHECK(params.tensor(lay.layers[0].wq)(0, 0) == doctest::Approx(1.0 - 0.1 * 0.5));
  CHECK(params.tensor(lay.token_embedding)(0, 0) == doctest::Approx(0.95));
}

TEST_CASE("runaway learning rate aborts with a training error") {
  const auto config = toy_config();
  std::vector<TrainingExample> examples;
  for (int i = 0; i < 4; ++i) examples.push_back(random_example(config, 8, 300 + i));
  OptimizerConfig opt;
  opt.learning_rate = 1e300;
  opt.weight_decay = 0.0;
  opt.batch_size = 1;
  opt.epochs = 3;
  CHECK_THROWS_AS(train(examples, init_params<double>(config), opt), TrainingError);
}

TEST_CASE("optimizer config validation") {
  OptimizerConfig opt;
  opt.batch_size = 0;
  CHECK_THROWS_AS(opt.validate(), ConfigError);
  opt = {};
  opt.learning_rate = -1.0;
  CHECK_THROWS_AS(opt.validate(), ConfigError);
}

TEST_CASE("encoder config validation") {
  auto c = toy_config();
  c.heads = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = toy_config();
  c.layers = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("checkpoint round trip is bit exact") {
  const auto config = toy_config(21);
  const auto params = init_params<double>(config);
  std::stringstream buf;
  write_checkpoint(buf, params);
  const auto loaded = read_checkpoint(buf);
  CHECK(loaded == params);
  const auto input = random_example(config, 14, 8).input;
  CHECK(forward(loaded, input).start == forward(params, input).start);

  obqa::testing::TempDir dir;
  save_checkpoint(dir.path() / "m.ckpt", params);
  CHECK(load_checkpoint(dir.path() / "m.ckpt") == params);
}

TEST_CASE("damaged checkpoints are rejected") {
  const auto params = init_params<double>(toy_config());
  std::stringstream buf;
  write_checkpoint(buf, params);
  const std::string bytes = buf.str();

  std::stringstream truncated(bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(read_checkpoint(truncated), DataError);

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  std::stringstream bm(bad_magic);
  CHECK_THROWS_AS(read_checkpoint(bm), DataError);

  CHECK_THROWS_AS(load_checkpoint("/nonexistent/m.ckpt"), ConfigError);
}

TEST_CASE("hashing is stable") {
  // FNV-1a reference values.
  CHECK(stable_hash("") == 14695981039346656037ull);
  CHECK(stable_hash("a") == 0xaf63dc4c8601ec8cull);
  CHECK(token_bucket("a", 1024) == static_cast<int>(0xaf63dc4c8601ec8cull % 1024));
}

TEST_CASE("shared-token augmentation") {
  const auto config = toy_config();
  TrainingExample ex;
  ex.input = make_encoder_input(config, tokenize("where is gamma now"), tokenize("alpha gamma beta gamma is"));
  ex.label = AnswerLabel{{1}, {1}, Ynn::kNone};
  const std::vector<TrainingExample> examples{ex};

  AugmentConfig aug;
  aug.copies = 3;
  aug.seed = 5;
  const auto out = augment_shared_tokens(examples, aug, config.vocab_hash_size);
  REQUIRE(out.size() == 4);
  CHECK(out[0].input.token_ids == ex.input.token_ids);
  const auto& ids = ex.input.token_ids;
  for (std::size_t c = 1; c < out.size(); ++c) {
    const auto& v = out[c].input.token_ids;
    CHECK(out[c].label.start_positions == ex.label.start_positions);
    // "gamma" sits at question position 2 and window positions 1 and 3.
    CHECK(v[2] == v[4 + 1]);
    CHECK(v[2] == v[4 + 3]);
    // Words only in the window keep their buckets.
    CHECK(v[4 + 0] == ids[4 + 0]);
    CHECK(v[4 + 2] == ids[4 + 2]);
    CHECK(v[0] == ids[0]);
  }
  CHECK(augment_shared_tokens(examples, aug, config.vocab_hash_size)[3].input.token_ids ==
        out[3].input.token_ids);

  aug.rename_rate = 0.0;
  for (const auto& v : augment_shared_tokens(examples, aug, config.vocab_hash_size)) {
    CHECK(v.input.token_ids == ids);
  }
  aug.rename_rate = 1.5;
  CHECK_THROWS_AS(augment_shared_tokens(examples, aug, config.vocab_hash_size), ConfigError);
}
