#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "binary_io.hpp"
#include "obqa/common.hpp"
#include "obqa/extractor/checkpoint.hpp"
#include "obqa/extractor/config.hpp"
#include "obqa/extractor/training.hpp"

namespace obqa {

void EncoderConfig::validate() const {
  if (layers < 1 || hidden < 1 || heads < 1 || vocab_hash_size < 1 || max_window_len < 1 ||
      max_question_len < 0) {
    throw ConfigError("encoder config: counts must be positive");
  }
  if (hidden % heads != 0) throw ConfigError("encoder config: hidden must be divisible by heads");
}

ParamLayout ParamLayout::for_config(const EncoderConfig& config) {
  config.validate();
  ParamLayout layout;
  Eigen::Index offset = 0;
  const auto take = [&](Eigen::Index rows, Eigen::Index cols, bool decay) {
    TensorSlot s{offset, rows, cols, decay};
    offset += rows * cols;
    return s;
  };
  const Eigen::Index h = config.hidden;
  const Eigen::Index f = config.ffn_size();
  layout.token_embedding = take(config.vocab_hash_size, h, true);
  layout.segment_embedding = take(2, h, true);
  layout.match_embedding = take(1, h, true);
  for (int l = 0; l < config.layers; ++l) {
    LayerSlots s;
    s.wq = take(h, h, true);
    s.bq = take(1, h, false);
    s.wk = take(h, h, true);
    s.wv = take(h, h, true);
    s.bv = take(1, h, false);
    s.wo = take(h, h, true);
    s.bo = take(1, h, false);
    s.ln1_gain = take(1, h, false);
    s.ln1_bias = take(1, h, false);
    s.w1 = take(h, f, true);
    s.b1 = take(1, f, false);
    s.w2 = take(f, h, true);
    s.b2 = take(1, h, false);
    s.ln2_gain = take(1, h, false);
    s.ln2_bias = take(1, h, false);
    layout.layers.push_back(s);
  }
  layout.heads_offset = offset;
  layout.start_weight = take(h, 1, true);
  layout.start_bias = take(1, 1, false);
  layout.end_weight = take(h, 1, true);
  layout.end_bias = take(1, 1, false);
  layout.ynn_weight = take(kNumYnnClasses, h, true);
  layout.ynn_bias = take(1, kNumYnnClasses, false);
  layout.size = offset;
  return layout;
}

std::vector<TensorSlot> ParamLayout::all_slots() const {
  std::vector<TensorSlot> out{token_embedding, segment_embedding, match_embedding};
  for (const LayerSlots& s : layers) {
    out.insert(out.end(), {s.wq, s.bq, s.wk, s.wv, s.bv, s.wo, s.bo, s.ln1_gain,
                           s.ln1_bias, s.w1, s.b1, s.w2, s.b2, s.ln2_gain, s.ln2_bias});
  }
  out.insert(out.end(), {start_weight, start_bias, end_weight, end_bias, ynn_weight, ynn_bias});
  return out;
}

std::uint64_t stable_hash(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

int token_bucket(std::string_view surface, int vocab_hash_size) {
  return static_cast<int>(stable_hash(surface) % static_cast<std::uint64_t>(vocab_hash_size));
}

EncoderInput make_encoder_input(const EncoderConfig& config, const TokenList& question,
                                const TokenList& window) {
  if (window.size() > static_cast<std::size_t>(config.max_window_len)) {
    throw ConfigError("window has " + std::to_string(window.size()) +
                      " tokens, more than max_window_len " +
                      std::to_string(config.max_window_len));
  }
  EncoderInput input;
  const std::size_t q = std::min(question.size(), static_cast<std::size_t>(config.max_question_len));
  input.question_len = static_cast<Eigen::Index>(q);
  input.token_ids.reserve(q + window.size());
  for (std::size_t i = 0; i < q; ++i) {
    input.token_ids.push_back(token_bucket(question[i].surface, config.vocab_hash_size));
  }
  for (const Token& t : window) {
    input.token_ids.push_back(token_bucket(t.surface, config.vocab_hash_size));
  }
  return input;
}

void AnswerLabel::validate(Eigen::Index window_len) const {
  const auto check = [&](const std::vector<Eigen::Index>& v, const char* what) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i] < 0 || v[i] >= window_len) {
        throw DataError(std::string("label ") + what + " position " + std::to_string(v[i]) +
                        " outside window of length " + std::to_string(window_len));
      }
      if (i > 0 && v[i] <= v[i - 1]) {
        throw DataError(std::string("label ") + what + " positions must be sorted and unique");
      }
    }
  };
  check(start_positions, "start");
  check(end_positions, "end");
  for (Eigen::Index e : end_positions) {
    if (start_positions.empty() || start_positions.front() > e) {
      throw DataError("label end position " + std::to_string(e) + " has no start before it");
    }
  }
}

void OptimizerConfig::validate() const {
  if (learning_rate < 0.0 || weight_decay < 0.0) {
    throw ConfigError("learning rate and weight decay must be non-negative");
  }
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
}

void AugmentConfig::validate() const {
  if (copies < 0) throw ConfigError("augment copies must be non-negative");
  if (!(rename_rate >= 0.0 && rename_rate <= 1.0)) {
    throw ConfigError("augment rename rate must lie in [0, 1]");
  }
}

std::vector<TrainingExample> augment_shared_tokens(const std::vector<TrainingExample>& examples,
                                                   const AugmentConfig& config,
                                                   int vocab_hash_size) {
  config.validate();
  if (vocab_hash_size < 1) throw ConfigError("vocab_hash_size must be positive");
  std::vector<TrainingExample> out = examples;
  out.reserve(examples.size() * static_cast<std::size_t>(config.copies + 1));
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<int> bucket(0, vocab_hash_size - 1);
  for (int c = 0; c < config.copies; ++c) {
    for (const TrainingExample& ex : examples) {
      TrainingExample variant = ex;
      std::vector<int>& ids = variant.input.token_ids;
      const auto split = ids.begin() + ex.input.question_len;
      const std::set<int> question(ids.begin(), split);
      const std::set<int> window(split, ids.end());
      std::map<int, int> renamed;
      for (int id : question) {
        if (window.count(id) && coin(rng) < config.rename_rate) renamed[id] = bucket(rng);
      }
      for (int& id : ids) {
        if (const auto it = renamed.find(id); it != renamed.end()) id = it->second;
      }
      out.push_back(std::move(variant));
    }
  }
  return out;
}

GradCheckResult grad_check(const ModelParams<double>& params, const TrainingExample& example,
                           const GradCheckOptions& options, const GradientFn& gradient_fn) {
  if (!(options.eps > 0.0)) throw ConfigError("grad_check: eps must be positive");
  ModelParams<double> analytic(params.config());
  if (gradient_fn) {
    gradient_fn(params, analytic);
  } else {
    loss_and_gradient(params, example, analytic);
  }

  const Eigen::Index first = options.heads_only ? params.layout().heads_offset : 0;
  std::vector<Eigen::Index> coords(static_cast<std::size_t>(params.size() - first));
  std::iota(coords.begin(), coords.end(), first);
  if (options.max_coords > 0 && options.max_coords < coords.size()) {
    std::mt19937_64 rng(options.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(options.max_coords);
    std::sort(coords.begin(), coords.end());
  }

  ModelParams<double> probe = params;
  const auto loss_at = [&]() { return loss(forward(probe, example.input), example.label); };
  GradCheckResult result;
  for (Eigen::Index c : coords) {
    const double original = probe.values()(c);
    probe.values()(c) = original + options.eps;
    const double up = loss_at();
    probe.values()(c) = original - options.eps;
    const double down = loss_at();
    probe.values()(c) = original;
    const double numeric = (up - down) / (2.0 * options.eps);
    const double ga = analytic.values()(c);
    const double rel = std::abs(ga - numeric) / std::max(1e-8, std::abs(ga) + std::abs(numeric));
    if (result.worst_coord < 0 || rel > result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst_coord = c;
    }
    ++result.checked;
  }
  return result;
}

namespace {
constexpr char kCheckpointMagic[9] = "OBQACKP1";
}

void write_checkpoint(std::ostream& out, const ModelParams<double>& params) {
  using namespace binary_io;
  const EncoderConfig& c = params.config();
  put_magic(out, kCheckpointMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  for (int v : {c.layers, c.hidden, c.heads, c.vocab_hash_size, c.max_window_len,
                c.max_question_len}) {
    put<std::int32_t>(out, v);
  }
  put<std::uint64_t>(out, c.seed);
  put<std::uint64_t>(out, static_cast<std::uint64_t>(params.size()));
  out.write(reinterpret_cast<const char*>(params.values().data()),
            static_cast<std::streamsize>(params.size() * sizeof(double)));
  if (!out) throw DataError("failed writing checkpoint");
}

ModelParams<double> read_checkpoint(std::istream& in) {
  using namespace binary_io;
  expect_magic(in, kCheckpointMagic, "checkpoint");
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  EncoderConfig c;
  c.layers = get<std::int32_t>(in);
  c.hidden = get<std::int32_t>(in);
  c.heads = get<std::int32_t>(in);
  c.vocab_hash_size = get<std::int32_t>(in);
  c.max_window_len = get<std::int32_t>(in);
  c.max_question_len = get<std::int32_t>(in);
  c.seed = get<std::uint64_t>(in);
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint holds an invalid config: ") + e.what());
  }
  ModelParams<double> params(c);
  const auto count = get<std::uint64_t>(in);
  if (count != static_cast<std::uint64_t>(params.size())) {
    throw DataError("checkpoint tensor size does not match its config");
  }
  if (!in.read(reinterpret_cast<char*>(params.values().data()),
               static_cast<std::streamsize>(count * sizeof(double)))) {
    throw DataError("truncated checkpoint");
  }
  if (!params.all_finite()) throw DataError("checkpoint contains non-finite parameters");
  return params;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams<double>& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot open checkpoint for writing: " + path.string());
  write_checkpoint(out, params);
}

ModelParams<double> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint: " + path.string());
  return read_checkpoint(in);
}

}  // namespace obqa
