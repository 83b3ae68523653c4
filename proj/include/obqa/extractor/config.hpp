#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string_view>
#include <vector>

namespace obqa {

// Shape of the encoder stand-in: L transformer blocks of width H with A
// attention heads over hashed word embeddings.
struct EncoderConfig {
  int layers = 2;
  int hidden = 16;
  int heads = 2;
  int vocab_hash_size = 1024;
  int max_window_len = 32;
  int max_question_len = 16;
  std::uint64_t seed = 1;

  int head_dim() const { return hidden / heads; }
  int ffn_size() const { return 4 * hidden; }
  int max_sequence_len() const { return max_question_len + max_window_len; }

  // Throws ConfigError.
  void validate() const;

  bool operator==(const EncoderConfig&) const = default;
};

// A rows x cols block inside the flat parameter vector (column-major).
struct TensorSlot {
  Eigen::Index offset = 0;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  bool decay = false;  // subject to decoupled weight decay

  Eigen::Index size() const { return rows * cols; }
};

// Keys carry no bias: softmax over a row is invariant to it.
struct LayerSlots {
  TensorSlot wq, bq, wk, wv, bv, wo, bo;
  TensorSlot ln1_gain, ln1_bias;
  TensorSlot w1, b1, w2, b2;
  TensorSlot ln2_gain, ln2_bias;
};

// Offsets of every tensor. The output heads are stored last and contiguously,
// starting at heads_offset.
struct ParamLayout {
  TensorSlot token_embedding;    // vocab_hash_size x H
  TensorSlot segment_embedding;  // 2 x H
  TensorSlot match_embedding;    // 1 x H, added where a bucket occurs in both segments
  std::vector<LayerSlots> layers;
  TensorSlot start_weight;  // H x 1
  TensorSlot start_bias;    // 1 x 1
  TensorSlot end_weight;    // H x 1
  TensorSlot end_bias;      // 1 x 1
  TensorSlot ynn_weight;    // 3 x H
  TensorSlot ynn_bias;      // 1 x 3
  Eigen::Index heads_offset = 0;
  Eigen::Index size = 0;

  static ParamLayout for_config(const EncoderConfig& config);
  std::vector<TensorSlot> all_slots() const;
};

// FNV-1a; stable across platforms and runs.
std::uint64_t stable_hash(std::string_view text);

int token_bucket(std::string_view surface, int vocab_hash_size);

}  // namespace obqa
