#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "obqa/common.hpp"
#include "obqa/corpus.hpp"

namespace obqa {

struct DecoderConfig {
  double threshold = 0.5;
  std::size_t max_span_len = 30;
  std::string join_separator = " ";

  void validate() const;
};

// Inclusive token range local to one window.
struct TokenSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  double score = 0.0;     // (ps[start] + pe[end]) / 2
  bool fallback = false;  // argmax floor, no probability cleared the threshold

  bool operator==(const TokenSpan&) const = default;
};

// Starts {i : ps[i] > threshold} are visited left to right; each takes the
// nearest unused end j >= i with pe[j] > threshold and j - i < max_span_len,
// or is dropped. When nothing pairs, the single pair maximizing
// ps[i] + pe[j] (earliest on ties) is returned with fallback set.
// Throws DataError on a length mismatch and ConfigError on bad parameters.
std::vector<TokenSpan> decode_window(std::span<const double> ps, std::span<const double> pe,
                                     double threshold, std::size_t max_span_len);

struct SpanCandidate {
  std::string doc_id;
  std::size_t start_tok = 0;  // document token coordinates, inclusive
  std::size_t end_tok = 0;
  std::size_t char_start = 0;
  std::size_t char_end = 0;  // exclusive
  double score = 0.0;
  std::string text;
};

struct WindowResult {
  std::size_t first_token = 0;  // offset of the window inside the document
  std::vector<TokenSpan> spans;
  std::array<double, kNumYnnClasses> pyn{};
};

struct DocumentResult {
  std::string doc_id;
  std::vector<SpanCandidate> spans;  // document order, non-overlapping
  Ynn ynn = Ynn::kNone;
  double confidence = 0.0;
};

Ynn argmax_ynn(const std::array<double, kNumYnnClasses>& pyn);

// Merges the windows of one document. Fallback spans are discarded when any
// window produced a thresholded span; otherwise only the best fallback span
// survives. Identical ranges collapse to the max score, overlapping ranges
// keep the higher-scoring one. The verdict comes from the window that
// produced the best span.
DocumentResult decode_document(const Document& doc, const TokenList& doc_tokens,
                               std::span<const WindowResult> windows);

struct FinalAnswer {
  std::string text;
  std::vector<SpanCandidate> spans;
  Ynn ynn = Ynn::kNone;
  std::string source_doc;
  double confidence = 0.0;
};

// documents must be in retrieval order; ties on confidence go to the earlier
// one. Throws DataError on empty input.
FinalAnswer select_answer(std::span<const DocumentResult> documents,
                          std::string_view join_separator = " ");

}  // namespace obqa
