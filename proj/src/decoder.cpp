#include "obqa/decoder.hpp"

#include <algorithm>

namespace obqa {

void DecoderConfig::validate() const {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
  if (max_span_len < 1) throw ConfigError("max_span_len must be at least 1");
}

std::vector<TokenSpan> decode_window(std::span<const double> ps, std::span<const double> pe,
                                     double threshold, std::size_t max_span_len) {
  if (ps.size() != pe.size()) {
    throw DataError("decode_window: start and end probability lengths differ");
  }
  DecoderConfig{threshold, max_span_len, " "}.validate();
  const std::size_t n = ps.size();
  std::vector<TokenSpan> spans;
  if (n == 0) return spans;

  std::vector<std::size_t> ends;
  for (std::size_t j = 0; j < n; ++j) {
    if (pe[j] > threshold) ends.push_back(j);
  }
  // Starts arrive in increasing order, so an end passed over by the cursor
  // can never serve a later start.
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(ps[i] > threshold)) continue;
    while (cursor < ends.size() && ends[cursor] < i) ++cursor;
    if (cursor == ends.size()) break;
    const std::size_t j = ends[cursor];
    if (j - i < max_span_len) {
      spans.push_back({i, j, (ps[i] + pe[j]) / 2.0, false});
      ++cursor;
    }
  }
  if (!spans.empty()) return spans;

  TokenSpan best{0, 0, -1.0, true};
  double best_sum = -1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t last = std::min(n - 1, i + max_span_len - 1);
    for (std::size_t j = i; j <= last; ++j) {
      const double sum = ps[i] + pe[j];
      if (sum > best_sum) {
        best_sum = sum;
        best = {i, j, sum / 2.0, true};
      }
    }
  }
  spans.push_back(best);
  return spans;
}

Ynn argmax_ynn(const std::array<double, kNumYnnClasses>& pyn) {
  const auto it = std::max_element(pyn.begin(), pyn.end());
  return static_cast<Ynn>(it - pyn.begin());
}

namespace {

struct Placed {
  std::size_t start;
  std::size_t end;
  double score;
  std::size_t window;
  bool fallback;
};

// Higher score first; earlier and then shorter span on ties.
bool ranks_before(const Placed& a, const Placed& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.start != b.start) return a.start < b.start;
  return a.end < b.end;
}

}  // namespace

DocumentResult decode_document(const Document& doc, const TokenList& doc_tokens,
                               std::span<const WindowResult> windows) {
  if (windows.empty()) throw DataError("decode_document: no window results");
  std::vector<Placed> placed;
  bool any_thresholded = false;
  for (std::size_t w = 0; w < windows.size(); ++w) {
    for (const TokenSpan& s : windows[w].spans) {
      const Placed p{windows[w].first_token + s.start, windows[w].first_token + s.end, s.score, w,
                     s.fallback};
      if (p.end >= doc_tokens.size()) throw DataError("decoded span beyond document end");
      any_thresholded = any_thresholded || !s.fallback;
      placed.push_back(p);
    }
  }
  if (any_thresholded) {
    std::erase_if(placed, [](const Placed& p) { return p.fallback; });
  } else if (!placed.empty()) {
    const Placed best = *std::min_element(placed.begin(), placed.end(), ranks_before);
    placed = {best};
  }

  // Best-first greedy selection: an identical range is an overlap, so
  // duplicates from overlapping windows collapse to their max score.
  std::sort(placed.begin(), placed.end(), ranks_before);
  std::vector<Placed> kept;
  for (const Placed& p : placed) {
    const bool overlaps = std::any_of(kept.begin(), kept.end(), [&](const Placed& k) {
      return p.start <= k.end && k.start <= p.end;
    });
    if (!overlaps) kept.push_back(p);
  }

  DocumentResult result;
  result.doc_id = doc.doc_id;
  if (kept.empty()) {
    result.ynn = argmax_ynn(windows.front().pyn);
    return result;
  }
  result.confidence = kept.front().score;
  result.ynn = argmax_ynn(windows[kept.front().window].pyn);
  std::sort(kept.begin(), kept.end(),
            [](const Placed& a, const Placed& b) { return a.start < b.start; });
  for (const Placed& p : kept) {
    SpanCandidate c;
    c.doc_id = doc.doc_id;
    c.start_tok = p.start;
    c.end_tok = p.end;
    c.char_start = doc_tokens[p.start].char_start;
    c.char_end = doc_tokens[p.end].char_end;
    c.score = p.score;
    c.text = doc.text.substr(c.char_start, c.char_end - c.char_start);
    result.spans.push_back(std::move(c));
  }
  return result;
}

FinalAnswer select_answer(std::span<const DocumentResult> documents,
                          std::string_view join_separator) {
  if (documents.empty()) throw DataError("select_answer: no document results");
  const DocumentResult* winner = nullptr;
  for (const DocumentResult& d : documents) {
    if (d.spans.empty()) continue;
    if (!winner || d.confidence > winner->confidence) winner = &d;
  }
  if (!winner) winner = &documents.front();

  FinalAnswer answer;
  answer.source_doc = winner->doc_id;
  answer.ynn = winner->ynn;
  answer.spans = winner->spans;
  for (const SpanCandidate& s : winner->spans) {
    answer.confidence = std::max(answer.confidence, s.score);
    if (!answer.text.empty()) answer.text += join_separator;
    answer.text += s.text;
  }
  return answer;
}

}  // namespace obqa
