#pragma once

// Exhaustive reference implementations shared by the unit tests and the
// acceptance binary.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "obqa/decoder.hpp"
#include "obqa/retriever.hpp"

namespace obqa::testing {

// Scores every document straight from raw token counts.
inline std::vector<RankedEntry> brute_force_bm25(const CorpusStore& corpus, const std::string& query,
                                                 std::size_t k) {
  std::vector<std::map<std::string, int>> counts;
  std::vector<double> lengths;
  std::map<std::string, int> df;
  for (const Document& d : corpus.documents()) {
    std::map<std::string, int> c;
    const TokenList toks = tokenize(d.text);
    for (const Token& t : toks) ++c[t.surface];
    for (const auto& [term, n] : c) ++df[term];
    counts.push_back(std::move(c));
    lengths.push_back(static_cast<double>(toks.size()));
  }
  double avg = 0.0;
  for (double l : lengths) avg += l;
  avg /= static_cast<double>(lengths.size());
  const double n_docs = static_cast<double>(corpus.size());

  std::vector<RankedEntry> scored;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    double score = 0.0;
    for (const Token& q : tokenize(query)) {
      const auto it = counts[i].find(q.surface);
      if (it == counts[i].end()) continue;
      const double n_t = df[q.surface];
      const double idf = std::log(1.0 + (n_docs - n_t + 0.5) / (n_t + 0.5));
      const double tf = it->second;
      score += idf * tf * 2.2 / (tf + 1.2 * (1.0 - 0.75 + 0.75 * lengths[i] / avg));
    }
    if (score > 0.0) scored.push_back({corpus[i].doc_id, score});
  }
  std::sort(scored.begin(), scored.end(), [](const RankedEntry& a, const RankedEntry& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.doc_id < b.doc_id;
  });
  if (scored.size() > k) scored.resize(k);
  return scored;
}

// Same documents and order, scores within 1e-9.
inline bool same_ranking(const RankedList& got, const std::vector<RankedEntry>& want) {
  if (got.entries.size() != want.size()) return false;
  for (std::size_t i = 0; i < want.size(); ++i) {
    if (got.entries[i].doc_id != want[i].doc_id) return false;
    if (std::abs(got.entries[i].score - want[i].score) > 1e-9) return false;
  }
  return true;
}

inline CorpusStore random_corpus(std::size_t n_docs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Document> docs;
  for (std::size_t i = 0; i < n_docs; ++i) {
    std::string text;
    const std::size_t len = 5 + rng() % 40;
    for (std::size_t w = 0; w < len; ++w) text += "t" + std::to_string(rng() % 300) + " ";
    char id[16];
    std::snprintf(id, sizeof(id), "d%03zu", i);
    docs.push_back({id, text});
  }
  return CorpusStore(std::move(docs));
}

// Some terms fall outside the corpus vocabulary (t300..t319).
inline std::vector<std::string> random_queries(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::string q;
    const std::size_t len = 1 + rng() % 4;
    for (std::size_t w = 0; w < len; ++w) q += "t" + std::to_string(rng() % 320) + " ";
    out.push_back(q);
  }
  return out;
}

// Exhaustive reading of the pairing rule: every start above the threshold,
// in order, claims the smallest unclaimed qualifying end; with no pair at
// all, the lexicographically first pair maximizing ps + pe.
inline std::vector<TokenSpan> enumerate_spans(const std::vector<double>& ps,
                                              const std::vector<double>& pe, double tau,
                                              std::size_t max_len) {
  const std::size_t n = ps.size();
  std::vector<bool> claimed(n, false);
  std::vector<TokenSpan> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (ps[i] <= tau) continue;
    for (std::size_t j = i; j < n; ++j) {
      if (pe[j] <= tau || claimed[j]) continue;
      if (j - i < max_len) {
        claimed[j] = true;
        out.push_back({i, j, (ps[i] + pe[j]) / 2.0, false});
      }
      break;
    }
  }
  if (!out.empty() || n == 0) return out;
  std::size_t bi = 0, bj = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n && j - i < max_len; ++j) {
      if (ps[i] + pe[j] > ps[bi] + pe[bj]) {
        bi = i;
        bj = j;
      }
    }
  }
  return {{bi, bj, (ps[bi] + pe[bj]) / 2.0, true}};
}

}  // namespace obqa::testing
