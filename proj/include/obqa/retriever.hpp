#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "obqa/corpus.hpp"

namespace obqa {

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

struct Posting {
  std::uint32_t doc = 0;  // ordinal into InvertedIndex::doc_ids()
  std::uint32_t tf = 0;

  bool operator==(const Posting&) const = default;
};

// Term -> postings over a fixed, doc_id-sorted document table. Postings of
// every term are sorted by document ordinal.
class InvertedIndex {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  InvertedIndex() = default;

  std::size_t num_docs() const { return doc_ids_.size(); }
  double avg_doc_len() const { return avg_doc_len_; }
  std::size_t vocabulary_size() const { return postings_.size(); }

  const std::vector<std::string>& doc_ids() const { return doc_ids_; }
  const std::vector<std::uint32_t>& doc_lengths() const { return doc_lengths_; }
  std::optional<std::uint32_t> doc_ordinal(std::string_view doc_id) const;

  // Empty span for unknown terms.
  std::span<const Posting> postings(const std::string& term) const;
  std::size_t document_frequency(const std::string& term) const {
    return postings(term).size();
  }

  void write(std::ostream& out) const;
  static InvertedIndex read(std::istream& in);
  void save(const std::filesystem::path& path) const;
  static InvertedIndex load(const std::filesystem::path& path);

  friend InvertedIndex build_index(const CorpusStore& corpus);

 private:
  void finalize();

  std::vector<std::string> doc_ids_;
  std::vector<std::uint32_t> doc_lengths_;
  std::unordered_map<std::string, std::vector<Posting>> postings_;
  double avg_doc_len_ = 0.0;
};

// Throws DataError on an empty corpus.
InvertedIndex build_index(const CorpusStore& corpus);

double bm25_idf(std::size_t num_docs, std::size_t doc_freq);

// Sum over query tokens (repeats count) of the BM25 term weight for doc_id.
// Throws DataError for an unknown doc_id.
double score_bm25(const InvertedIndex& index, const TokenList& query_terms,
                  std::string_view doc_id, const Bm25Params& params = {});

struct RankedEntry {
  std::string doc_id;
  double score = 0.0;

  bool operator==(const RankedEntry&) const = default;
};

struct RankedList {
  std::string query;
  std::vector<RankedEntry> entries;  // score descending, doc_id ascending on ties

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
};

// Sorts by (score desc, doc_id asc), drops repeated doc_ids (first kept) and
// truncates to k.
void normalize_ranking(RankedList& list, std::size_t k);

// Top-k by BM25; zero-score documents are never returned.
RankedList retrieve(const InvertedIndex& index, std::string_view query, std::size_t k,
                    const Bm25Params& params = {});

struct RetrieverEvalConfig {
  std::vector<std::size_t> ks{1, 3, 5, 7, 9, 13, 22, 30, 40, 60};

  void validate() const;
};

// |top-min(k, n) intersect relevant| / k; 0 for an empty ranking.
double precision_at_k(const RankedList& ranked, const std::set<std::string>& relevant,
                      std::size_t k);

// 1 iff gold is among the first min(k, n) entries.
int hit_at_k(const RankedList& ranked, std::string_view gold, std::size_t k);

}  // namespace obqa
