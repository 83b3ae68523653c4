#include "obqa/retriever.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "binary_io.hpp"
#include "obqa/common.hpp"

namespace obqa {

namespace {
constexpr char kIndexMagic[9] = "OBQAIDX1";
}

std::optional<std::uint32_t> InvertedIndex::doc_ordinal(std::string_view doc_id) const {
  auto it = std::lower_bound(doc_ids_.begin(), doc_ids_.end(), doc_id);
  if (it == doc_ids_.end() || *it != doc_id) return std::nullopt;
  return static_cast<std::uint32_t>(it - doc_ids_.begin());
}

std::span<const Posting> InvertedIndex::postings(const std::string& term) const {
  auto it = postings_.find(term);
  if (it == postings_.end()) return {};
  return it->second;
}

void InvertedIndex::finalize() {
  const double total =
      std::accumulate(doc_lengths_.begin(), doc_lengths_.end(), 0.0);
  avg_doc_len_ = doc_lengths_.empty() ? 0.0 : total / static_cast<double>(doc_lengths_.size());
}

InvertedIndex build_index(const CorpusStore& corpus) {
  if (corpus.empty()) throw DataError("cannot build an index over an empty corpus");
  InvertedIndex index;
  index.doc_ids_.reserve(corpus.size());
  index.doc_lengths_.reserve(corpus.size());
  for (std::uint32_t d = 0; d < corpus.size(); ++d) {
    const Document& doc = corpus[d];
    const TokenList tokens = tokenize(doc.text);
    std::map<std::string, std::uint32_t> counts;
    for (const Token& t : tokens) ++counts[t.surface];
    // Documents arrive in ordinal order, so every postings list stays sorted.
    for (auto& [term, tf] : counts) index.postings_[term].push_back({d, tf});
    index.doc_ids_.push_back(doc.doc_id);
    index.doc_lengths_.push_back(static_cast<std::uint32_t>(tokens.size()));
  }
  index.finalize();
  return index;
}

double bm25_idf(std::size_t num_docs, std::size_t doc_freq) {
  const double n = static_cast<double>(num_docs);
  const double df = static_cast<double>(doc_freq);
  return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

namespace {

double term_weight(double idf, double tf, double doc_len, double avg_len,
                   const Bm25Params& p) {
  const double norm = avg_len > 0.0 ? doc_len / avg_len : 0.0;
  return idf * tf * (p.k1 + 1.0) / (tf + p.k1 * (1.0 - p.b + p.b * norm));
}

}  // namespace

double score_bm25(const InvertedIndex& index, const TokenList& query_terms,
                  std::string_view doc_id, const Bm25Params& params) {
  const auto ordinal = index.doc_ordinal(doc_id);
  if (!ordinal) throw DataError("unknown doc_id: " + std::string(doc_id));
  const double doc_len = index.doc_lengths()[*ordinal];
  double score = 0.0;
  for (const Token& term : query_terms) {
    const auto plist = index.postings(term.surface);
    auto it = std::lower_bound(plist.begin(), plist.end(), *ordinal,
                               [](const Posting& p, std::uint32_t d) { return p.doc < d; });
    if (it == plist.end() || it->doc != *ordinal) continue;
    score += term_weight(bm25_idf(index.num_docs(), plist.size()), it->tf, doc_len,
                         index.avg_doc_len(), params);
  }
  return score;
}

void normalize_ranking(RankedList& list, std::size_t k) {
  auto& e = list.entries;
  std::stable_sort(e.begin(), e.end(), [](const RankedEntry& a, const RankedEntry& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.doc_id < b.doc_id;
  });
  std::vector<RankedEntry> unique;
  unique.reserve(std::min(k, e.size()));
  for (auto& entry : e) {
    if (unique.size() == k) break;
    const bool seen = std::any_of(unique.begin(), unique.end(),
                                  [&](const RankedEntry& u) { return u.doc_id == entry.doc_id; });
    if (!seen) unique.push_back(std::move(entry));
  }
  e = std::move(unique);
}

RankedList retrieve(const InvertedIndex& index, std::string_view query, std::size_t k,
                    const Bm25Params& params) {
  if (k == 0) throw ConfigError("retrieve: k must be at least 1");
  RankedList result;
  result.query = std::string(query);
  // Term-at-a-time accumulation over the postings of each query token.
  std::vector<double> scores(index.num_docs(), 0.0);
  std::vector<std::uint32_t> touched;
  for (const Token& term : tokenize(query)) {
    const auto plist = index.postings(term.surface);
    if (plist.empty()) continue;
    const double idf = bm25_idf(index.num_docs(), plist.size());
    for (const Posting& p : plist) {
      if (scores[p.doc] == 0.0) touched.push_back(p.doc);
      scores[p.doc] += term_weight(idf, p.tf, index.doc_lengths()[p.doc],
                                   index.avg_doc_len(), params);
    }
  }
  std::vector<std::uint32_t> candidates;
  candidates.reserve(touched.size());
  for (std::uint32_t d : touched) {
    if (scores[d] > 0.0) candidates.push_back(d);
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  const auto better = [&](std::uint32_t a, std::uint32_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;  // ordinals follow doc_id order
  };
  const std::size_t take = std::min(k, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take),
                    candidates.end(), better);
  result.entries.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    result.entries.push_back({index.doc_ids()[candidates[i]], scores[candidates[i]]});
  }
  return result;
}

void RetrieverEvalConfig::validate() const {
  if (ks.empty()) throw ConfigError("ks must not be empty");
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] < 1) throw ConfigError("every K must be >= 1");
    if (i > 0 && ks[i] <= ks[i - 1]) throw ConfigError("ks must be strictly increasing");
  }
}

double precision_at_k(const RankedList& ranked, const std::set<std::string>& relevant,
                      std::size_t k) {
  if (k == 0) throw ConfigError("precision_at_k: k must be at least 1");
  if (ranked.empty()) return 0.0;
  const std::size_t n = std::min(k, ranked.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) hits += relevant.count(ranked.entries[i].doc_id);
  return static_cast<double>(hits) / static_cast<double>(k);
}

int hit_at_k(const RankedList& ranked, std::string_view gold, std::size_t k) {
  if (k == 0) throw ConfigError("hit_at_k: k must be at least 1");
  const std::size_t n = std::min(k, ranked.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (ranked.entries[i].doc_id == gold) return 1;
  }
  return 0;
}

// Layout: magic, version, num_docs, [doc_id, length]*, num_terms,
// [term, num_postings, [doc, tf]*]* with terms in lexicographic order.
void InvertedIndex::write(std::ostream& out) const {
  using namespace binary_io;
  put_magic(out, kIndexMagic);
  put<std::uint32_t>(out, kFormatVersion);
  put<std::uint64_t>(out, doc_ids_.size());
  for (std::size_t d = 0; d < doc_ids_.size(); ++d) {
    put_string(out, doc_ids_[d]);
    put<std::uint32_t>(out, doc_lengths_[d]);
  }
  std::vector<const std::string*> terms;
  terms.reserve(postings_.size());
  for (const auto& [term, plist] : postings_) terms.push_back(&term);
  std::sort(terms.begin(), terms.end(),
            [](const std::string* a, const std::string* b) { return *a < *b; });
  put<std::uint64_t>(out, terms.size());
  for (const std::string* term : terms) {
    const auto& plist = postings_.at(*term);
    put_string(out, *term);
    put<std::uint64_t>(out, plist.size());
    for (const Posting& p : plist) {
      put<std::uint32_t>(out, p.doc);
      put<std::uint32_t>(out, p.tf);
    }
  }
  if (!out) throw DataError("failed writing index");
}

InvertedIndex InvertedIndex::read(std::istream& in) {
  using namespace binary_io;
  expect_magic(in, kIndexMagic, "index");
  const auto version = get<std::uint32_t>(in);
  if (version != kFormatVersion) {
    throw DataError("unsupported index format version " + std::to_string(version));
  }
  InvertedIndex index;
  const auto num_docs = get<std::uint64_t>(in);
  for (std::uint64_t d = 0; d < num_docs; ++d) {
    index.doc_ids_.push_back(get_string(in));
    index.doc_lengths_.push_back(get<std::uint32_t>(in));
    if (d > 0 && !(index.doc_ids_[d - 1] < index.doc_ids_[d])) {
      throw DataError("index doc table is not sorted");
    }
  }
  const auto num_terms = get<std::uint64_t>(in);
  for (std::uint64_t t = 0; t < num_terms; ++t) {
    std::string term = get_string(in);
    const auto n = get<std::uint64_t>(in);
    if (n > num_docs) throw DataError("postings list longer than document table");
    std::vector<Posting> plist;
    plist.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
      Posting p;
      p.doc = get<std::uint32_t>(in);
      p.tf = get<std::uint32_t>(in);
      if (p.doc >= num_docs) throw DataError("posting references unknown document");
      plist.push_back(p);
    }
    index.postings_.emplace(std::move(term), std::move(plist));
  }
  index.finalize();
  return index;
}

void InvertedIndex::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot open index file for writing: " + path.string());
  write(out);
}

InvertedIndex InvertedIndex::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open index file: " + path.string());
  return read(in);
}

}  // namespace obqa
