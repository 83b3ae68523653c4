#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "obqa/retriever.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace obqa;
using namespace obqa::testing;

namespace {

CorpusStore make_corpus(std::vector<std::pair<std::string, std::string>> docs) {
  std::vector<Document> out;
  for (auto& [id, text] : docs) out.push_back({id, text});
  return CorpusStore(std::move(out));
}

RankedList ranked(std::vector<std::string> ids) {
  RankedList list;
  double score = 10.0;
  for (auto& id : ids) list.entries.push_back({id, score--});
  return list;
}

}  // namespace

TEST_CASE("build_index examples") {
  const InvertedIndex index = build_index(make_corpus({{"d1", "cat sat"}, {"d2", "dog ran"}}));
  CHECK(index.num_docs() == 2);
  CHECK(index.avg_doc_len() == 2.0);
  CHECK(index.vocabulary_size() == 4);
  REQUIRE(index.postings("cat").size() == 1);
  CHECK(index.postings("cat")[0] == Posting{0, 1});
  CHECK(index.postings("ran")[0] == Posting{1, 1});
  CHECK(index.postings("bird").empty());

  const InvertedIndex twice = build_index(make_corpus({{"d1", "cat cat"}}));
  CHECK(twice.postings("cat")[0] == Posting{0, 2});

  CHECK_THROWS_AS(build_index(CorpusStore{}), DataError);
}

TEST_CASE("BM25 examples") {
  const InvertedIndex index = build_index(make_corpus({{"d1", "cat sat"}, {"d2", "dog ran"}}));
  CHECK(bm25_idf(2, 1) == doctest::Approx(std::log(2.0)));
  CHECK(score_bm25(index, tokenize("cat"), "d1") == doctest::Approx(0.6931).epsilon(1e-4));
  CHECK(score_bm25(index, tokenize("bird"), "d1") == 0.0);
  CHECK(score_bm25(index, tokenize("cat"), "d2") == 0.0);
  CHECK(score_bm25(index, tokenize("cat cat"), "d1") ==
        doctest::Approx(2.0 * std::log(2.0)));
  CHECK_THROWS_AS(score_bm25(index, tokenize("cat"), "d9"), DataError);
}

TEST_CASE("retrieve examples") {
  const InvertedIndex index =
      build_index(make_corpus({{"a", "red apple"}, {"b", "green apple"}, {"c", "zebra stripes"}}));
  const RankedList zebra = retrieve(index, "Zebra?", 3);
  REQUIRE(zebra.size() == 1);
  CHECK(zebra.entries[0].doc_id == "c");

  CHECK(retrieve(index, "nothing matches", 5).empty());

  const RankedList apple = retrieve(index, "apple", 5);
  REQUIRE(apple.size() == 2);
  CHECK(apple.entries[0].doc_id == "a");  // equal scores, doc_id order
  CHECK(apple.entries[0].score == apple.entries[1].score);

  CHECK(retrieve(index, "apple", 1).size() == 1);
  CHECK_THROWS_AS(retrieve(index, "apple", 0), ConfigError);
}

TEST_CASE("retrieve matches brute-force scoring") {
  const CorpusStore corpus = random_corpus(500, 11);
  const InvertedIndex index = build_index(corpus);
  for (const std::string& q : random_queries(100, 12)) {
    for (std::size_t k : {1, 5, 60, 500}) {
      CHECK(same_ranking(retrieve(index, q, k), brute_force_bm25(corpus, q, k)));
    }
  }
}

TEST_CASE("index round trip preserves retrieval") {
  const CorpusStore corpus = random_corpus(120, 21);
  const InvertedIndex index = build_index(corpus);
  std::stringstream buf;
  index.write(buf);
  const InvertedIndex loaded = InvertedIndex::read(buf);
  CHECK(loaded.doc_ids() == index.doc_ids());
  CHECK(loaded.doc_lengths() == index.doc_lengths());
  CHECK(loaded.avg_doc_len() == index.avg_doc_len());
  for (const std::string& q : random_queries(100, 22)) {
    const RankedList a = retrieve(index, q, 10);
    const RankedList b = retrieve(loaded, q, 10);
    CHECK(a.entries == b.entries);
  }

  std::stringstream again;
  loaded.write(again);
  CHECK(again.str() == buf.str());

  obqa::testing::TempDir dir;
  index.save(dir.path() / "x.idx");
  CHECK(InvertedIndex::load(dir.path() / "x.idx").doc_ids() == index.doc_ids());
}

TEST_CASE("damaged index files are rejected") {
  const InvertedIndex index = build_index(make_corpus({{"d1", "cat sat"}}));
  std::stringstream buf;
  index.write(buf);
  const std::string bytes = buf.str();
  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(InvertedIndex::read(truncated), DataError);
  std::string wrong = bytes;
  wrong[1] = '?';
  std::stringstream bad(wrong);
  CHECK_THROWS_AS(InvertedIndex::read(bad), DataError);
}

TEST_CASE("precision and hit at K") {
  CHECK(precision_at_k(ranked({"d3", "d7", "d9"}), {"d7"}, 3) == doctest::Approx(1.0 / 3.0));
  CHECK(precision_at_k(ranked({"d3", "d7"}), {"d3", "d7"}, 2) == 1.0);
  CHECK(precision_at_k(ranked({"d3", "d7"}), {"d1"}, 2) == 0.0);
  CHECK(precision_at_k(RankedList{}, {"d1"}, 2) == 0.0);
  // Short rankings still divide by k.
  CHECK(precision_at_k(ranked({"d7"}), {"d7"}, 5) == 0.2);

  CHECK(hit_at_k(ranked({"d3", "d7"}), "d7", 3) == 1);
  CHECK(hit_at_k(ranked({"d3", "d7"}), "d7", 1) == 0);
  CHECK(hit_at_k(ranked({"d3", "d7"}), "d1", 3) == 0);
}

TEST_CASE("hit@K is monotone and single-gold precision is bounded") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> ids;
    for (int i = 0; i < 20; ++i) ids.push_back("d" + std::to_string(i));
    std::shuffle(ids.begin(), ids.end(), rng);
    ids.resize(rng() % 20);
    const RankedList list = ranked(ids);
    const std::string gold = "d" + std::to_string(rng() % 20);
    int prev = 0;
    for (std::size_t k = 1; k <= 25; ++k) {
      const int h = hit_at_k(list, gold, k);
      CHECK(h >= prev);
      prev = h;
      const double p = precision_at_k(list, {gold}, k);
      CHECK(p >= 0.0);
      CHECK(p <= 1.0 / static_cast<double>(k) + 1e-15);
    }
  }
}

TEST_CASE("normalize_ranking sorts, dedupes and truncates") {
  RankedList list;
  list.entries = {{"b", 1.0}, {"a", 2.0}, {"c", 2.0}, {"a", 0.5}};
  normalize_ranking(list, 2);
  REQUIRE(list.size() == 2);
  CHECK(list.entries[0] == RankedEntry{"a", 2.0});
  CHECK(list.entries[1] == RankedEntry{"c", 2.0});
}

TEST_CASE("evaluation K schedule validation") {
  RetrieverEvalConfig config;
  CHECK_NOTHROW(config.validate());
  config.ks = {1, 3, 3};
  CHECK_THROWS_AS(config.validate(), ConfigError);
  config.ks = {0, 1};
  CHECK_THROWS_AS(config.validate(), ConfigError);
}
