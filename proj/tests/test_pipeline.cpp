#include <doctest.h>

#include <fstream>

#include "obqa/pipeline.hpp"
#include "test_support.hpp"

using namespace obqa;
using nlohmann::json;
using obqa::testing::toy_config;
using obqa::testing::toy_windowing;

namespace {

PipelineConfig toy_pipeline_config() {
  PipelineConfig c;
  c.windowing = toy_windowing();
  c.top_k_docs = 3;
  return c;
}

Pipeline untrained_pipeline(const SynthFixture& fx, PipelineConfig config = toy_pipeline_config()) {
  return Pipeline(std::move(config), fx.corpus, build_index(fx.corpus), init_params<double>(toy_config()));
}

}  // namespace

TEST_CASE("pipeline config parsing") {
  const json j = json::parse(R"({
    "name": "toy",
    "corpus_root": "corpus",
    "index": "/abs/x.idx",
    "checkpoint": "m.ckpt",
    "retriever": {"kind": "remote", "url": "http://localhost:9", "timeout_ms": 250, "fallback": "none"},
    "top_k_docs": 4,
    "max_window_len": 32,
    "stride": 16,
    "threshold": 0.4,
    "max_span_len": 12,
    "join_separator": " | ",
    "eval_ks": [1, 5],
    "seed": 9
  })");
  const PipelineConfig c = PipelineConfig::from_json(j, "/base");
  CHECK(c.name == "toy");
  CHECK(c.corpus_root == std::filesystem::path("/base/corpus"));
  CHECK(c.index_path == std::filesystem::path("/abs/x.idx"));
  CHECK(c.checkpoint == std::filesystem::path("/base/m.ckpt"));
  CHECK(c.retriever.kind == RetrieverSettings::Kind::kRemote);
  CHECK(c.retriever.endpoint.timeout_ms == 250);
  CHECK_FALSE(c.retriever.fallback_to_builtin);
  CHECK(c.top_k_docs == 4);
  CHECK(c.windowing.max_window_len == 32);
  CHECK(c.decoder.threshold == 0.4);
  CHECK(c.decoder.join_separator == " | ");
  CHECK(c.eval.ks == std::vector<std::size_t>{1, 5});
  CHECK(c.seed == 9);

  const PipelineConfig again = PipelineConfig::from_json(c.to_json());
  CHECK(again.to_json() == c.to_json());

  CHECK_THROWS_AS(PipelineConfig::from_json(json::parse(R"({"retriever":{"kind":"magic"}})")), ConfigError);
  CHECK_THROWS_AS(PipelineConfig::from_json(json::parse(R"({"stride": 0})")), ConfigError);
  CHECK_THROWS_AS(PipelineConfig::from_json(json::parse(R"({"threshold": 1.5})")), ConfigError);
  CHECK_THROWS_AS(PipelineConfig::from_json(json::parse(R"({"top_k_docs": "five"})")), ConfigError);
  CHECK_THROWS_AS(PipelineConfig::from_json(json::array()), ConfigError);
  CHECK_THROWS_AS(PipelineConfig::load("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("pipeline construction checks its artifacts") {
  const SynthFixture fx = synth_generate(1, 8, 2);
  PipelineConfig wide = toy_pipeline_config();
  wide.windowing = {64, 32};
  CHECK_THROWS_AS(untrained_pipeline(fx, wide), ConfigError);

  PipelineConfig missing = toy_pipeline_config();
  missing.corpus_root = "/nonexistent";
  missing.checkpoint = "/nonexistent/m.ckpt";
  CHECK_THROWS_AS(Pipeline::load(missing), ConfigError);
}

TEST_CASE("answers carry provenance for every retrieved document") {
  const SynthFixture fx = synth_generate(2, 20, 5);
  const Pipeline pipeline = untrained_pipeline(fx);
  const AnswerResult r = pipeline.answer(fx.questions[0].question);
  const RankedList ranking = retrieve(pipeline.index(), fx.questions[0].question, 3);
  REQUIRE(r.provenance.size() == ranking.size());
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    CHECK(r.provenance[i].doc_id == ranking.entries[i].doc_id);
    CHECK(r.provenance[i].retrieval_score == ranking.entries[i].score);
  }
  CHECK_FALSE(r.answer.text.empty());
  CHECK_FALSE(r.retrieval_fallback);

  const json j = to_json(r);
  CHECK(j["provenance"].size() == ranking.size());
  CHECK(j.contains("ynn"));
  CHECK(j.contains("confidence"));
}

TEST_CASE("a question with no index hits still gets an answer") {
  const SynthFixture fx = synth_generate(2, 20, 5);
  const Pipeline pipeline = untrained_pipeline(fx);
  const AnswerResult r = pipeline.answer("zzqx qqvv");
  CHECK(r.retrieval_fallback);
  CHECK_FALSE(r.answer.text.empty());
  REQUIRE(r.provenance.size() == 1);
  CHECK(to_json(r)["retrieval_fallback"] == true);
}

TEST_CASE("closest document by character trigrams") {
  const CorpusStore corpus(std::vector<Document>{{"a", "elephants roam"}, {"b", "database replicas"}});
  CHECK(closest_document(corpus, "replication").entries[0].doc_id == "b");
  CHECK(closest_document(corpus, "!!!").entries[0].doc_id == "a");
  CHECK(closest_document(CorpusStore{}, "x").empty());
}

TEST_CASE("answer scoring with stub extractors") {
  const SynthFixture fx = synth_generate(4, 30, 12);
  const auto gold = [](const QAExample& q) {
    FinalAnswer a;
    a.text = q.gold_text;
    a.ynn = q.gold_ynn;
    return a;
  };
  const ScoreReport perfect = evaluate_answers(fx.questions, gold);
  CHECK(perfect.f1 == 1.0);
  CHECK(perfect.em == 1.0);
  CHECK(perfect.ynn_accuracy == 1.0);

  const ScoreReport empty = evaluate_answers(fx.questions, [](const QAExample&) { return FinalAnswer{}; });
  CHECK(empty.f1 == 0.0);
  CHECK(empty.em == 0.0);

  std::vector<QuestionError> errors;
  const ScoreReport flaky = evaluate_answers(
      fx.questions,
      [&](const QAExample& q) {
        if (q.question_id == fx.questions[1].question_id) throw DataError("boom");
        return gold(q);
      },
      &errors, 3);
  REQUIRE(errors.size() == 1);
  CHECK(errors[0].question_id == fx.questions[1].question_id);
  CHECK(flaky.per_question.size() == fx.questions.size());
  CHECK(flaky.f1 == doctest::Approx(11.0 / 12.0));
}

TEST_CASE("retriever evaluation on the synthetic fixture") {
  const SynthFixture fx = synth_generate(7, 200, 100);
  const InvertedIndex index = build_index(fx.corpus);
  const RankFn rank = [&](std::string_view q, std::size_t k) { return retrieve(index, q, k); };
  const RetrieverTable table = evaluate_retriever(fx.questions, rank, RetrieverEvalConfig{});
  REQUIRE(table.rows.size() == 10);
  CHECK(table.rows[0].k == 1);
  CHECK(table.rows[0].hit == 1.0);
  for (const RetrieverRow& row : table.rows) {
    CHECK(row.precision <= 1.0 / static_cast<double>(row.k) + 1e-12);
  }
  CHECK(table.rows[2].k == 5);
  CHECK(table.rows[2].precision <= 0.2);

  const std::string text = retriever_table_text(table, "builtin");
  CHECK(text.find("P@K") != std::string::npos);
  CHECK(text.find("hit@K") != std::string::npos);
  const json j = to_json(table);
  CHECK(j["rows"][0].contains("precision_at_k"));
  CHECK(j["rows"][0].contains("hit_at_k"));
}

TEST_CASE("hit@K is non-decreasing for any ranking") {
  const SynthFixture fx = synth_generate(7, 60, 30);
  std::mt19937_64 rng(3);
  std::vector<RankedList> rankings;
  for (const QAExample& q : fx.questions) {
    RankedList r;
    std::vector<std::string> ids;
    for (const Document& d : fx.corpus.documents()) ids.push_back(d.doc_id);
    std::shuffle(ids.begin(), ids.end(), rng);
    for (std::size_t i = 0; i < 60; ++i) r.entries.push_back({ids[i], 60.0 - static_cast<double>(i)});
    if (rng() % 2) r.entries.insert(r.entries.begin(), {q.gold_doc_id, 100.0});
    normalize_ranking(r, 60);
    rankings.push_back(std::move(r));
  }
  const RetrieverTable table = evaluate_rankings(fx.questions, rankings, RetrieverEvalConfig{});
  for (std::size_t i = 1; i < table.rows.size(); ++i) {
    CHECK(table.rows[i].hit >= table.rows[i - 1].hit);
  }
}

TEST_CASE("a gold document sharing no query term is never hit") {
  const CorpusStore corpus(std::vector<Document>{
      {"gold", "zebra stripes"}, {"other", "apple orchard"}, {"third", "apple pie"}});
  const InvertedIndex index = build_index(corpus);
  QAExample q;
  q.question_id = "adv";
  q.question = "apple";
  q.gold_doc_id = "gold";
  const std::vector<QAExample> dataset{q};
  const RankFn rank = [&](std::string_view text, std::size_t k) { return retrieve(index, text, k); };
  const RetrieverTable table = evaluate_retriever(dataset, rank, RetrieverEvalConfig{});
  for (const RetrieverRow& row : table.rows) CHECK(row.hit == 0.0);
}

TEST_CASE("retriever evaluation needs gold documents") {
  std::vector<QAExample> dataset(3);
  dataset[0].question_id = "a";
  dataset[0].gold_doc_id = "d";
  dataset[1].question_id = "b";
  dataset[2].question_id = "c";
  const RankFn rank = [](std::string_view, std::size_t) { return RankedList{}; };
  try {
    evaluate_retriever(dataset, rank, RetrieverEvalConfig{});
    FAIL("expected a DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("b") != std::string::npos);
    CHECK(msg.find("c") != std::string::npos);
  }
}

TEST_CASE("end-to-end reports are deterministic") {
  const SynthFixture fx = synth_generate(5, 30, 10);
  const Pipeline pipeline = untrained_pipeline(fx);
  const EvalRunReport a = evaluate_e2e(fx.questions, pipeline);
  const EvalRunReport b = evaluate_e2e(fx.questions, pipeline);
  CHECK(to_json(a, false).dump() == to_json(b, false).dump());
  CHECK_FALSE(to_json(a, false).contains("timing"));
  CHECK(to_json(a, true).contains("timing"));
  CHECK(a.retriever.rows.size() == 10);
  CHECK(a.extractor.per_question.size() == 10);
  const std::string text = report_text(a);
  CHECK(text.find("hit@K") != std::string::npos);
  CHECK(text.find("EM") != std::string::npos);
}

TEST_CASE("a trained toy model answers a planted question") {
  const SynthFixture fx = synth_generate(5, 60, 60);
  const auto windows = make_training_set(fx.questions, &fx.corpus, toy_windowing());
  const auto config = toy_config(5);
  OptimizerConfig opt;
  opt.learning_rate = 3e-3;
  opt.epochs = 60;
  opt.seed = 5;
  const auto trained = train(to_training_examples(windows, config), init_params<double>(config), opt);

  const Pipeline pipeline(toy_pipeline_config(), fx.corpus, build_index(fx.corpus), trained.params);
  const auto it = std::find_if(fx.questions.begin(), fx.questions.end(),
                               [](const QAExample& q) { return q.gold_doc_id == "doc-042.txt"; });
  REQUIRE(it != fx.questions.end());
  const AnswerResult r = pipeline.answer(it->question);
  CHECK(r.answer.source_doc == "doc-042.txt");
  CHECK(token_f1(r.answer.text, it->gold_text) >= 0.8);
  CHECK(r.answer.ynn == it->gold_ynn);
}
