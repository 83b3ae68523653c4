#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "obqa/corpus.hpp"
#include "obqa/datasets.hpp"
#include "obqa/decoder.hpp"
#include "obqa/extractor.hpp"
#include "obqa/metrics.hpp"
#include "obqa/remote_retriever.hpp"
#include "obqa/retriever.hpp"

namespace obqa {

struct RetrieverSettings {
  enum class Kind { kBuiltin, kRemote };
  Kind kind = Kind::kBuiltin;
  RemoteEndpoint endpoint;
  bool fallback_to_builtin = true;  // on transport errors from the remote service
};

struct PipelineConfig {
  std::string name = "default";
  std::filesystem::path corpus_root;
  std::filesystem::path index_path;  // empty: build the index in memory
  std::filesystem::path checkpoint;
  RetrieverSettings retriever;
  std::size_t top_k_docs = 5;
  WindowingConfig windowing;
  DecoderConfig decoder;
  Bm25Params bm25;
  RetrieverEvalConfig eval;
  std::uint64_t seed = 1;
  std::size_t threads = 1;

  void validate() const;

  // Relative paths resolve against base_dir. Throws ConfigError.
  static PipelineConfig from_json(const nlohmann::json& j,
                                  const std::filesystem::path& base_dir = {});
  static PipelineConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

struct ProvenanceEntry {
  std::string doc_id;
  double retrieval_score = 0.0;
  double confidence = 0.0;
};

struct AnswerResult {
  FinalAnswer answer;
  std::vector<ProvenanceEntry> provenance;  // retrieval order
  bool retrieval_fallback = false;          // nothing matched; closest document used
  std::string retriever_note;               // set when the remote service failed over
};

nlohmann::json to_json(const FinalAnswer& answer);
nlohmann::json to_json(const AnswerResult& result);

// Document whose character trigrams overlap the query most (doc_id order on
// ties); used when retrieval returns nothing.
RankedList closest_document(const CorpusStore& corpus, std::string_view query);

// retriever -> windowed extractor -> decoder over one immutable corpus/model.
class Pipeline {
 public:
  Pipeline(PipelineConfig config, CorpusStore corpus, InvertedIndex index,
           ModelParams<double> model);

  // Reads the corpus, index (or builds it) and checkpoint named by config.
  static Pipeline load(const PipelineConfig& config);

  const PipelineConfig& config() const { return config_; }
  const CorpusStore& corpus() const { return corpus_; }
  const InvertedIndex& index() const { return index_; }
  const ModelParams<double>& model() const { return model_; }

  // Ranked documents from the configured retriever. note receives a message
  // when the remote service failed and the built-in index answered instead.
  RankedList rank(std::string_view question, std::size_t k, std::string* note = nullptr) const;

  // Runs the extractor over every window of doc.
  DocumentResult extract(const Document& doc, const TokenList& question) const;

  AnswerResult answer(std::string_view question) const;
  // Extraction over a caller-supplied ranking; the first top_k_docs entries
  // are used.
  AnswerResult answer_with_ranking(std::string_view question, const RankedList& ranking) const;

 private:
  PipelineConfig config_;
  CorpusStore corpus_;
  InvertedIndex index_;
  ModelParams<double> model_;
};

struct RetrieverRow {
  std::size_t k = 0;
  double precision = 0.0;  // strict P@K, denominator K
  double hit = 0.0;        // gold document within the top K
};

struct RetrieverTable {
  std::size_t questions = 0;
  std::vector<RetrieverRow> rows;
};

using RankFn = std::function<RankedList(std::string_view question, std::size_t k)>;

// Throws DataError listing question ids without a gold_doc_id.
RetrieverTable evaluate_retriever(std::span<const QAExample> dataset, const RankFn& rank,
                                  const RetrieverEvalConfig& config);
RetrieverTable evaluate_rankings(std::span<const QAExample> dataset,
                                 std::span<const RankedList> rankings,
                                 const RetrieverEvalConfig& config);

nlohmann::json to_json(const RetrieverTable& table);
std::string retriever_table_text(const RetrieverTable& table, std::string_view name);

struct QuestionError {
  std::string question_id;
  std::string message;
};

// Scores answer_fn over the dataset; a question whose answer_fn throws is
// recorded in errors and scored as wrong.
ScoreReport evaluate_answers(std::span<const QAExample> dataset,
                             const std::function<FinalAnswer(const QAExample&)>& answer_fn,
                             std::vector<QuestionError>* errors = nullptr,
                             std::size_t threads = 1);

struct StageTiming {
  double retrieval_seconds = 0.0;
  double extraction_seconds = 0.0;
  double total_seconds = 0.0;
};

struct EvalRunReport {
  nlohmann::json config;
  RetrieverTable retriever;
  ScoreReport extractor;
  std::vector<QuestionError> errors;
  StageTiming timing;
};

EvalRunReport evaluate_e2e(std::span<const QAExample> dataset, const Pipeline& pipeline);

// Timing is omitted when include_timing is false, leaving a byte-stable report.
nlohmann::json to_json(const EvalRunReport& report, bool include_timing = true);
std::string report_text(const EvalRunReport& report);

}  // namespace obqa
