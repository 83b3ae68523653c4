#include "obqa/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "parallel.hpp"

namespace obqa {

using json = nlohmann::json;

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return {};
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config field \"") + key + "\" has the wrong type");
  }
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

void PipelineConfig::validate() const {
  if (top_k_docs < 1) throw ConfigError("top_k_docs must be at least 1");
  windowing.validate();
  decoder.validate();
  eval.validate();
  if (retriever.kind == RetrieverSettings::Kind::kRemote && retriever.endpoint.url.empty()) {
    throw ConfigError("remote retriever needs a url");
  }
}

PipelineConfig PipelineConfig::from_json(const json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw ConfigError("pipeline config must be a JSON object");
  PipelineConfig c;
  c.name = get_or<std::string>(j, "name", c.name);
  c.corpus_root = resolve(base_dir, get_or<std::string>(j, "corpus_root", ""));
  c.index_path = resolve(base_dir, get_or<std::string>(j, "index", ""));
  c.checkpoint = resolve(base_dir, get_or<std::string>(j, "checkpoint", ""));
  c.top_k_docs = get_or<std::size_t>(j, "top_k_docs", c.top_k_docs);
  c.windowing.max_window_len = get_or<std::size_t>(j, "max_window_len", c.windowing.max_window_len);
  c.windowing.stride = get_or<std::size_t>(j, "stride", c.windowing.stride);
  c.decoder.threshold = get_or<double>(j, "threshold", c.decoder.threshold);
  c.decoder.max_span_len = get_or<std::size_t>(j, "max_span_len", c.decoder.max_span_len);
  c.decoder.join_separator = get_or<std::string>(j, "join_separator", c.decoder.join_separator);
  c.bm25.k1 = get_or<double>(j, "bm25_k1", c.bm25.k1);
  c.bm25.b = get_or<double>(j, "bm25_b", c.bm25.b);
  c.eval.ks = get_or<std::vector<std::size_t>>(j, "eval_ks", c.eval.ks);
  c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
  c.threads = get_or<std::size_t>(j, "threads", c.threads);
  if (j.contains("retriever")) {
    const json& r = j["retriever"];
    if (!r.is_object()) throw ConfigError("\"retriever\" must be an object");
    const std::string kind = get_or<std::string>(r, "kind", "builtin");
    if (kind == "builtin") {
      c.retriever.kind = RetrieverSettings::Kind::kBuiltin;
    } else if (kind == "remote") {
      c.retriever.kind = RetrieverSettings::Kind::kRemote;
      c.retriever.endpoint.url = get_or<std::string>(r, "url", "");
      c.retriever.endpoint.path = get_or<std::string>(r, "path", c.retriever.endpoint.path);
      c.retriever.endpoint.timeout_ms = get_or<int>(r, "timeout_ms", c.retriever.endpoint.timeout_ms);
      const std::string fallback = get_or<std::string>(r, "fallback", "builtin");
      if (fallback != "builtin" && fallback != "none") {
        throw ConfigError("retriever.fallback must be \"builtin\" or \"none\"");
      }
      c.retriever.fallback_to_builtin = fallback == "builtin";
    } else {
      throw ConfigError("unknown retriever kind \"" + kind + "\"");
    }
  }
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  json j = json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw ConfigError("config file is not valid JSON: " + path.string());
  return from_json(j, path.parent_path());
}

json PipelineConfig::to_json() const {
  json r;
  if (retriever.kind == RetrieverSettings::Kind::kBuiltin) {
    r = {{"kind", "builtin"}};
  } else {
    r = {{"kind", "remote"},
         {"url", retriever.endpoint.url},
         {"path", retriever.endpoint.path},
         {"timeout_ms", retriever.endpoint.timeout_ms},
         {"fallback", retriever.fallback_to_builtin ? "builtin" : "none"}};
  }
  return {{"name", name},
          {"corpus_root", corpus_root.generic_string()},
          {"index", index_path.generic_string()},
          {"checkpoint", checkpoint.generic_string()},
          {"retriever", r},
          {"top_k_docs", top_k_docs},
          {"max_window_len", windowing.max_window_len},
          {"stride", windowing.stride},
          {"threshold", decoder.threshold},
          {"max_span_len", decoder.max_span_len},
          {"join_separator", decoder.join_separator},
          {"bm25_k1", bm25.k1},
          {"bm25_b", bm25.b},
          {"eval_ks", eval.ks},
          {"seed", seed},
          {"threads", threads}};
}

json to_json(const FinalAnswer& answer) {
  json spans = json::array();
  for (const SpanCandidate& s : answer.spans) {
    spans.push_back({{"text", s.text},
                     {"start_token", s.start_tok},
                     {"end_token", s.end_tok},
                     {"char_start", s.char_start},
                     {"char_end", s.char_end},
                     {"score", s.score}});
  }
  return {{"text", answer.text},
          {"ynn", std::string(to_string(answer.ynn))},
          {"source_doc", answer.source_doc},
          {"confidence", answer.confidence},
          {"spans", spans}};
}

json to_json(const AnswerResult& result) {
  json prov = json::array();
  for (const ProvenanceEntry& p : result.provenance) {
    prov.push_back({{"doc_id", p.doc_id},
                    {"retrieval_score", p.retrieval_score},
                    {"confidence", p.confidence}});
  }
  json out = to_json(result.answer);
  out["provenance"] = prov;
  out["retrieval_fallback"] = result.retrieval_fallback;
  if (!result.retriever_note.empty()) out["retriever_note"] = result.retriever_note;
  return out;
}

namespace {

std::unordered_set<std::string> char_trigrams(std::string_view text) {
  std::string folded;
  for (const Token& t : tokenize(text)) {
    folded += ' ';
    folded += t.surface;
  }
  folded += ' ';
  std::unordered_set<std::string> grams;
  for (std::size_t i = 0; i + 3 <= folded.size(); ++i) grams.insert(folded.substr(i, 3));
  return grams;
}

}  // namespace

RankedList closest_document(const CorpusStore& corpus, std::string_view query) {
  RankedList out;
  out.query = std::string(query);
  if (corpus.empty()) return out;
  const auto query_grams = char_trigrams(query);
  std::size_t best = 0;
  double best_score = -1.0;
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    const auto doc_grams = char_trigrams(corpus[d].text);
    std::size_t shared = 0;
    for (const auto& g : query_grams) shared += doc_grams.count(g);
    const double score = static_cast<double>(shared);
    if (score > best_score) {
      best_score = score;
      best = d;
    }
  }
  out.entries.push_back({corpus[best].doc_id, 0.0});
  return out;
}

Pipeline::Pipeline(PipelineConfig config, CorpusStore corpus, InvertedIndex index,
                   ModelParams<double> model)
    : config_(std::move(config)),
      corpus_(std::move(corpus)),
      index_(std::move(index)),
      model_(std::move(model)) {
  config_.validate();
  if (config_.windowing.max_window_len > static_cast<std::size_t>(model_.config().max_window_len)) {
    throw ConfigError("pipeline max_window_len " + std::to_string(config_.windowing.max_window_len) +
                      " exceeds the model's " + std::to_string(model_.config().max_window_len));
  }
  if (corpus_.empty()) throw ConfigError("pipeline corpus is empty");
  for (const std::string& id : index_.doc_ids()) {
    if (!corpus_.find(id)) throw ConfigError("index references document missing from corpus: " + id);
  }
}

Pipeline Pipeline::load(const PipelineConfig& config) {
  config.validate();
  if (config.checkpoint.empty() || !std::filesystem::exists(config.checkpoint)) {
    throw ConfigError("checkpoint not found: " + config.checkpoint.string());
  }
  CorpusStore corpus = ingest_corpus(config.corpus_root);
  InvertedIndex index;
  if (!config.index_path.empty()) {
    if (!std::filesystem::exists(config.index_path)) {
      throw ConfigError("index not found: " + config.index_path.string());
    }
    index = InvertedIndex::load(config.index_path);
  } else {
    if (corpus.empty()) throw ConfigError("corpus is empty: " + config.corpus_root.string());
    index = build_index(corpus);
  }
  return Pipeline(config, std::move(corpus), std::move(index), load_checkpoint(config.checkpoint));
}

RankedList Pipeline::rank(std::string_view question, std::size_t k, std::string* note) const {
  if (config_.retriever.kind == RetrieverSettings::Kind::kRemote) {
    try {
      return remote_retrieve(config_.retriever.endpoint, question, k);
    } catch (const TransportError& e) {
      if (!config_.retriever.fallback_to_builtin) throw;
      if (note) *note = std::string("remote retriever failed, used built-in index: ") + e.what();
    }
  }
  return retrieve(index_, question, k, config_.bm25);
}

DocumentResult Pipeline::extract(const Document& doc, const TokenList& question) const {
  const TokenList tokens = tokenize(doc.text);
  const std::vector<Window> windows = window_tokens(doc.doc_id, tokens, config_.windowing);
  std::vector<WindowResult> results;
  results.reserve(windows.size());
  for (const Window& w : windows) {
    const EncoderInput input = make_encoder_input(model_.config(), question, w.tokens);
    const HeadProbabilities<double> p = probabilities(forward(model_, input));
    WindowResult r;
    r.first_token = w.first_token;
    r.spans = decode_window(std::span<const double>(p.start.data(), static_cast<std::size_t>(p.start.size())),
                            std::span<const double>(p.end.data(), static_cast<std::size_t>(p.end.size())),
                            config_.decoder.threshold, config_.decoder.max_span_len);
    r.pyn = {p.ynn(0), p.ynn(1), p.ynn(2)};
    results.push_back(std::move(r));
  }
  if (results.empty()) {
    // A document without tokens contributes nothing.
    DocumentResult empty;
    empty.doc_id = doc.doc_id;
    return empty;
  }
  return decode_document(doc, tokens, results);
}

AnswerResult Pipeline::answer(std::string_view question) const {
  std::string note;
  const RankedList ranking = rank(question, config_.top_k_docs, &note);
  AnswerResult result = answer_with_ranking(question, ranking);
  result.retriever_note = note;
  return result;
}

AnswerResult Pipeline::answer_with_ranking(std::string_view question,
                                           const RankedList& ranking) const {
  AnswerResult result;
  RankedList used = ranking;
  if (used.entries.size() > config_.top_k_docs) used.entries.resize(config_.top_k_docs);
  std::erase_if(used.entries, [&](const RankedEntry& e) { return corpus_.find(e.doc_id) == nullptr; });
  if (used.empty()) {
    used = closest_document(corpus_, question);
    result.retrieval_fallback = true;
  }
  const TokenList question_tokens = tokenize(question);
  std::vector<DocumentResult> docs;
  for (const RankedEntry& e : used.entries) {
    docs.push_back(extract(*corpus_.find(e.doc_id), question_tokens));
    result.provenance.push_back({e.doc_id, e.score, docs.back().confidence});
  }
  result.answer = select_answer(docs, config_.decoder.join_separator);
  return result;
}

RetrieverTable evaluate_rankings(std::span<const QAExample> dataset,
                                 std::span<const RankedList> rankings,
                                 const RetrieverEvalConfig& config) {
  config.validate();
  if (rankings.size() != dataset.size()) throw DataError("one ranking per question required");
  RetrieverTable table;
  table.questions = dataset.size();
  for (std::size_t k : config.ks) {
    RetrieverRow row;
    row.k = k;
    for (std::size_t q = 0; q < dataset.size(); ++q) {
      row.precision += precision_at_k(rankings[q], {dataset[q].gold_doc_id}, k);
      row.hit += hit_at_k(rankings[q], dataset[q].gold_doc_id, k);
    }
    if (!dataset.empty()) {
      row.precision /= static_cast<double>(dataset.size());
      row.hit /= static_cast<double>(dataset.size());
    }
    table.rows.push_back(row);
  }
  return table;
}

RetrieverTable evaluate_retriever(std::span<const QAExample> dataset, const RankFn& rank,
                                  const RetrieverEvalConfig& config) {
  config.validate();
  std::vector<std::string> missing;
  for (const QAExample& ex : dataset) {
    if (ex.gold_doc_id.empty()) missing.push_back(ex.question_id);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& id : missing) list += (list.empty() ? "" : ", ") + id;
    throw DataError("questions without gold_doc_id: " + list);
  }
  const std::size_t max_k = config.ks.back();
  std::vector<RankedList> rankings;
  rankings.reserve(dataset.size());
  for (const QAExample& ex : dataset) rankings.push_back(rank(ex.question, max_k));
  return evaluate_rankings(dataset, rankings, config);
}

json to_json(const RetrieverTable& table) {
  json rows = json::array();
  for (const RetrieverRow& r : table.rows) {
    rows.push_back({{"k", r.k}, {"precision_at_k", r.precision}, {"hit_at_k", r.hit}});
  }
  return {{"questions", table.questions}, {"rows", rows}};
}

std::string retriever_table_text(const RetrieverTable& table, std::string_view name) {
  std::ostringstream out;
  char cell[64];
  out << "Retriever: " << name << " (" << table.questions << " questions)\n";
  out << "K      ";
  for (const RetrieverRow& r : table.rows) {
    std::snprintf(cell, sizeof(cell), "%7zu", r.k);
    out << cell;
  }
  out << "\nP@K    ";
  for (const RetrieverRow& r : table.rows) {
    std::snprintf(cell, sizeof(cell), "%7.3f", r.precision);
    out << cell;
  }
  out << "\nhit@K  ";
  for (const RetrieverRow& r : table.rows) {
    std::snprintf(cell, sizeof(cell), "%7.3f", r.hit);
    out << cell;
  }
  out << '\n';
  return out.str();
}

ScoreReport evaluate_answers(std::span<const QAExample> dataset,
                             const std::function<FinalAnswer(const QAExample&)>& answer_fn,
                             std::vector<QuestionError>* errors, std::size_t threads) {
  std::vector<QuestionScore> scores(dataset.size());
  std::vector<std::string> failures(dataset.size());
  parallel_for(dataset.size(), threads, [&](std::size_t i) {
    const QAExample& ex = dataset[i];
    QuestionScore& s = scores[i];
    s.question_id = ex.question_id;
    try {
      const FinalAnswer a = answer_fn(ex);
      s.f1 = token_f1(a.text, ex.gold_text);
      s.em = exact_match(a.text, ex.gold_text);
      s.ynn_correct = a.ynn == ex.gold_ynn;
    } catch (const std::exception& e) {
      failures[i] = e.what();
      if (failures[i].empty()) failures[i] = "unknown error";
    }
  });
  if (errors) {
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      if (!failures[i].empty()) errors->push_back({dataset[i].question_id, failures[i]});
    }
  }
  return ScoreReport::from_questions(std::move(scores));
}

EvalRunReport evaluate_e2e(std::span<const QAExample> dataset, const Pipeline& pipeline) {
  const auto run_start = std::chrono::steady_clock::now();
  const PipelineConfig& cfg = pipeline.config();
  cfg.eval.validate();
  for (const QAExample& ex : dataset) {
    if (ex.gold_doc_id.empty()) {
      throw DataError("question " + ex.question_id + " has no gold_doc_id");
    }
  }
  EvalRunReport report;
  report.config = cfg.to_json();

  const std::size_t rank_k = std::max(cfg.top_k_docs, cfg.eval.ks.back());
  std::vector<RankedList> rankings(dataset.size());
  std::vector<std::string> notes(dataset.size());
  std::vector<std::string> rank_errors(dataset.size());
  std::vector<double> rank_seconds(dataset.size(), 0.0);
  parallel_for(dataset.size(), cfg.threads, [&](std::size_t i) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      rankings[i] = pipeline.rank(dataset[i].question, rank_k, &notes[i]);
    } catch (const std::exception& e) {
      rank_errors[i] = e.what();
    }
    rankings[i].query = dataset[i].question;
    rank_seconds[i] = seconds_since(t0);
  });
  report.retriever = evaluate_rankings(dataset, rankings, cfg.eval);

  std::vector<double> extract_seconds(dataset.size(), 0.0);
  report.extractor = evaluate_answers(
      dataset,
      [&](const QAExample& ex) {
        const std::size_t i = static_cast<std::size_t>(&ex - dataset.data());
        if (!rank_errors[i].empty()) throw Error(rank_errors[i]);
        const auto t0 = std::chrono::steady_clock::now();
        AnswerResult r = pipeline.answer_with_ranking(ex.question, rankings[i]);
        extract_seconds[i] = seconds_since(t0);
        return r.answer;
      },
      &report.errors, cfg.threads);

  for (std::size_t i = 0; i < dataset.size(); ++i) {
    report.timing.retrieval_seconds += rank_seconds[i];
    report.timing.extraction_seconds += extract_seconds[i];
  }
  report.timing.total_seconds = seconds_since(run_start);
  return report;
}

json to_json(const EvalRunReport& report, bool include_timing) {
  json errors = json::array();
  for (const QuestionError& e : report.errors) {
    errors.push_back({{"question_id", e.question_id}, {"message", e.message}});
  }
  json out{{"config", report.config},
           {"retriever", to_json(report.retriever)},
           {"extractor", to_json(report.extractor)},
           {"errors", errors}};
  if (include_timing) {
    out["timing"] = {{"retrieval_seconds", report.timing.retrieval_seconds},
                     {"extraction_seconds", report.timing.extraction_seconds},
                     {"total_seconds", report.timing.total_seconds}};
  }
  return out;
}

std::string report_text(const EvalRunReport& report) {
  const std::string name = report.config.value("name", std::string("default"));
  return retriever_table_text(report.retriever, name) + "\n" + score_table(report.extractor, name);
}

}  // namespace obqa
