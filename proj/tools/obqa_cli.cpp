// obqa: command-line front end for indexing, training, answering and
// evaluation. Exit codes: 0 success, 1 usage or configuration error, 2 data
// error.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

#include "obqa/datasets.hpp"
#include "obqa/extractor.hpp"
#include "obqa/pipeline.hpp"

namespace {

using namespace obqa;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
  if (!out) throw ConfigError("write failed: " + path.string());
}

struct IndexArgs {
  std::string corpus_root;
  std::string output;
};

void run_index(const IndexArgs& a) {
  const CorpusStore corpus = ingest_corpus(a.corpus_root);
  for (const IngestWarning& w : corpus.warnings()) {
    std::cerr << "warning: skipped " << w.path << ": " << w.reason << "\n";
  }
  const InvertedIndex index = build_index(corpus);
  index.save(a.output);
  std::cerr << "indexed " << index.num_docs() << " documents, " << index.vocabulary_size()
            << " terms -> " << a.output << "\n";
}

struct TrainArgs {
  std::string input;
  std::string output;
  std::string version = "1.1";
  std::string corpus_root;  // set: input is QA JSON lines against this corpus
  std::uint64_t seed = 7;
  TrainingRecipe recipe = TrainingRecipe::desk_scale(7);
};

void run_train(TrainArgs a) {
  std::vector<QAExample> examples;
  CorpusStore corpus;
  if (a.corpus_root.empty()) {
    const auto version = parse_squad_version(a.version);
    if (!version) throw ConfigError("unknown SQuAD version '" + a.version + "' (use 1.1 or 2.0)");
    examples = load_squad(a.input, *version);
  } else {
    examples = load_qa_eval(a.input);
    corpus = ingest_corpus(a.corpus_root);
  }
  a.recipe.model.seed = a.seed;
  a.recipe.optimizer.seed = a.seed;
  a.recipe.augment.seed = a.seed;

  const auto progress = [](int epoch, double loss) {
    std::fprintf(stderr, "epoch %3d  loss %.6f\n", epoch + 1, loss);
  };
  const TrainedExtractor trained =
      train_extractor(examples, a.corpus_root.empty() ? nullptr : &corpus, a.recipe, progress);
  for (const std::string& id : trained.labeling.skipped) {
    std::cerr << "warning: could not label " << id << "\n";
  }
  std::cerr << examples.size() << " questions, " << trained.windows << " windows, "
            << trained.training_examples << " training examples\n";
  save_checkpoint(a.output, trained.params);
  std::cerr << "checkpoint -> " << a.output << "\n";
}

struct RetrieveArgs {
  std::string index;
  std::string query;
  std::size_t k = 5;
  bool as_json = false;
};

void run_retrieve(const RetrieveArgs& a) {
  const RankedList ranked = retrieve(InvertedIndex::load(a.index), a.query, a.k);
  if (a.as_json) {
    json rows = json::array();
    for (const RankedEntry& e : ranked.entries) rows.push_back({{"doc_id", e.doc_id}, {"score", e.score}});
    std::cout << json{{"query", a.query}, {"results", rows}}.dump(2) << "\n";
    return;
  }
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    std::printf("%3zu  %10.6f  %s\n", i + 1, ranked.entries[i].score, ranked.entries[i].doc_id.c_str());
  }
}

struct AnswerArgs {
  std::string config;
  std::string question;
};

void run_answer(const AnswerArgs& a) {
  const Pipeline pipeline = Pipeline::load(PipelineConfig::load(a.config));
  std::cout << to_json(pipeline.answer(a.question)).dump(2) << "\n";
}

struct EvalArgs {
  std::string config;
  std::string qa;
  std::string output;
  bool as_json = false;
};

void run_eval_retriever(const EvalArgs& a) {
  const PipelineConfig config = PipelineConfig::load(a.config);
  const std::vector<QAExample> dataset = load_qa_eval(a.qa);
  const Pipeline pipeline = Pipeline::load(config);
  const RankFn rank = [&](std::string_view q, std::size_t k) { return pipeline.rank(q, k); };
  const RetrieverTable table = evaluate_retriever(dataset, rank, config.eval);
  const std::string name =
      config.retriever.kind == RetrieverSettings::Kind::kRemote ? "remote" : "builtin";
  if (a.as_json) {
    std::cout << to_json(table).dump(2) << "\n";
  } else {
    std::cout << retriever_table_text(table, name);
  }
}

void run_eval_e2e(const EvalArgs& a) {
  const std::vector<QAExample> dataset = load_qa_eval(a.qa);
  const Pipeline pipeline = Pipeline::load(PipelineConfig::load(a.config));
  const EvalRunReport report = evaluate_e2e(dataset, pipeline);
  write_file(a.output, to_json(report).dump(2) + "\n");
  std::cout << report_text(report);
  for (const QuestionError& e : report.errors) {
    std::cerr << "error: " << e.question_id << ": " << e.message << "\n";
  }
}

struct SynthArgs {
  std::uint64_t seed = 7;
  std::size_t docs = 200;
  std::size_t questions = 100;
  std::string output;
};

void run_gen_synth(const SynthArgs& a) {
  write_synth_fixture(synth_generate(a.seed, a.docs, a.questions), a.output);
  std::cerr << "fixture -> " << a.output << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Open-book question answering: retrieve, extract, decode, evaluate"};
  app.require_subcommand(1);
  std::function<void()> action;

  IndexArgs index_args;
  auto* index_cmd = app.add_subcommand("index", "Build a retrieval index over a corpus directory");
  index_cmd->add_option("corpus_root", index_args.corpus_root, "Corpus directory")->required();
  index_cmd->add_option("-o,--output", index_args.output, "Index file")->required();
  index_cmd->callback([&] { action = [&] { run_index(index_args); }; });

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train the extractor");
  train_cmd->add_option("input", train_args.input, "SQuAD JSON, or QA JSON lines with --corpus")
      ->required();
  train_cmd->add_option("-o,--output", train_args.output, "Checkpoint file")->required();
  train_cmd->add_option("--version", train_args.version, "SQuAD version (1.1 or 2.0)")
      ->capture_default_str();
  train_cmd->add_option("--corpus", train_args.corpus_root,
                        "Corpus root; the input is then QA JSON lines with doc_id");
  train_cmd->add_option("--epochs", train_args.recipe.optimizer.epochs)->capture_default_str();
  train_cmd->add_option("--batch-size", train_args.recipe.optimizer.batch_size)->capture_default_str();
  train_cmd->add_option("--lr", train_args.recipe.optimizer.learning_rate)->capture_default_str();
  train_cmd->add_option("--weight-decay", train_args.recipe.optimizer.weight_decay)->capture_default_str();
  train_cmd->add_option("--seed", train_args.seed)->capture_default_str();
  train_cmd->add_option("--layers", train_args.recipe.model.layers)->capture_default_str();
  train_cmd->add_option("--hidden", train_args.recipe.model.hidden)->capture_default_str();
  train_cmd->add_option("--heads", train_args.recipe.model.heads)->capture_default_str();
  train_cmd->add_option("--vocab-buckets", train_args.recipe.model.vocab_hash_size)->capture_default_str();
  train_cmd->add_option("--max-question-len", train_args.recipe.model.max_question_len)
      ->capture_default_str();
  train_cmd->add_option("--window", train_args.recipe.windowing.max_window_len)->capture_default_str();
  train_cmd->add_option("--stride", train_args.recipe.windowing.stride)->capture_default_str();
  train_cmd->add_option("--augment-copies", train_args.recipe.augment.copies,
                        "Renamed copies of each window (0 disables)")
      ->capture_default_str();
  train_cmd->add_option("--negatives", train_args.recipe.negatives,
                        "Random non-gold documents per question used as negatives")
      ->capture_default_str();
  train_cmd->add_option("--rename-rate", train_args.recipe.augment.rename_rate)->capture_default_str();
  train_cmd->callback([&] { action = [&] { run_train(train_args); }; });

  RetrieveArgs retrieve_args;
  auto* retrieve_cmd = app.add_subcommand("retrieve", "Rank documents for a query");
  retrieve_cmd->add_option("index", retrieve_args.index, "Index file")->required();
  retrieve_cmd->add_option("--query", retrieve_args.query)->required();
  retrieve_cmd->add_option("-k", retrieve_args.k)->capture_default_str();
  retrieve_cmd->add_flag("--json", retrieve_args.as_json);
  retrieve_cmd->callback([&] { action = [&] { run_retrieve(retrieve_args); }; });

  AnswerArgs answer_args;
  auto* answer_cmd = app.add_subcommand("answer", "Answer one question (JSON on stdout)");
  answer_cmd->add_option("--config", answer_args.config)->required();
  answer_cmd->add_option("--question", answer_args.question)->required();
  answer_cmd->callback([&] { action = [&] { run_answer(answer_args); }; });

  EvalArgs retr_args;
  auto* retr_cmd = app.add_subcommand("eval-retriever", "P@K and hit@K over a QA set");
  retr_cmd->add_option("--config", retr_args.config)->required();
  retr_cmd->add_option("--qa", retr_args.qa)->required();
  retr_cmd->add_flag("--json", retr_args.as_json);
  retr_cmd->callback([&] { action = [&] { run_eval_retriever(retr_args); }; });

  EvalArgs e2e_args;
  auto* e2e_cmd = app.add_subcommand("eval-e2e", "End-to-end F1, EM and YNN accuracy");
  e2e_cmd->add_option("--config", e2e_args.config)->required();
  e2e_cmd->add_option("--qa", e2e_args.qa)->required();
  e2e_cmd->add_option("-o,--output", e2e_args.output, "Report JSON")->required();
  e2e_cmd->callback([&] { action = [&] { run_eval_e2e(e2e_args); }; });

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("gen-synth", "Write the synthetic corpus and QA files");
  synth_cmd->add_option("--seed", synth_args.seed)->capture_default_str();
  synth_cmd->add_option("--docs", synth_args.docs)->capture_default_str();
  synth_cmd->add_option("--questions", synth_args.questions)->capture_default_str();
  synth_cmd->add_option("-o,--output", synth_args.output, "Output directory")->required();
  synth_cmd->callback([&] { action = [&] { run_gen_synth(synth_args); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    action();
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const TransportError& e) {
    std::cerr << "retriever service error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const TrainingError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitOk;
}
