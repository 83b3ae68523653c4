#include "obqa/datasets.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace obqa {

using json = nlohmann::json;

std::optional<SquadVersion> parse_squad_version(std::string_view text) {
  if (text == "v1.1" || text == "1.1") return SquadVersion::kV1_1;
  if (text == "v2.0" || text == "2.0") return SquadVersion::kV2_0;
  return std::nullopt;
}

namespace {

const json& require(const json& node, const char* key, const std::string& path,
                    json::value_t type) {
  if (!node.is_object() || !node.contains(key)) {
    throw ParseError("SQuAD: missing " + path + "." + key);
  }
  const json& child = node[key];
  const bool ok = type == json::value_t::number_unsigned ? child.is_number_integer()
                                                         : child.type() == type;
  if (!ok) throw ParseError("SQuAD: wrong type at " + path + "." + key);
  return child;
}

}  // namespace

std::vector<QAExample> parse_squad(const json& root, SquadVersion version) {
  std::vector<QAExample> out;
  const json& data = require(root, "data", "$", json::value_t::array);
  for (std::size_t a = 0; a < data.size(); ++a) {
    const std::string apath = "$.data[" + std::to_string(a) + "]";
    const json& paragraphs = require(data[a], "paragraphs", apath, json::value_t::array);
    for (std::size_t p = 0; p < paragraphs.size(); ++p) {
      const std::string ppath = apath + ".paragraphs[" + std::to_string(p) + "]";
      const std::string context =
          require(paragraphs[p], "context", ppath, json::value_t::string).get<std::string>();
      const json& qas = require(paragraphs[p], "qas", ppath, json::value_t::array);
      for (std::size_t q = 0; q < qas.size(); ++q) {
        const std::string qpath = ppath + ".qas[" + std::to_string(q) + "]";
        QAExample ex;
        ex.question_id = require(qas[q], "id", qpath, json::value_t::string).get<std::string>();
        ex.question = require(qas[q], "question", qpath, json::value_t::string).get<std::string>();
        ex.context = context;
        ex.gold_ynn = Ynn::kNone;
        bool impossible = false;
        if (version == SquadVersion::kV2_0 && qas[q].contains("is_impossible")) {
          if (!qas[q]["is_impossible"].is_boolean()) {
            throw ParseError("SQuAD: wrong type at " + qpath + ".is_impossible");
          }
          impossible = qas[q]["is_impossible"].get<bool>();
        }
        if (!impossible) {
          const json& answers = require(qas[q], "answers", qpath, json::value_t::array);
          if (answers.empty()) throw ParseError("SQuAD: empty " + qpath + ".answers");
          const std::string ans_path = qpath + ".answers[0]";
          ex.gold_text =
              require(answers[0], "text", ans_path, json::value_t::string).get<std::string>();
          const json& start =
              require(answers[0], "answer_start", ans_path, json::value_t::number_unsigned);
          if (start.get<long long>() < 0) {
            throw ParseError("SQuAD: negative " + ans_path + ".answer_start");
          }
          ex.answer_start = start.get<std::size_t>();
        }
        out.push_back(std::move(ex));
      }
    }
  }
  return out;
}

std::vector<QAExample> load_squad(const std::filesystem::path& path, SquadVersion version) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open SQuAD file: " + path.string());
  json root = json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (root.is_discarded()) throw ParseError("SQuAD: " + path.string() + " is not valid JSON");
  return parse_squad(root, version);
}

std::vector<QAExample> load_qa_eval(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open QA file: " + path.string());
  std::vector<QAExample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    json row = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (row.is_discarded() || !row.is_object()) throw ParseError(where + ": not a JSON object");
    const auto field = [&](const char* key) {
      if (!row.contains(key) || !row[key].is_string()) {
        throw ParseError(where + ": missing string field \"" + key + "\"");
      }
      return row[key].get<std::string>();
    };
    QAExample ex;
    ex.question_id = field("question_id");
    ex.question = field("question");
    ex.gold_text = field("answer");
    ex.gold_doc_id = field("doc_id");
    const std::string ynn = field("ynn");
    const auto parsed = parse_ynn(ynn);
    if (!parsed) throw ParseError(where + ": unknown ynn value \"" + ynn + "\"");
    ex.gold_ynn = *parsed;
    out.push_back(std::move(ex));
  }
  return out;
}

void write_qa_eval(const std::filesystem::path& path, std::span<const QAExample> examples) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write QA file: " + path.string());
  for (const QAExample& ex : examples) {
    json row{{"question_id", ex.question_id},
             {"question", ex.question},
             {"answer", ex.gold_text},
             {"ynn", std::string(to_string(ex.gold_ynn))},
             {"doc_id", ex.gold_doc_id}};
    out << row.dump() << '\n';
  }
}

std::vector<LabeledWindow> make_training_windows(const QAExample& example, std::string_view context,
                                                 std::string_view doc_id,
                                                 const WindowingConfig& config) {
  const TokenList tokens = tokenize(context);
  const TokenList question = tokenize(example.question);
  std::vector<Window> windows = window_tokens(doc_id, tokens, config);

  std::optional<std::pair<std::size_t, std::size_t>> gold_tokens;
  if (!example.gold_text.empty()) {
    std::size_t char_start = std::string_view::npos;
    if (example.answer_start &&
        context.substr(std::min(*example.answer_start, context.size()), example.gold_text.size()) ==
            example.gold_text) {
      char_start = *example.answer_start;
    } else {
      char_start = context.find(example.gold_text);
    }
    if (char_start == std::string_view::npos) {
      throw LabelingError("answer of " + example.question_id + " not found in its context");
    }
    const std::size_t char_end = char_start + example.gold_text.size();
    std::optional<std::size_t> first, last;
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      if (tokens[t].char_end > char_start && tokens[t].char_start < char_end) {
        if (!first) first = t;
        last = t;
      }
    }
    if (!first) {
      throw LabelingError("answer of " + example.question_id + " covers no tokens");
    }
    gold_tokens = std::make_pair(*first, *last);
  }

  std::vector<LabeledWindow> out;
  out.reserve(windows.size());
  for (Window& w : windows) {
    LabeledWindow lw;
    lw.question = question;
    // Only a window that holds the whole span is labeled positive.
    if (gold_tokens && gold_tokens->first >= w.first_token && gold_tokens->second <= w.last_token) {
      lw.label.start_positions = {static_cast<Eigen::Index>(gold_tokens->first - w.first_token)};
      lw.label.end_positions = {static_cast<Eigen::Index>(gold_tokens->second - w.first_token)};
      lw.label.yn = example.gold_ynn;
    }
    lw.window = std::move(w);
    out.push_back(std::move(lw));
  }
  return out;
}

std::vector<LabeledWindow> make_training_set(std::span<const QAExample> examples,
                                             const CorpusStore* corpus,
                                             const WindowingConfig& config,
                                             LabelingStats* stats) {
  std::vector<LabeledWindow> out;
  LabelingStats local;
  LabelingStats& s = stats ? *stats : local;
  for (const QAExample& ex : examples) {
    std::string_view context = ex.context;
    std::string_view doc_id = ex.question_id;
    if (context.empty()) {
      const Document* doc = corpus ? corpus->find(ex.gold_doc_id) : nullptr;
      if (!doc) {
        s.skipped.push_back(ex.question_id);
        continue;
      }
      context = doc->text;
      doc_id = doc->doc_id;
    }
    try {
      auto windows = make_training_windows(ex, context, doc_id, config);
      ++s.examples;
      s.windows += windows.size();
      std::move(windows.begin(), windows.end(), std::back_inserter(out));
    } catch (const LabelingError&) {
      s.skipped.push_back(ex.question_id);
    }
  }
  return out;
}

std::vector<LabeledWindow> make_negative_windows(std::span<const QAExample> examples,
                                                 const CorpusStore& corpus,
                                                 const WindowingConfig& config,
                                                 std::size_t per_question, std::uint64_t seed) {
  config.validate();
  std::vector<LabeledWindow> out;
  if (per_question == 0 || corpus.size() < 2) return out;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, corpus.size() - 1);
  for (const QAExample& ex : examples) {
    const TokenList question = tokenize(ex.question);
    std::set<std::size_t> chosen;
    const std::size_t want = std::min(per_question, corpus.size() - 1);
    while (chosen.size() < want) {
      const std::size_t d = pick(rng);
      if (corpus[d].doc_id != ex.gold_doc_id) chosen.insert(d);
    }
    for (const std::size_t d : chosen) {
      for (Window& w : window_document(corpus[d], config)) {
        LabeledWindow lw;
        lw.question = question;
        lw.window = std::move(w);
        out.push_back(std::move(lw));
      }
    }
  }
  return out;
}

std::vector<TrainingExample> to_training_examples(std::span<const LabeledWindow> windows,
                                                  const EncoderConfig& config) {
  std::vector<TrainingExample> out;
  out.reserve(windows.size());
  for (const LabeledWindow& lw : windows) {
    out.push_back({make_encoder_input(config, lw.question, lw.window.tokens), lw.label});
  }
  return out;
}

std::string label_text(const LabeledWindow& labeled, std::string_view context) {
  if (!labeled.label.has_span()) return {};
  const auto& toks = labeled.window.tokens;
  const auto start = static_cast<std::size_t>(labeled.label.start_positions.front());
  const auto end = static_cast<std::size_t>(labeled.label.end_positions.back());
  return std::string(context.substr(toks[start].char_start, toks[end].char_end - toks[start].char_start));
}

namespace {

// Filler avoids every word used by the planted sentences and questions.
constexpr const char* kFiller[] = {
    "system",   "stores",   "records",  "across",   "several",  "regions",  "and",
    "backups",  "run",      "nightly",  "operators", "monitor", "latency",  "for",
    "every",    "request",  "cluster",  "scales",   "with",     "demand",   "while",
    "storage",  "remains",  "durable",  "clients",  "connect",  "through",  "secure",
    "endpoints", "logs",    "are",      "retained", "by",       "policy",   "replicas",
    "serve",    "reads",    "during",   "failover", "queries",  "return",   "results",
    "quickly",  "tables",   "hold",     "rows",     "columns",  "indexes",  "speed",
    "lookups",  "alarms",   "notify",   "teams",    "when",     "limits",   "approach",
    "snapshots", "capture", "state",    "periodically", "network", "traffic", "flows",
    "over",     "private",  "links",    "costs",    "depend",   "on",       "usage",
};

std::string capitalize(std::string s) {
  if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

std::string doc_name(std::size_t i, std::size_t n_docs) {
  const int width = std::max<int>(3, static_cast<int>(std::to_string(n_docs - 1).size()));
  char buf[64];
  std::snprintf(buf, sizeof(buf), "doc-%0*zu.txt", width, i);
  return buf;
}

}  // namespace

SynthFixture synth_generate(std::uint64_t seed, std::size_t n_docs, std::size_t n_questions) {
  if (n_docs < 1 || n_questions < 1) throw ConfigError("synth_generate: counts must be >= 1");
  if (n_questions > n_docs) throw ConfigError("synth_generate: more questions than documents");
  std::mt19937_64 rng(seed);
  const auto uniform = [&](std::size_t lo, std::size_t hi) {  // inclusive
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  constexpr std::size_t kFillerSize = std::size(kFiller);

  struct Planted {
    std::string fact_answer;
    std::string feature_answer;
    bool enabled;
  };
  std::vector<Document> docs;
  std::vector<Planted> planted;
  for (std::size_t i = 0; i < n_docs; ++i) {
    std::vector<std::string> sentences;
    const std::size_t n_filler = uniform(2, 4);
    for (std::size_t s = 0; s < n_filler; ++s) {
      const std::size_t len = uniform(4, 8);
      std::string sentence;
      for (std::size_t w = 0; w < len; ++w) {
        if (w > 0) sentence += ' ';
        sentence += kFiller[uniform(0, kFillerSize - 1)];
      }
      sentences.push_back(capitalize(sentence) + ".");
    }
    Planted p;
    p.enabled = uniform(0, 1) == 1;
    p.fact_answer = "value-" + std::to_string(i);
    p.feature_answer = "Feature-" + std::to_string(i) + (p.enabled ? " is enabled" : " is not enabled");
    const std::string fact = "Entity-" + std::to_string(i) + " relates to " + p.fact_answer + ".";
    sentences.insert(sentences.begin() + static_cast<std::ptrdiff_t>(uniform(0, sentences.size())), fact);
    sentences.insert(sentences.begin() + static_cast<std::ptrdiff_t>(uniform(0, sentences.size())),
                     p.feature_answer + ".");
    std::string text;
    for (const std::string& s : sentences) {
      if (!text.empty()) text += ' ';
      text += s;
    }
    text += '\n';
    docs.push_back({doc_name(i, n_docs), std::move(text)});
    planted.push_back(std::move(p));
  }

  std::vector<std::size_t> order(n_docs);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  const auto make_question = [&](std::size_t doc, std::size_t k, const char* prefix, bool feature) {
    QAExample q;
    char id[32];
    std::snprintf(id, sizeof(id), "%s%04zu", prefix, k);
    q.question_id = id;
    q.gold_doc_id = doc_name(doc, n_docs);
    const Planted& p = planted[doc];
    if (feature) {
      q.question = "Is feature-" + std::to_string(doc) + " enabled?";
      q.gold_text = p.feature_answer;
      q.gold_ynn = p.enabled ? Ynn::kYes : Ynn::kNo;
    } else {
      q.question = "What does entity-" + std::to_string(doc) + " relate to?";
      q.gold_text = p.fact_answer;
      q.gold_ynn = Ynn::kNone;
    }
    return q;
  };

  SynthFixture fixture;
  for (std::size_t k = 0; k < n_docs; ++k) {
    if (k < n_questions) {
      fixture.questions.push_back(make_question(order[k], k, "q", k % 3 == 2));
    } else {
      // Training documents get both question kinds.
      const std::size_t t = 2 * (k - n_questions);
      fixture.train_questions.push_back(make_question(order[k], t, "t", false));
      fixture.train_questions.push_back(make_question(order[k], t + 1, "t", true));
    }
  }
  fixture.corpus = CorpusStore(std::move(docs));
  return fixture;
}

void write_synth_fixture(const SynthFixture& fixture, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const fs::path corpus_dir = dir / "corpus";
  fs::create_directories(corpus_dir);
  for (const Document& d : fixture.corpus.documents()) {
    std::ofstream out(corpus_dir / d.doc_id, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + (corpus_dir / d.doc_id).string());
    out << d.text;
  }
  write_qa_eval(dir / "qa.jsonl", fixture.questions);
  write_qa_eval(dir / "train.jsonl", fixture.train_questions);
}

TrainingRecipe TrainingRecipe::desk_scale(std::uint64_t seed) {
  TrainingRecipe r;
  r.model.seed = seed;
  r.optimizer.learning_rate = 1e-3;
  r.optimizer.weight_decay = 0.01;
  r.optimizer.batch_size = 8;
  r.optimizer.epochs = 30;
  r.optimizer.seed = seed;
  r.augment = {4, 1.0, seed};
  r.negatives = 1;
  return r;
}

void TrainingRecipe::validate() const {
  windowing.validate();
  EncoderConfig m = model;
  m.max_window_len = static_cast<int>(windowing.max_window_len);
  m.validate();
  optimizer.validate();
  augment.validate();
}

TrainedExtractor train_extractor(std::span<const QAExample> examples, const CorpusStore* corpus,
                                 const TrainingRecipe& recipe,
                                 const std::function<void(int, double)>& on_epoch) {
  recipe.validate();
  EncoderConfig model = recipe.model;
  model.max_window_len = static_cast<int>(recipe.windowing.max_window_len);

  LabelingStats stats;
  auto windows = make_training_set(examples, corpus, recipe.windowing, &stats);
  if (windows.empty()) {
    throw DataError("no trainable windows among " + std::to_string(examples.size()) + " examples");
  }
  if (corpus && recipe.negatives > 0) {
    auto negatives =
        make_negative_windows(examples, *corpus, recipe.windowing, recipe.negatives, recipe.augment.seed);
    std::move(negatives.begin(), negatives.end(), std::back_inserter(windows));
  }
  auto training = to_training_examples(windows, model);
  if (recipe.augment.copies > 0) {
    training = augment_shared_tokens(training, recipe.augment, model.vocab_hash_size);
  }
  auto result = train(training, init_params<double>(model), recipe.optimizer, on_epoch);

  return {std::move(result.params), std::move(result.epoch_loss), std::move(stats), windows.size(),
          training.size()};
}

}  // namespace obqa
