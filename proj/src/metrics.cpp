#include "obqa/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <map>
#include <sstream>

namespace obqa {

std::vector<std::string> normalize_answer(std::string_view text) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (unsigned char c : text) {
    if (std::ispunct(c)) continue;
    cleaned.push_back(static_cast<char>(std::tolower(c)));
  }
  std::vector<std::string> tokens;
  std::istringstream in(cleaned);
  for (std::string word; in >> word;) {
    if (word == "a" || word == "an" || word == "the") continue;
    tokens.push_back(std::move(word));
  }
  return tokens;
}

int exact_match(std::string_view pred, std::string_view gold) {
  return normalize_answer(pred) == normalize_answer(gold) ? 1 : 0;
}

double token_f1(std::string_view pred, std::string_view gold) {
  const auto p = normalize_answer(pred);
  const auto g = normalize_answer(gold);
  if (p.empty() && g.empty()) return 1.0;
  if (p.empty() || g.empty()) return 0.0;
  std::map<std::string, int> gold_counts;
  for (const auto& t : g) ++gold_counts[t];
  int overlap = 0;
  for (const auto& t : p) {
    auto it = gold_counts.find(t);
    if (it != gold_counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return 0.0;
  const double precision = static_cast<double>(overlap) / static_cast<double>(p.size());
  const double recall = static_cast<double>(overlap) / static_cast<double>(g.size());
  return 2.0 * precision * recall / (precision + recall);
}

double ynn_accuracy(std::span<const Ynn> preds, std::span<const Ynn> golds) {
  if (preds.size() != golds.size()) throw DataError("ynn_accuracy: length mismatch");
  if (preds.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == golds[i];
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

ScoreReport ScoreReport::from_questions(std::vector<QuestionScore> per_question) {
  ScoreReport r;
  r.per_question = std::move(per_question);
  if (r.per_question.empty()) return r;
  for (const QuestionScore& q : r.per_question) {
    r.f1 += q.f1;
    r.em += q.em;
    r.ynn_accuracy += q.ynn_correct ? 1.0 : 0.0;
  }
  const auto n = static_cast<double>(r.per_question.size());
  r.f1 /= n;
  r.em /= n;
  r.ynn_accuracy /= n;
  return r;
}

nlohmann::json to_json(const ScoreReport& report) {
  nlohmann::json per = nlohmann::json::array();
  for (const QuestionScore& q : report.per_question) {
    per.push_back({{"question_id", q.question_id},
                   {"f1", q.f1},
                   {"em", q.em},
                   {"ynn_correct", q.ynn_correct}});
  }
  return {{"f1", report.f1},
          {"em", report.em},
          {"ynn_accuracy", report.ynn_accuracy},
          {"questions", report.per_question.size()},
          {"per_question", per}};
}

std::string score_table(const ScoreReport& report, std::string_view config_name) {
  std::ostringstream out;
  char row[256];
  std::snprintf(row, sizeof(row), "%-24s %8s %8s %8s\n", "Extractor config", "F1", "EM", "YNN");
  out << row;
  std::snprintf(row, sizeof(row), "%-24.24s %8.3f %8.3f %8.3f\n", std::string(config_name).c_str(),
                report.f1, report.em, report.ynn_accuracy);
  out << row;
  return out.str();
}

}  // namespace obqa
