#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "obqa/common.hpp"

namespace obqa {

// SQuAD-style: lowercase, strip ASCII punctuation, drop a/an/the, split on
// whitespace.
std::vector<std::string> normalize_answer(std::string_view text);

int exact_match(std::string_view pred, std::string_view gold);

// Multiset token overlap F1. Both empty -> 1, exactly one empty -> 0.
double token_f1(std::string_view pred, std::string_view gold);

// Throws DataError on a length mismatch. Empty input scores 0.
double ynn_accuracy(std::span<const Ynn> preds, std::span<const Ynn> golds);

struct QuestionScore {
  std::string question_id;
  double f1 = 0.0;
  int em = 0;
  bool ynn_correct = false;
};

struct ScoreReport {
  double f1 = 0.0;
  double em = 0.0;
  double ynn_accuracy = 0.0;
  std::vector<QuestionScore> per_question;

  // Aggregates are recomputed as means of per_question.
  static ScoreReport from_questions(std::vector<QuestionScore> per_question);
};

nlohmann::json to_json(const ScoreReport& report);

// Table laid out as "config | F1 | EM | YNN".
std::string score_table(const ScoreReport& report, std::string_view config_name);

}  // namespace obqa
