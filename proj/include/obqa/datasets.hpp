#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "obqa/common.hpp"
#include "obqa/corpus.hpp"
#include "obqa/extractor/heads.hpp"
#include "obqa/extractor/training.hpp"

namespace obqa {

struct QAExample {
  std::string question_id;
  std::string question;
  std::string gold_text;  // empty for unanswerable SQuAD v2 questions
  Ynn gold_ynn = Ynn::kNone;
  std::string gold_doc_id;  // evaluation sets
  std::string context;      // SQuAD paragraphs
  std::optional<std::size_t> answer_start;
};

enum class SquadVersion { kV1_1, kV2_0 };

std::optional<SquadVersion> parse_squad_version(std::string_view text);

// Standard nested data -> paragraphs -> qas layout. Every example is labeled
// ynn = none. Throws ParseError naming the offending JSON path.
std::vector<QAExample> parse_squad(const nlohmann::json& root, SquadVersion version);
std::vector<QAExample> load_squad(const std::filesystem::path& path, SquadVersion version);

// JSON lines of {question_id, question, answer, ynn, doc_id}. Throws
// ParseError with the 1-based line number.
std::vector<QAExample> load_qa_eval(const std::filesystem::path& path);
void write_qa_eval(const std::filesystem::path& path, std::span<const QAExample> examples);

struct LabeledWindow {
  Window window;
  AnswerLabel label;
  TokenList question;
};

// Windows the context and labels each one. The gold character span snaps
// outward to whole tokens; a window holding the whole span gets its start and
// end indices and the example's verdict, every other window gets empty sets
// and ynn = none. Throws LabelingError when the answer is not in the context.
std::vector<LabeledWindow> make_training_windows(const QAExample& example, std::string_view context,
                                                 std::string_view doc_id,
                                                 const WindowingConfig& config);

struct LabelingStats {
  std::size_t examples = 0;
  std::size_t windows = 0;
  std::vector<std::string> skipped;  // question ids that could not be labeled
};

// Uses example.context when present, otherwise the corpus document named by
// gold_doc_id. Unlabelable examples are skipped and counted.
std::vector<LabeledWindow> make_training_set(std::span<const QAExample> examples,
                                             const CorpusStore* corpus,
                                             const WindowingConfig& config,
                                             LabelingStats* stats = nullptr);

// Windows of per_question documents drawn at random (seeded) from the corpus,
// gold document excluded, labeled with no span and verdict none. They teach
// the extractor to stay unsure on documents without the answer.
std::vector<LabeledWindow> make_negative_windows(std::span<const QAExample> examples,
                                                 const CorpusStore& corpus,
                                                 const WindowingConfig& config,
                                                 std::size_t per_question, std::uint64_t seed);

std::vector<TrainingExample> to_training_examples(std::span<const LabeledWindow> windows,
                                                  const EncoderConfig& config);

// Labeling, negatives, augmentation and optimizer settings in one place.
// The model window length follows windowing.max_window_len.
struct TrainingRecipe {
  EncoderConfig model;
  WindowingConfig windowing{32, 16};
  OptimizerConfig optimizer;
  AugmentConfig augment;
  std::size_t negatives = 1;  // non-gold documents per question; needs a corpus

  // The settings used for the synthetic desk-scale runs, every seed set to seed.
  static TrainingRecipe desk_scale(std::uint64_t seed);
  void validate() const;
};

struct TrainedExtractor {
  ModelParams<double> params;
  std::vector<double> epoch_loss;
  LabelingStats labeling;
  std::size_t windows = 0;            // labeled windows, negatives included
  std::size_t training_examples = 0;  // after augmentation
};

// Throws DataError when nothing could be labeled.
TrainedExtractor train_extractor(std::span<const QAExample> examples, const CorpusStore* corpus,
                                 const TrainingRecipe& recipe,
                                 const std::function<void(int, double)>& on_epoch = {});

// Surface text covered by the label's first start and last end.
std::string label_text(const LabeledWindow& labeled, std::string_view context);

struct SynthFixture {
  CorpusStore corpus;
  std::vector<QAExample> questions;        // evaluation questions, one per targeted doc
  std::vector<QAExample> train_questions;  // both question kinds over every remaining doc
};

// Each document carries "Entity-i relates to value-i." and "Feature-i is
// [not] enabled." among random filler sentences. Every third question asks
// the yes/no feature question; the rest ask for the related value.
SynthFixture synth_generate(std::uint64_t seed, std::size_t n_docs, std::size_t n_questions);

// Writes <dir>/corpus/<doc_id>, <dir>/qa.jsonl and <dir>/train.jsonl.
void write_synth_fixture(const SynthFixture& fixture, const std::filesystem::path& dir);

}  // namespace obqa
