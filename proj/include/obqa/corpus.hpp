#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace obqa {

struct Token {
  std::string surface;  // case-folded
  std::size_t char_start = 0;
  std::size_t char_end = 0;  // one past the last byte

  bool operator==(const Token&) const = default;
};

using TokenList = std::vector<Token>;

// Splits text into maximal runs of letters/digits, ASCII-lowercased.
// Offsets are byte offsets into the original UTF-8 string. Non-ASCII code
// points count as letters except the Latin-1 symbol range and the general
// punctuation / symbol blocks.
TokenList tokenize(std::string_view text);

struct Document {
  std::string doc_id;  // path relative to the corpus root, '/'-separated
  std::string text;

  std::size_t byte_len() const { return text.size(); }
};

struct IngestWarning {
  std::string path;
  std::string reason;
};

// Immutable set of documents ordered by doc_id.
class CorpusStore {
 public:
  CorpusStore() = default;
  explicit CorpusStore(std::vector<Document> documents,
                       std::vector<IngestWarning> warnings = {});

  std::size_t size() const { return documents_.size(); }
  bool empty() const { return documents_.empty(); }
  const std::vector<Document>& documents() const { return documents_; }
  const Document& operator[](std::size_t i) const { return documents_[i]; }
  const std::vector<IngestWarning>& warnings() const { return warnings_; }

  // nullptr when absent.
  const Document* find(std::string_view doc_id) const;

 private:
  std::vector<Document> documents_;
  std::vector<IngestWarning> warnings_;
};

bool is_valid_utf8(std::string_view bytes);

// One Document per regular file under root (recursive). Files that are not
// valid UTF-8 or are empty after reading are skipped and recorded as
// warnings. Throws ConfigError when root is missing or unreadable.
CorpusStore ingest_corpus(const std::filesystem::path& root);

struct WindowingConfig {
  std::size_t max_window_len = 384;
  std::size_t stride = 128;

  void validate() const;
};

struct Window {
  std::string doc_id;
  std::size_t window_index = 0;
  std::size_t first_token = 0;
  std::size_t last_token = 0;  // inclusive
  TokenList tokens;

  std::size_t size() const { return tokens.size(); }
};

// Windows start at 0, stride, 2*stride, ... A start s > 0 is emitted while
// s + stride < num_tokens, or while the previous window stops short of the
// last token; the final window therefore always reaches the document end.
// An empty token list yields no windows.
std::vector<Window> window_tokens(std::string_view doc_id,
                                  const TokenList& tokens,
                                  const WindowingConfig& config);

std::vector<Window> window_document(const Document& doc,
                                    const WindowingConfig& config);

}  // namespace obqa
