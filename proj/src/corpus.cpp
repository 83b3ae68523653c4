#include "obqa/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <sstream>
#include <system_error>

#include "obqa/common.hpp"

namespace obqa {
namespace {

// Decodes one UTF-8 sequence starting at i. Returns the code point and
// advances i; malformed bytes decode as U+FFFD consuming one byte.
char32_t decode_utf8(std::string_view s, std::size_t& i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  if (b0 < 0x80) {
    ++i;
    return b0;
  }
  int extra = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    extra = 1;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    extra = 2;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    extra = 3;
    cp = b0 & 0x07;
  } else {
    ++i;
    return 0xFFFD;
  }
  if (i + extra >= s.size()) {
    ++i;
    return 0xFFFD;
  }
  for (int k = 1; k <= extra; ++k) {
    const auto b = static_cast<unsigned char>(s[i + k]);
    if ((b & 0xC0) != 0x80) {
      ++i;
      return 0xFFFD;
    }
    cp = (cp << 6) | (b & 0x3F);
  }
  i += extra + 1;
  return cp;
}

bool is_word_code_point(char32_t cp) {
  if (cp < 0x80) {
    return (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z') ||
           (cp >= '0' && cp <= '9');
  }
  if (cp <= 0xBF) return false;                    // Latin-1 symbols, NBSP
  if (cp == 0xD7 || cp == 0xF7) return false;      // multiplication, division
  if (cp >= 0x2000 && cp <= 0x2BFF) return false;  // punctuation, symbols
  if (cp >= 0x3000 && cp <= 0x303F) return false;  // CJK punctuation
  if (cp >= 0xFE30 && cp <= 0xFE4F) return false;
  if (cp >= 0xFF00 && cp <= 0xFF0F) return false;
  if (cp == 0xFEFF || cp == 0xFFFD) return false;
  return true;
}

char ascii_lower(char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

}  // namespace

TokenList tokenize(std::string_view text) {
  TokenList tokens;
  std::size_t i = 0;
  std::size_t run_start = 0;
  bool in_run = false;
  while (i < text.size()) {
    const std::size_t at = i;
    const bool word = is_word_code_point(decode_utf8(text, i));
    if (word && !in_run) {
      run_start = at;
      in_run = true;
    } else if (!word && in_run) {
      Token t{std::string(text.substr(run_start, at - run_start)), run_start, at};
      std::transform(t.surface.begin(), t.surface.end(), t.surface.begin(), ascii_lower);
      tokens.push_back(std::move(t));
      in_run = false;
    }
  }
  if (in_run) {
    Token t{std::string(text.substr(run_start)), run_start, text.size()};
    std::transform(t.surface.begin(), t.surface.end(), t.surface.begin(), ascii_lower);
    tokens.push_back(std::move(t));
  }
  return tokens;
}

bool is_valid_utf8(std::string_view bytes) {
  std::size_t i = 0;
  while (i < bytes.size()) {
    const auto b0 = static_cast<unsigned char>(bytes[i]);
    int extra;
    char32_t min_cp;
    if (b0 < 0x80) {
      ++i;
      continue;
    } else if ((b0 & 0xE0) == 0xC0) {
      extra = 1;
      min_cp = 0x80;
    } else if ((b0 & 0xF0) == 0xE0) {
      extra = 2;
      min_cp = 0x800;
    } else if ((b0 & 0xF8) == 0xF0) {
      extra = 3;
      min_cp = 0x10000;
    } else {
      return false;
    }
    if (i + extra >= bytes.size()) return false;
    char32_t cp = b0 & (0x7F >> (extra + 1));
    for (int k = 1; k <= extra; ++k) {
      const auto b = static_cast<unsigned char>(bytes[i + k]);
      if ((b & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (b & 0x3F);
    }
    if (cp < min_cp || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return false;
    i += extra + 1;
  }
  return true;
}

CorpusStore::CorpusStore(std::vector<Document> documents,
                         std::vector<IngestWarning> warnings)
    : documents_(std::move(documents)), warnings_(std::move(warnings)) {
  std::sort(documents_.begin(), documents_.end(),
            [](const Document& a, const Document& b) { return a.doc_id < b.doc_id; });
  for (std::size_t i = 1; i < documents_.size(); ++i) {
    if (documents_[i].doc_id == documents_[i - 1].doc_id) {
      throw DataError("duplicate doc_id in corpus: " + documents_[i].doc_id);
    }
  }
}

const Document* CorpusStore::find(std::string_view doc_id) const {
  auto it = std::lower_bound(
      documents_.begin(), documents_.end(), doc_id,
      [](const Document& d, std::string_view id) { return d.doc_id < id; });
  if (it == documents_.end() || it->doc_id != doc_id) return nullptr;
  return &*it;
}

CorpusStore ingest_corpus(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(root, ec)) {
    throw ConfigError("corpus root is not a readable directory: " + root.string());
  }
  std::vector<Document> docs;
  std::vector<IngestWarning> warnings;
  fs::recursive_directory_iterator it(root, fs::directory_options::skip_permission_denied, ec);
  if (ec) throw ConfigError("cannot read corpus root " + root.string() + ": " + ec.message());
  for (const fs::recursive_directory_iterator end; it != end; it.increment(ec)) {
    if (ec) throw ConfigError("error walking corpus root: " + ec.message());
    if (!it->is_regular_file(ec)) continue;
    const std::string rel = fs::relative(it->path(), root).generic_string();
    std::ifstream in(it->path(), std::ios::binary);
    if (!in) {
      warnings.push_back({rel, "unreadable"});
      continue;
    }
    std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    if (!is_valid_utf8(text)) {
      warnings.push_back({rel, "not valid UTF-8"});
      continue;
    }
    if (text.empty()) {
      warnings.push_back({rel, "empty"});
      continue;
    }
    docs.push_back({rel, std::move(text)});
  }
  std::sort(warnings.begin(), warnings.end(),
            [](const IngestWarning& a, const IngestWarning& b) { return a.path < b.path; });
  return CorpusStore(std::move(docs), std::move(warnings));
}

void WindowingConfig::validate() const {
  if (max_window_len == 0) throw ConfigError("max_window_len must be positive");
  if (stride == 0 || stride > max_window_len) {
    throw ConfigError("stride must satisfy 0 < stride <= max_window_len");
  }
}

std::vector<Window> window_tokens(std::string_view doc_id, const TokenList& tokens,
                                  const WindowingConfig& config) {
  config.validate();
  std::vector<Window> windows;
  const std::size_t n = tokens.size();
  std::size_t start = 0;
  while (start < n) {
    const std::size_t last = std::min(n, start + config.max_window_len) - 1;
    Window w;
    w.doc_id = std::string(doc_id);
    w.window_index = windows.size();
    w.first_token = start;
    w.last_token = last;
    w.tokens.assign(tokens.begin() + static_cast<std::ptrdiff_t>(start),
                    tokens.begin() + static_cast<std::ptrdiff_t>(last) + 1);
    windows.push_back(std::move(w));
    const std::size_t next = start + config.stride;
    if (next + config.stride < n || last + 1 < n) {
      start = next;
    } else {
      break;
    }
  }
  return windows;
}

std::vector<Window> window_document(const Document& doc, const WindowingConfig& config) {
  return window_tokens(doc.doc_id, tokenize(doc.text), config);
}

}  // namespace obqa
