#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace obqa {

// Three-way verdict emitted next to the text answer.
enum class Ynn : std::uint8_t { kYes = 0, kNo = 1, kNone = 2 };

inline constexpr int kNumYnnClasses = 3;

std::string_view to_string(Ynn ynn);

// Case-insensitive: "Yes", "NO", "none" all parse.
std::optional<Ynn> parse_ynn(std::string_view text);

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad parameters, missing artifacts, invalid config files. CLI exit code 1.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data. CLI exit code 2.
class DataError : public Error {
 public:
  using Error::Error;
};

class ParseError : public DataError {
 public:
  using DataError::DataError;
};

// Gold answer could not be located in its context.
class LabelingError : public DataError {
 public:
  using DataError::DataError;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class TransportError : public Error {
 public:
  enum class Kind { kConnection, kTimeout, kHttpStatus, kMalformedBody };

  TransportError(Kind kind, const std::string& what, int status = 0)
      : Error(what), kind_(kind), status_(status) {}

  Kind kind() const { return kind_; }
  int status() const { return status_; }

 private:
  Kind kind_;
  int status_;
};

}  // namespace obqa
