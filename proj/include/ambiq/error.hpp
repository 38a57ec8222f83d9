#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ambiq {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad argument to an algorithm (k out of range, ragged matrix, ...).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. `offset` is a byte offset or a 1-based line
/// number depending on the format; `what()` says which.
class ParseError : public Error {
 public:
  ParseError(std::string file, std::size_t offset, const std::string& detail)
      : Error(file + ":" + std::to_string(offset) + ": " + detail),
        file_(std::move(file)),
        offset_(offset) {}

  const std::string& file() const noexcept { return file_; }
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::string file_;
  std::size_t offset_;
};

/// Two input files disagree about which ids exist.
class IntegrityError : public Error {
 public:
  IntegrityError(const std::string& detail, std::vector<std::string> ids)
      : Error(detail + ": " + join(ids)), ids_(std::move(ids)) {}

  const std::vector<std::string>& ids() const noexcept { return ids_; }

 private:
  static std::string join(const std::vector<std::string>& ids) {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (i) out += ", ";
      out += ids[i];
    }
    return out;
  }
  std::vector<std::string> ids_;
};

/// A value violates a named invariant. `invariant()` is a stable,
/// machine-readable name such as "groups-disjoint".
class ValidationError : public Error {
 public:
  ValidationError(std::string invariant, const std::string& detail,
                  std::size_t line = 0)
      : Error((line ? "line " + std::to_string(line) + ": " : std::string()) +
              invariant + ": " + detail),
        invariant_(std::move(invariant)),
        detail_(detail),
        line_(line) {}

  const std::string& invariant() const noexcept { return invariant_; }
  const std::string& detail() const noexcept { return detail_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string invariant_;
  std::string detail_;
  std::size_t line_;
};

/// Missing key in a keyed store (representation vectors, examples).
class LookupError : public Error {
 public:
  using Error::Error;
};

}  // namespace ambiq
