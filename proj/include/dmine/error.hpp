#pragma once

#include <stdexcept>
#include <string>

namespace dmine {

// Base of everything the library throws. The category drives CLI exit codes.
class Error : public std::runtime_error {
public:
  enum class Category { validation, io, protocol };

  Error(Category category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  Category category() const noexcept { return category_; }

private:
  Category category_;
};

struct ValidationError : Error {
  explicit ValidationError(const std::string& what) : Error(Category::validation, what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(Category::io, what) {}
};

struct ProtocolError : Error {
  explicit ProtocolError(const std::string& what) : Error(Category::protocol, what) {}
};

// External evaluation failures, one type per failure mode.
struct MissingBatchError : ProtocolError {
  using ProtocolError::ProtocolError;
};
struct DuplicateBatchError : ProtocolError {
  using ProtocolError::ProtocolError;
};
struct StaleBatchError : ProtocolError {
  using ProtocolError::ProtocolError;
};
struct ReplicateCountError : ProtocolError {
  using ProtocolError::ProtocolError;
};
struct NonFiniteValueError : ProtocolError {
  using ProtocolError::ProtocolError;
};
struct MalformedResultError : ProtocolError {
  using ProtocolError::ProtocolError;
};

}  // namespace dmine
