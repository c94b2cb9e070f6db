#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace difftune {

/// Root of every exception thrown by difftune.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated by the caller.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// paramspace
class InvalidSpec : public Error {
 public:
  using Error::Error;
};
class UnprojectableConfig : public Error {
 public:
  using Error::Error;
};

// environments
class DomainError : public Error {
 public:
  using Error::Error;
  DomainError(std::size_t step, const std::string& what)
      : Error("step " + std::to_string(step) + ": " + what), step_(step) {}
  /// Index of the failing operator when raised while folding a sequence.
  std::optional<std::size_t> step() const noexcept { return step_; }

 private:
  std::optional<std::size_t> step_;
};
class GenerationExhausted : public Error {
 public:
  using Error::Error;
};
class OffBoard : public Error {
 public:
  using Error::Error;
};

// llm gateway
class AuthMissing : public Error {
 public:
  using Error::Error;
};
class RateLimited : public Error {
 public:
  using Error::Error;
};
class TransportError : public Error {
 public:
  using Error::Error;
};
class MalformedResponse : public Error {
 public:
  using Error::Error;
};
class ReplayMiss : public Error {
 public:
  using Error::Error;
};

// targets
class BackendError : public Error {
 public:
  BackendError(std::size_t item_index, const std::string& what)
      : Error("item " + std::to_string(item_index) + ": " + what), item_index_(item_index) {}
  std::size_t item_index() const noexcept { return item_index_; }

 private:
  std::size_t item_index_;
};
class NoSolutionFound : public Error {
 public:
  using Error::Error;
};
class HorizonExceeded : public Error {
 public:
  using Error::Error;
};

// designers
class UnparseableResponse : public Error {
 public:
  using Error::Error;
};
class DegenerateDesign : public Error {
 public:
  using Error::Error;
};

// metrics
class InsufficientData : public Error {
 public:
  using Error::Error;
};
class UnknownLevel : public Error {
 public:
  using Error::Error;
};

// orchestrator
class CorruptLog : public Error {
 public:
  using Error::Error;
};

}  // namespace difftune
