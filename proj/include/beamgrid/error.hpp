#pragma once

#include <stdexcept>
#include <string>

namespace beamgrid {

enum class ErrorKind {
  kInvalidArgument,
  kNoValidSite,
  kUndefinedResult,
  kIterationLimit,
  kUnsupportedForm,
  kEmptyTrainingSet,
  kInsufficientData,
  kParse,
  kIo,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Sinkhorn failure; carries the marginal error reached before giving up.
class IterationLimitError : public Error {
 public:
  IterationLimitError(int iterations, double achieved_tolerance);

  int iterations() const noexcept { return iterations_; }
  double achieved_tolerance() const noexcept { return achieved_tolerance_; }

 private:
  int iterations_;
  double achieved_tolerance_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& what);

inline void require(bool condition, const std::string& what) {
  if (!condition) fail(ErrorKind::kInvalidArgument, what);
}

}  // namespace beamgrid
