#include "beamgrid/error.hpp"

#include <sstream>

namespace beamgrid {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid-argument";
    case ErrorKind::kNoValidSite: return "no-valid-site";
    case ErrorKind::kUndefinedResult: return "undefined-result";
    case ErrorKind::kIterationLimit: return "iteration-limit";
    case ErrorKind::kUnsupportedForm: return "unsupported-form";
    case ErrorKind::kEmptyTrainingSet: return "empty-training-set";
    case ErrorKind::kInsufficientData: return "insufficient-data";
    case ErrorKind::kParse: return "parse-error";
    case ErrorKind::kIo: return "io-error";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

namespace {
std::string iteration_message(int iterations, double tol) {
  std::ostringstream os;
  os << "no convergence after " << iterations << " iterations (marginal error " << tol << ")";
  return os.str();
}
}  // namespace

IterationLimitError::IterationLimitError(int iterations, double achieved_tolerance)
    : Error(ErrorKind::kIterationLimit, iteration_message(iterations, achieved_tolerance)),
      iterations_(iterations),
      achieved_tolerance_(achieved_tolerance) {}

void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace beamgrid
