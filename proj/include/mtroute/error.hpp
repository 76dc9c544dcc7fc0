#pragma once

#include <stdexcept>
#include <string>

namespace mtroute {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid configuration or malformed user input.
struct ConfigError : Error {
  using Error::Error;
};

// Missing key in a lookup table (vector store, corpus, checkpoint).
struct LookupError : Error {
  using Error::Error;
};

// Data present but in the wrong shape: bad dimension, bad number, bad header.
struct FormatError : Error {
  using Error::Error;
};

// A broken internal contract. Seeing one of these is a bug.
struct InvariantError : Error {
  using Error::Error;
};

enum class BackendFailure { kTimeout, kStatus, kMalformed, kTransport, kContract };

inline const char* to_string(BackendFailure f) {
  switch (f) {
    case BackendFailure::kTimeout: return "timeout";
    case BackendFailure::kStatus: return "status";
    case BackendFailure::kMalformed: return "malformed";
    case BackendFailure::kTransport: return "transport";
    case BackendFailure::kContract: return "contract";
  }
  return "unknown";
}

// A translate/score/embed call failed. `backend` names the engine or QE service.
class BackendError : public Error {
 public:
  BackendError(BackendFailure failure, std::string backend, const std::string& detail)
      : Error(backend + ": " + to_string(failure) + ": " + detail),
        failure_(failure),
        backend_(std::move(backend)) {}

  BackendFailure failure() const noexcept { return failure_; }
  const std::string& backend() const noexcept { return backend_; }

 private:
  BackendFailure failure_;
  std::string backend_;
};

}  // namespace mtroute
