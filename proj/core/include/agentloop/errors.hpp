#pragma once

#include <stdexcept>
#include <string>

namespace agentloop {

// Failure categories surfaced across module boundaries.  Callers that need
// to branch on the kind of failure switch on code() instead of parsing text.
enum class ErrorCode {
  IoError,           // filesystem read/write failure
  ConfigError,       // invalid or contradictory configuration
  SchemaMismatch,    // persisted data does not match the expected schema
  SpawnFailure,      // sandbox child process could not be started
  SessionDead,       // sandbox session is closed or unrecoverable
  ProviderError,     // search provider returned an HTTP or auth failure
  QuotaExceeded,     // search provider rate limit exhausted
  ReplayMiss,        // no recorded fixture for a replayed request
  EndpointUnreachable,  // model endpoint connection failure
  AuthFailure,       // model endpoint rejected credentials
  ContextOverflow,   // model request exceeded the context window
  Precondition,      // caller violated an API precondition
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace agentloop
