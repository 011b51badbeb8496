#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace neurodx {

enum class ErrorCode {
  MissingField,
  NonPositiveIcv,
  DuplicateRegion,
  MalformedFile,
  InvalidConfig,
  UnknownStructure,
  UnknownSex,
  NonPositiveSigma,
  UnknownLobe,
  UnknownTemplateSet,
  MismatchedStructure,
  EmptyReport,
  EmptyGroup,
  EmptyInput,
  NoValidSamples,
  NonFiniteGradient,
  Timeout,
  Unreachable,
  HttpStatus,
  MalformedResponse,
  PortInUse,
  Io,
};

std::string_view to_string(ErrorCode code);

// Errors caused by bad inputs (files, flags, requests) rather than by the
// environment. The CLI maps these to exit code 1 and everything else to 2.
bool is_validation_error(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string field = {});

  ErrorCode code() const noexcept { return code_; }
  // Offending field, row or JSON pointer when known; empty otherwise.
  const std::string& field() const noexcept { return field_; }

 private:
  ErrorCode code_;
  std::string field_;
};

// Transport failure from the chat-completions client.
class ClientError : public Error {
 public:
  ClientError(ErrorCode code, const std::string& message, int attempts, int http_status = 0);

  int attempts() const noexcept { return attempts_; }
  int http_status() const noexcept { return http_status_; }

  std::optional<int> report_index;
  std::optional<int> sample_index;

 private:
  int attempts_;
  int http_status_;
};

}  // namespace neurodx
