#include "neurodx/error.hpp"

namespace neurodx {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingField: return "MissingField";
    case ErrorCode::NonPositiveIcv: return "NonPositiveICV";
    case ErrorCode::DuplicateRegion: return "DuplicateRegion";
    case ErrorCode::MalformedFile: return "MalformedFile";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::UnknownStructure: return "UnknownStructure";
    case ErrorCode::UnknownSex: return "UnknownSex";
    case ErrorCode::NonPositiveSigma: return "NonPositiveSigma";
    case ErrorCode::UnknownLobe: return "UnknownLobe";
    case ErrorCode::UnknownTemplateSet: return "UnknownTemplateSet";
    case ErrorCode::MismatchedStructure: return "MismatchedStructure";
    case ErrorCode::EmptyReport: return "EmptyReport";
    case ErrorCode::EmptyGroup: return "EmptyGroup";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::NoValidSamples: return "NoValidSamples";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::Unreachable: return "Unreachable";
    case ErrorCode::HttpStatus: return "HTTPStatus";
    case ErrorCode::MalformedResponse: return "MalformedResponse";
    case ErrorCode::PortInUse: return "PortInUse";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

bool is_validation_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonFiniteGradient:
    case ErrorCode::Timeout:
    case ErrorCode::Unreachable:
    case ErrorCode::HttpStatus:
    case ErrorCode::MalformedResponse:
    case ErrorCode::PortInUse:
    case ErrorCode::Io:
    case ErrorCode::NoValidSamples:
      return false;
    default:
      return true;
  }
}

namespace {

std::string compose(ErrorCode code, const std::string& message, const std::string& field) {
  std::string out{to_string(code)};
  out += ": ";
  out += message;
  if (!field.empty()) {
    out += " [";
    out += field;
    out += "]";
  }
  return out;
}

}  // namespace

Error::Error(ErrorCode code, const std::string& message, std::string field)
    : std::runtime_error(compose(code, message, field)), code_(code), field_(std::move(field)) {}

ClientError::ClientError(ErrorCode code, const std::string& message, int attempts, int http_status)
    : Error(code, message + " (after " + std::to_string(attempts) + (attempts == 1 ? " attempt)" : " attempts)")),
      attempts_(attempts),
      http_status_(http_status) {}

}  // namespace neurodx
