#include "textres/core/error.hpp"

namespace textres {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "InvalidInput";
    case ErrorKind::InvalidParam: return "InvalidParam";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
    case ErrorKind::ModuleMismatch: return "ModuleMismatch";
    case ErrorKind::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorKind::Io: return "Io";
    case ErrorKind::DependencyMissing: return "DependencyMissing";
    case ErrorKind::DataError: return "DataError";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::InternalError: return "InternalError";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace textres
