#include "rwfn/error.hpp"

namespace rwfn {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid-argument";
    case ErrorKind::numeric: return "numeric-error";
    case ErrorKind::lookup: return "lookup-error";
    case ErrorKind::schema: return "schema-error";
    case ErrorKind::consistency: return "consistency-error";
    case ErrorKind::parse: return "parse-error";
    case ErrorKind::split: return "split-error";
    case ErrorKind::state: return "state-error";
    case ErrorKind::config: return "config-error";
    case ErrorKind::compatibility: return "compatibility-error";
    case ErrorKind::io: return "io-error";
  }
  return "error";
}

void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, std::string(to_string(kind)) + ": " + message);
}

}  // namespace rwfn
