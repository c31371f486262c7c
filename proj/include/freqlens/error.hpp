#ifndef FREQLENS_ERROR_HPP
#define FREQLENS_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace freqlens {

enum class ErrorKind {
  kInvalidInput,
  kInvalidConfig,
  kSymmetryViolation,
  kBackendIo,
  kMissingEmbedding,
  kParse,
  kDecode,
  kShape,
  kEmptyInput,
  kIncompatibleReport,
  kIo,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidInput: return "invalid-input";
    case ErrorKind::kInvalidConfig: return "invalid-config";
    case ErrorKind::kSymmetryViolation: return "symmetry-violation";
    case ErrorKind::kBackendIo: return "backend-io";
    case ErrorKind::kMissingEmbedding: return "missing-embedding";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kDecode: return "decode";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kEmptyInput: return "empty-input";
    case ErrorKind::kIncompatibleReport: return "incompatible-report";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

/// Every failure raised by the library carries one of the kinds above so the
/// CLI can map it to an exit code without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind),
        detail_(message) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

/// Re-raises `e` with `context` prepended, keeping its kind.
[[noreturn]] inline void rethrow_with_context(const Error& e,
                                              const std::string& context) {
  throw Error(e.kind(), context + ": " + e.detail());
}

}  // namespace freqlens

#endif  // FREQLENS_ERROR_HPP
