#ifndef BSP_ERROR_HPP
#define BSP_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace bsp {

enum class ErrorCode {
  InvalidArgument,
  DimensionMismatch,
  NotPositiveSemidefinite,
  SingularMatrix,
  FactorizationFailure,
  Unsupported,
  DegenerateData,
  NonFinite,
  Config,
  Io,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::DimensionMismatch: return "dimension_mismatch";
    case ErrorCode::NotPositiveSemidefinite: return "not_positive_semidefinite";
    case ErrorCode::SingularMatrix: return "singular_matrix";
    case ErrorCode::FactorizationFailure: return "factorization_failure";
    case ErrorCode::Unsupported: return "unsupported";
    case ErrorCode::DegenerateData: return "degenerate_data";
    case ErrorCode::NonFinite: return "non_finite";
    case ErrorCode::Config: return "config";
    case ErrorCode::Io: return "io";
  }
  return "unknown";
}

/// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

namespace detail {

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

}  // namespace detail
}  // namespace bsp

#endif  // BSP_ERROR_HPP
