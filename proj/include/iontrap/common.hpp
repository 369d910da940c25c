#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <string_view>

namespace iontrap {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// CODATA values; overridable per layout for other species.
inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;
inline constexpr double kCa40Mass = 6.642156e-26;          // kg
inline constexpr double kElementaryCharge = 1.602176634e-19; // C
inline constexpr double kHbar = 1.054571817e-34;           // J s

enum class ErrorCode {
  InvalidArgument,
  ParseError,
  SchemaError,
  UnitError,
  Io,
  NoWellFound,
  Infeasible,
  SlewViolation,
  AntiTrapping,
  RankDeficient,
  NoConvergence,
  Diverged,
  IonLost,
  UnknownElectrode,
  DegenerateData,
  NoPeak,
  TruncationTooSmall,
  DegenerateVariance,
};

std::string_view to_string(ErrorCode code) noexcept;

// Single exception type for the toolkit; the code carries the failure class.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, const std::string& message) {
  if (!condition) fail(ErrorCode::InvalidArgument, message);
}

}  // namespace iontrap
