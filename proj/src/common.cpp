#include "iontrap/common.hpp"

namespace iontrap {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::UnitError: return "UnitError";
    case ErrorCode::Io: return "IoError";
    case ErrorCode::NoWellFound: return "NoWellFound";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::SlewViolation: return "SlewViolation";
    case ErrorCode::AntiTrapping: return "AntiTrapping";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::IonLost: return "IonLost";
    case ErrorCode::UnknownElectrode: return "UnknownElectrode";
    case ErrorCode::DegenerateData: return "DegenerateData";
    case ErrorCode::NoPeak: return "NoPeak";
    case ErrorCode::TruncationTooSmall: return "TruncationTooSmall";
    case ErrorCode::DegenerateVariance: return "DegenerateVariance";
  }
  return "Unknown";
}

}  // namespace iontrap
