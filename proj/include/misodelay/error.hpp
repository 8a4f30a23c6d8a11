#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace misodelay {

enum class Errc {
  TrainingOverheadExceedsSlot,
  KExceedsAntennas,
  InfeasibleSchedule,
  DeadlineShorterThanSuperframe,
  InvalidParameter,
  DomainError,
  SingularEstimate,
  RejectionBudgetExhausted,
  NonPositiveRate,
  PolicyGridMismatch,
  AllCandidatesUnstable,
  NoFeasibleSchedule,
  ConfigError,
};

std::string_view to_string(Errc code);

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

inline std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::TrainingOverheadExceedsSlot: return "TrainingOverheadExceedsSlot";
    case Errc::KExceedsAntennas: return "KExceedsAntennas";
    case Errc::InfeasibleSchedule: return "InfeasibleSchedule";
    case Errc::DeadlineShorterThanSuperframe: return "DeadlineShorterThanSuperframe";
    case Errc::InvalidParameter: return "InvalidParameter";
    case Errc::DomainError: return "DomainError";
    case Errc::SingularEstimate: return "SingularEstimate";
    case Errc::RejectionBudgetExhausted: return "RejectionBudgetExhausted";
    case Errc::NonPositiveRate: return "NonPositiveRate";
    case Errc::PolicyGridMismatch: return "PolicyGridMismatch";
    case Errc::AllCandidatesUnstable: return "AllCandidatesUnstable";
    case Errc::NoFeasibleSchedule: return "NoFeasibleSchedule";
    case Errc::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

}  // namespace misodelay
