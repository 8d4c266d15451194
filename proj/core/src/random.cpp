#include "adaptrate/random.hpp"

#include <cstdlib>
#include <string>

#include "adaptrate/error.hpp"

namespace adaptrate {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::DimensionMismatch: return "dimension_mismatch";
    case ErrorCode::NegativeRate: return "negative_rate";
    case ErrorCode::NonFinite: return "non_finite";
    case ErrorCode::ConvergenceFailure: return "convergence_failure";
    case ErrorCode::ImpossibleObservation: return "impossible_observation";
    case ErrorCode::NotFound: return "not_found";
    case ErrorCode::InvalidState: return "invalid_state";
    case ErrorCode::Io: return "io_error";
  }
  return "unknown";
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    static_cast<std::uint32_t>(stream)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

std::uint64_t master_seed_from_env(std::uint64_t fallback) {
  const char* env = std::getenv("ADAPTRATE_SEED");
  if (env == nullptr || *env == '\0') return fallback;
  try {
    return std::stoull(env);
  } catch (const std::exception&) {
    fail(ErrorCode::InvalidArgument, std::string("ADAPTRATE_SEED is not an unsigned integer: ") + env);
  }
}

}  // namespace adaptrate
