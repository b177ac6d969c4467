#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace dddiv {

inline constexpr const char* kToolkitVersion = "0.3.0";

// Error taxonomy shared across the toolkit. Domain errors (bad data, empty
// cells, degenerate designs) map to CLI exit 1; IO/usage errors map to exit 2.
enum class ErrorCode {
  MissingColumn,
  UnbalancedPanel,
  NonConstantUnitAttribute,
  MalformedValue,
  ModeMismatch,
  EmptyCell,
  WeakOrZeroFirstStage,
  ZeroDenominator,
  DegenerateSample,
  ResampleDegenerate,
  NoControlCohort,
  SingularDesign,
  NoCompliers,
  InvalidSpec,
  Io,
  Usage,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

// Neumaier-compensated accumulator. Cell means feed DDD contrasts of nearly
// equal quantities, so plain summation error would surface directly in the
// estimate.
class CompensatedSum {
 public:
  void add(double x) {
    double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }

  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

double compensated_mean(const std::vector<double>& xs);

// Shortest decimal representation that parses back to the same double.
std::string format_double(double x);

// splitmix64; used to derive independent per-replicate seeds from a master
// seed so parallel schedules cannot change results.
inline std::uint64_t mix_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + stream * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// FNV-1a 64-bit digest, used in run manifests.
std::uint64_t fnv1a64(const void* data, std::size_t n);

}  // namespace dddiv
