#include "dddiv/common.hpp"

#include <charconv>
#include <cmath>
#include <cstring>

namespace dddiv {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::UnbalancedPanel: return "UnbalancedPanel";
    case ErrorCode::NonConstantUnitAttribute: return "NonConstantUnitAttribute";
    case ErrorCode::MalformedValue: return "MalformedValue";
    case ErrorCode::ModeMismatch: return "ModeMismatch";
    case ErrorCode::EmptyCell: return "EmptyCell";
    case ErrorCode::WeakOrZeroFirstStage: return "WeakOrZeroFirstStage";
    case ErrorCode::ZeroDenominator: return "ZeroDenominator";
    case ErrorCode::DegenerateSample: return "DegenerateSample";
    case ErrorCode::ResampleDegenerate: return "ResampleDegenerate";
    case ErrorCode::NoControlCohort: return "NoControlCohort";
    case ErrorCode::SingularDesign: return "SingularDesign";
    case ErrorCode::NoCompliers: return "NoCompliers";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Usage: return "Usage";
  }
  return "UnknownError";
}

double compensated_mean(const std::vector<double>& xs) {
  CompensatedSum s;
  for (double x : xs) s.add(x);
  return s.value() / static_cast<double>(xs.size());
}

std::string format_double(double x) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

std::uint64_t fnv1a64(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace dddiv
