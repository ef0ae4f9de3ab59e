#include "anchorlab/common.hpp"
#include "anchorlab/error.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>

namespace anchorlab {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_argument: return "InvalidArgument";
    case Errc::invalid_config: return "InvalidConfig";
    case Errc::fewer_than_two_vectors: return "FewerThanTwoVectors";
    case Errc::dimension_mismatch: return "DimensionMismatch";
    case Errc::degenerate_cluster: return "DegenerateCluster";
    case Errc::zero_norm_vector: return "ZeroNormVector";
    case Errc::non_finite_input: return "NonFiniteInput";
    case Errc::non_positive_density: return "NonPositiveDensity";
    case Errc::invalid_domain: return "InvalidDomain";
    case Errc::range_not_spanned: return "RangeNotSpanned";
    case Errc::insufficient_points: return "InsufficientPoints";
    case Errc::non_positive_width: return "NonPositiveWidth";
    case Errc::invalid_digit: return "InvalidDigit";
    case Errc::unsupported_base: return "UnsupportedBase";
    case Errc::degenerate_curve: return "DegenerateCurve";
    case Errc::non_convergence: return "NonConvergence";
    case Errc::too_few_resamples: return "TooFewResamples";
    case Errc::zero_pooled_variance: return "ZeroPooledVariance";
    case Errc::too_few_samples: return "TooFewSamples";
    case Errc::missing_cell: return "MissingCell";
    case Errc::duplicate_cell: return "DuplicateCell";
    case Errc::invalid_distribution: return "InvalidDistribution";
    case Errc::missing_support: return "MissingSupport";
    case Errc::missing_crit: return "MissingCrit";
    case Errc::transport: return "Transport";
    case Errc::rate_limited: return "RateLimited";
    case Errc::malformed_response: return "MalformedResponse";
    case Errc::unparseable_query: return "UnparseableQuery";
    case Errc::backend_failure: return "BackendFailure";
    case Errc::backend_exhausted: return "BackendExhausted";
    case Errc::unknown_base: return "UnknownBase";
    case Errc::io_failure: return "IoFailure";
  }
  return "Unknown";
}

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc{}) return std::to_string(value);
  return std::string(buf, end);
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = text.find(sep, start);
    out.emplace_back(trim(text.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view text) {
  const char* ws = " \t\r\n";
  std::size_t b = text.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  std::size_t e = text.find_last_not_of(ws);
  return text.substr(b, e - b + 1);
}

}  // namespace anchorlab
