#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace anchorlab {

enum class Errc {
  invalid_argument,
  invalid_config,
  // anchor core
  fewer_than_two_vectors,
  dimension_mismatch,
  degenerate_cluster,
  zero_norm_vector,
  non_finite_input,
  non_positive_density,
  // posterior simulation
  invalid_domain,
  range_not_spanned,
  insufficient_points,
  non_positive_width,
  // arithmetic data
  invalid_digit,
  unsupported_base,
  // psychometric
  degenerate_curve,
  non_convergence,
  too_few_resamples,
  zero_pooled_variance,
  too_few_samples,
  missing_cell,
  duplicate_cell,
  // infometrics
  invalid_distribution,
  missing_support,
  missing_crit,
  // backend
  transport,
  rate_limited,
  malformed_response,
  unparseable_query,
  backend_failure,
  backend_exhausted,
  // harness
  unknown_base,
  io_failure,
};

std::string_view errc_name(Errc code) noexcept;

// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace anchorlab
