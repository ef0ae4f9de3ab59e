#include "anchorlab/backend.hpp"
#include "anchorlab/error.hpp"

#include <cmath>

namespace anchorlab::backend {

std::string exemplar_text(const Shot& shot) {
  const auto pos = shot.input.find_last_not_of(' ');
  if (pos != std::string::npos && shot.input[pos] == '?')
    return shot.input.substr(0, pos) + shot.output;
  return shot.input + " " + shot.output;
}

void GenerationRequest::validate() const {
  if (query.empty()) throw Error(Errc::invalid_argument, "query must be non-empty");
  if (!(temperature >= 0) || !std::isfinite(temperature))
    throw Error(Errc::invalid_argument, "temperature must be finite and >= 0");
  if (max_tokens <= 0) throw Error(Errc::invalid_argument, "max_tokens must be positive");
}

}  // namespace anchorlab::backend
