#include "anchorlab/mock_backend.hpp"

#include <cmath>
#include <random>
#include <regex>

#include "anchorlab/common.hpp"
#include "anchorlab/error.hpp"

namespace anchorlab::backend {
namespace {

constexpr std::uint64_t kCentreKey = 0xc3;
constexpr std::uint64_t kTangentKey = 0x7a;
constexpr std::uint64_t kFreeKey = 0xf0;

std::vector<double> gaussian_unit(std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<double> v(dim);
  double norm = 0;
  do {
    norm = 0;
    for (double& x : v) {
      x = normal(rng);
      norm += x * x;
    }
  } while (norm < 1e-12);
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

// Unit vector orthogonal to `c` (itself unit length).
std::vector<double> tangent(const std::vector<double>& c, std::uint64_t seed) {
  std::uint64_t s = seed;
  while (true) {
    auto w = gaussian_unit(c.size(), s);
    double dot = 0;
    for (std::size_t i = 0; i < c.size(); ++i) dot += w[i] * c[i];
    double norm = 0;
    for (std::size_t i = 0; i < c.size(); ++i) {
      w[i] -= dot * c[i];
      norm += w[i] * w[i];
    }
    if (norm > 1e-6) {
      norm = std::sqrt(norm);
      for (double& x : w) x /= norm;
      return w;
    }
    s = mix64(s);
  }
}

std::optional<int> base_tag(std::string_view text) {
  static const std::regex tag(R"(\[base=(\d+)\])");
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_search(text.begin(), text.end(), m, tag)) return std::nullopt;
  try {
    return std::stoi(m[1].str());
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace

std::string_view decoy_mode_name(DecoyMode mode) {
  return mode == DecoyMode::decimal_leak ? "decimal-leak" : "random-digit";
}

DecoyMode parse_decoy_mode(std::string_view text) {
  if (text == "decimal-leak") return DecoyMode::decimal_leak;
  if (text == "random-digit") return DecoyMode::random_digit;
  throw Error(Errc::invalid_config, "unknown decoy mode '" + std::string(text) + "'");
}

void MockRepositoryConfig::validate() const {
  try {
    params.validate();
  } catch (const Error& e) {
    throw Error(Errc::invalid_config, e.what());
  }
  if (embed_dim < 4) throw Error(Errc::invalid_config, "embed_dim must be >= 4");
  for (const auto& [base, dom] : domains) {
    arith::check_base(base);
    if (!(dom.rho > 0) || !std::isfinite(dom.rho))
      throw Error(Errc::invalid_config, "mock rho for base " + std::to_string(base) + " must be > 0");
    if (!(dom.d >= 0 && dom.d <= 2))
      throw Error(Errc::invalid_config, "mock d for base " + std::to_string(base) + " must be in [0, 2]");
  }
}

MockRepositoryConfig calibrated_mock_config() {
  MockRepositoryConfig cfg;
  cfg.params = {1.0, 8.0, 1.0};
  const struct {
    int base;
    double rho;
    double k50;
  } rows[] = {{10, 12.69, 0.28}, {8, 9.67, 1.83}, {9, 9.62, 2.91}};
  for (const auto& r : rows)
    cfg.domains[r.base] = {r.rho, (cfg.params.alpha * r.rho + cfg.params.gamma * std::log(r.k50)) / cfg.params.beta,
                           DecoyMode::decimal_leak};
  return cfg;
}

MockBackend::MockBackend(MockRepositoryConfig config) : config_(std::move(config)) { config_.validate(); }

const MockDomain& MockBackend::domain(int base) const {
  const auto it = config_.domains.find(base);
  if (it == config_.domains.end()) throw Error(Errc::invalid_config, "mock has no entry for base " + std::to_string(base));
  return it->second;
}

std::vector<double> MockBackend::centre(int base) const {
  return gaussian_unit(config_.embed_dim, derive_seed(config_.seed, {kCentreKey, static_cast<std::uint64_t>(base)}));
}

double MockBackend::correct_probability(int base, std::size_t k) const {
  const auto& dom = domain(base);
  const auto& p = config_.params;
  double s = p.alpha * dom.rho - p.beta * dom.d;
  if (k >= 1) s += p.gamma * std::log(static_cast<double>(k));
  return anchor::success_probability(s);
}

std::string MockBackend::decoy(const arith::BaseProblem& problem, std::uint64_t seed) const {
  const auto& dom = domain(problem.base);
  if (dom.decoy == DecoyMode::decimal_leak && problem.base != 10)
    return std::to_string(arith::from_base(problem.answer, problem.base));

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> digit(0, problem.base - 1);
  std::uniform_int_distribution<int> lead(1, problem.base - 1);
  while (true) {
    std::string out;
    for (std::size_t i = 0; i < problem.answer.size(); ++i)
      out += arith::to_base(static_cast<std::uint64_t>(i == 0 && problem.answer.size() > 1 ? lead(rng) : digit(rng)),
                            problem.base);
    if (out != problem.answer) return out + "_" + std::to_string(problem.base);
  }
}

std::string MockBackend::generate(const GenerationRequest& request) {
  request.validate();
  const auto problem = arith::parse_query(request.query);
  const std::size_t k = request.shots.size();
  const std::uint64_t seed = derive_seed(config_.seed, {request.seed.value_or(0), fnv1a64(request.query), k});
  std::mt19937_64 rng(seed);
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  if (u < correct_probability(problem.base, k)) return problem.answer + "_" + std::to_string(problem.base);
  return decoy(problem, rng());
}

anchor::EmbeddingVector MockBackend::embed(std::string_view text) {
  if (trim(text).empty()) throw Error(Errc::invalid_argument, "cannot embed empty text");
  const std::uint64_t h = fnv1a64(text);
  const auto base = base_tag(text);
  if (!base || !config_.domains.contains(*base))
    return anchor::EmbeddingVector(gaussian_unit(config_.embed_dim, derive_seed(config_.seed, {kFreeKey, h})));

  const auto& dom = domain(*base);
  const auto c = centre(*base);
  const auto w = tangent(c, derive_seed(config_.seed, {kTangentKey, static_cast<std::uint64_t>(*base), h}));

  // Exemplars: angle with sin = 1/(sqrt 2 rho), so two exemplars with near-
  // orthogonal tangents sit about 1/rho apart. Queries: cos = 1 - d.
  double cos_t, sin_t;
  const auto trimmed = trim(text);
  if (trimmed.back() == '?') {
    cos_t = 1.0 - dom.d;
    sin_t = std::sqrt(std::max(0.0, 1.0 - cos_t * cos_t));
  } else {
    sin_t = std::min(1.0, 1.0 / (std::sqrt(2.0) * dom.rho));
    cos_t = std::sqrt(1.0 - sin_t * sin_t);
  }
  std::vector<double> v(c.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = cos_t * c[i] + sin_t * w[i];
  return anchor::EmbeddingVector(std::move(v));
}

Capabilities MockBackend::capabilities() const { return {true, 1 << 16, "mock"}; }

}  // namespace anchorlab::backend
