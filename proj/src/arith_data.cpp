#include "anchorlab/arith_data.hpp"

#include <algorithm>
#include <cctype>
#include <istream>
#include <ostream>
#include <random>
#include <regex>
#include <set>
#include <utility>

#include "json.hpp"

#include "anchorlab/common.hpp"
#include "anchorlab/error.hpp"

namespace anchorlab::arith {
namespace {

constexpr char kDigits[] = "0123456789abcdefghijklmnopqrstuvwxyz";

std::string strip_zeros(std::string_view digits) {
  const auto first = digits.find_first_not_of('0');
  if (first == std::string_view::npos) return "0";
  std::string out(digits.substr(first));
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

void check_digits(std::string_view digits, int base) {
  if (digits.empty()) throw Error(Errc::invalid_digit, "empty numeral");
  for (char c : digits)
    if (digit_value(c, base) < 0)
      throw Error(Errc::invalid_digit, "'" + std::string(1, c) + "' in base " + std::to_string(base));
}

std::uint64_t power(int base, int exp) {
  std::uint64_t v = 1;
  for (int i = 0; i < exp; ++i) v *= static_cast<std::uint64_t>(base);
  return v;
}

std::vector<BaseProblem> sample_range(int base, std::uint64_t lo, std::uint64_t hi, std::size_t count,
                                      std::mt19937_64& rng) {
  std::uniform_int_distribution<std::uint64_t> pick(lo, hi);
  std::vector<BaseProblem> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto a = pick(rng);
    const auto b = pick(rng);
    out.push_back(make_problem(base, to_base(a, base), to_base(b, base)));
  }
  return out;
}

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

}  // namespace

void check_base(int base) {
  if (base < kMinBase || base > kMaxBase)
    throw Error(Errc::unsupported_base, "base " + std::to_string(base) + " outside [2, 36]");
}

int digit_value(char c, int base) noexcept {
  int v = -1;
  if (c >= '0' && c <= '9') v = c - '0';
  else if (c >= 'a' && c <= 'z') v = c - 'a' + 10;
  else if (c >= 'A' && c <= 'Z') v = c - 'A' + 10;
  return v >= 0 && v < base ? v : -1;
}

std::string to_base(std::uint64_t value, int base) {
  check_base(base);
  if (value == 0) return "0";
  std::string out;
  while (value > 0) {
    out.push_back(kDigits[value % static_cast<std::uint64_t>(base)]);
    value /= static_cast<std::uint64_t>(base);
  }
  std::reverse(out.begin(), out.end());
  return out;
}

std::uint64_t from_base(std::string_view digits, int base) {
  check_base(base);
  check_digits(digits, base);
  std::uint64_t v = 0;
  const auto b = static_cast<std::uint64_t>(base);
  for (char c : digits) {
    const auto d = static_cast<std::uint64_t>(digit_value(c, base));
    if (v > (UINT64_MAX - d) / b) throw Error(Errc::invalid_digit, "numeral overflows 64 bits");
    v = v * b + d;
  }
  return v;
}

std::string base_add(int base, std::string_view lhs, std::string_view rhs) {
  check_base(base);
  check_digits(lhs, base);
  check_digits(rhs, base);
  std::string out;
  int carry = 0;
  auto l = lhs.rbegin();
  auto r = rhs.rbegin();
  while (l != lhs.rend() || r != rhs.rend() || carry) {
    int sum = carry;
    if (l != lhs.rend()) sum += digit_value(*l++, base);
    if (r != rhs.rend()) sum += digit_value(*r++, base);
    out.push_back(kDigits[sum % base]);
    carry = sum / base;
  }
  std::reverse(out.begin(), out.end());
  return strip_zeros(out);
}

BaseProblem make_problem(int base, std::string_view lhs, std::string_view rhs) {
  BaseProblem p;
  p.base = base;
  p.answer = base_add(base, lhs, rhs);
  p.lhs = strip_zeros(lhs);
  p.rhs = strip_zeros(rhs);
  p.prompt = render_problem(p);
  return p;
}

std::string render_problem(const BaseProblem& problem) {
  const std::string b = std::to_string(problem.base);
  return "[base=" + b + "] " + problem.lhs + "_" + b + " + " + problem.rhs + "_" + b + " = ?";
}

std::string render_exemplar(const BaseProblem& problem) {
  const std::string b = std::to_string(problem.base);
  return "[base=" + b + "] " + problem.lhs + "_" + b + " + " + problem.rhs + "_" + b + " = " +
         problem.answer + "_" + b;
}

BaseProblem parse_query(std::string_view text) {
  static const std::regex pattern(R"(^\s*\[base=(\d+)\]\s+([0-9A-Za-z]+)_(\d+)\s*\+\s*([0-9A-Za-z]+)_(\d+)\s*=\s*\?\s*$)");
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_match(text.begin(), text.end(), m, pattern))
    throw Error(Errc::unparseable_query, "not an addition query: " + std::string(text));
  const int base = std::stoi(m[1].str());
  if (std::stoi(m[3].str()) != base || std::stoi(m[5].str()) != base)
    throw Error(Errc::unparseable_query, "operand radix tags disagree with the base tag");
  try {
    return make_problem(base, m[2].str(), m[4].str());
  } catch (const Error& e) {
    throw Error(Errc::unparseable_query, e.what());
  }
}

std::string_view split_name(Split split) {
  switch (split) {
    case Split::train_2d: return "train_2d";
    case Split::id_2d: return "id_2d";
    case Split::scope_ood: return "scope_ood";
  }
  return "unknown";
}

DatasetBundle synthesize_bundle(int base, std::uint64_t seed) {
  check_base(base);
  const std::uint64_t lo2 = static_cast<std::uint64_t>(base);
  const std::uint64_t hi2 = power(base, 2) - 1;

  DatasetBundle bundle;
  bundle.base = base;
  bundle.seed = seed;

  std::mt19937_64 train_rng(derive_seed(seed, {static_cast<std::uint64_t>(base), 0}));
  bundle.train_2d = sample_range(base, lo2, hi2, kTrainSize, train_rng);

  std::set<std::pair<std::string, std::string>> taken;
  for (const auto& p : bundle.train_2d) taken.emplace(p.lhs, p.rhs);
  const std::uint64_t span = hi2 - lo2 + 1;
  if (span * span - taken.size() < kIdSize)
    throw Error(Errc::unsupported_base, "base " + std::to_string(base) +
                                            " leaves too few unseen two-digit pairs for the ID split");

  std::mt19937_64 id_rng(derive_seed(seed, {static_cast<std::uint64_t>(base), 1}));
  std::uniform_int_distribution<std::uint64_t> pick(lo2, hi2);
  while (bundle.id_2d.size() < kIdSize) {
    auto a = to_base(pick(id_rng), base);
    auto b = to_base(pick(id_rng), base);
    if (!taken.emplace(a, b).second) continue;
    bundle.id_2d.push_back(make_problem(base, a, b));
  }

  std::mt19937_64 ood_rng(derive_seed(seed, {static_cast<std::uint64_t>(base), 2}));
  bundle.scope_ood = sample_range(base, power(base, 2), power(base, 3) - 1, kScopePerLength, ood_rng);
  auto four = sample_range(base, power(base, 3), power(base, 4) - 1, kScopePerLength, ood_rng);
  bundle.scope_ood.insert(bundle.scope_ood.end(), four.begin(), four.end());
  return bundle;
}

std::optional<std::string> extract_answer(std::string_view response, int base) {
  check_base(base);
  std::optional<std::string> last;
  std::size_t i = 0;
  while (i < response.size()) {
    if (!is_alnum(response[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < response.size() && is_alnum(response[j])) ++j;
    const auto run = response.substr(i, j - i);
    const bool radix_suffix = i > 0 && response[i - 1] == '_';
    const bool valid = std::all_of(run.begin(), run.end(), [base](char c) { return digit_value(c, base) >= 0; });
    if (valid && !radix_suffix) last = strip_zeros(run);
    i = j;
  }
  return last;
}

bool grade(std::string_view response, std::string_view expected, int base) {
  const auto got = extract_answer(response, base);
  if (!got || expected.empty()) return false;
  return *got == strip_zeros(expected);
}

void write_bundle_jsonl(std::ostream& out, const DatasetBundle& bundle) {
  auto emit = [&](const std::vector<BaseProblem>& items, Split split) {
    for (const auto& p : items) {
      nlohmann::ordered_json row;
      row["base"] = p.base;
      row["lhs"] = p.lhs;
      row["rhs"] = p.rhs;
      row["answer"] = p.answer;
      row["split"] = split_name(split);
      out << row.dump() << '\n';
    }
  };
  emit(bundle.train_2d, Split::train_2d);
  emit(bundle.id_2d, Split::id_2d);
  emit(bundle.scope_ood, Split::scope_ood);
  if (!out) throw Error(Errc::io_failure, "bundle write failed");
}

DatasetBundle read_bundle_jsonl(std::istream& in) {
  DatasetBundle bundle;
  bool first = true;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    nlohmann::json row;
    try {
      row = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::io_failure, std::string("bad bundle line: ") + e.what());
    }
    const int base = row.at("base").get<int>();
    if (first) bundle.base = base;
    first = false;
    if (base != bundle.base) throw Error(Errc::invalid_argument, "bundle mixes bases");
    auto p = make_problem(base, row.at("lhs").get<std::string>(), row.at("rhs").get<std::string>());
    if (p.answer != row.at("answer").get<std::string>())
      throw Error(Errc::invalid_argument, "stored answer disagrees with exact sum for " + p.prompt);
    const auto split = row.at("split").get<std::string>();
    if (split == "train_2d") bundle.train_2d.push_back(std::move(p));
    else if (split == "id_2d") bundle.id_2d.push_back(std::move(p));
    else if (split == "scope_ood") bundle.scope_ood.push_back(std::move(p));
    else throw Error(Errc::invalid_argument, "unknown split " + split);
  }
  return bundle;
}

}  // namespace anchorlab::arith
