#pragma once
// Radix-tagged addition items: exact arithmetic, prompt rendering, grading and
// the train / in-distribution / scope-OOD splits.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace anchorlab::arith {

inline constexpr int kMinBase = 2;
inline constexpr int kMaxBase = 36;

inline constexpr std::size_t kTrainSize = 1000;
inline constexpr std::size_t kIdSize = 250;
inline constexpr std::size_t kScopePerLength = 250;

// UnsupportedBase outside [2, 36].
void check_base(int base);

// Digit value of c (0-9, a-z, A-Z), or -1 when c is not a digit of `base`.
int digit_value(char c, int base) noexcept;

// Lowercase digits, no leading zeros ("0" for zero).
std::string to_base(std::uint64_t value, int base);
// InvalidDigit on empty input, foreign characters or overflow.
std::uint64_t from_base(std::string_view digits, int base);

// Schoolbook addition directly on the digit strings.
std::string base_add(int base, std::string_view lhs, std::string_view rhs);

struct BaseProblem {
  int base = 10;
  std::string lhs;
  std::string rhs;
  std::string answer;
  std::string prompt;

  friend bool operator==(const BaseProblem&, const BaseProblem&) = default;
};

// Normalizes operands, computes the answer and renders the prompt.
BaseProblem make_problem(int base, std::string_view lhs, std::string_view rhs);

// "[base=8] 54_8 + 13_8 = ?"
std::string render_problem(const BaseProblem& problem);
// "[base=8] 54_8 + 13_8 = 67_8"
std::string render_exemplar(const BaseProblem& problem);

// Inverse of render_problem. Throws UnparseableQuery.
BaseProblem parse_query(std::string_view text);

enum class Split { train_2d, id_2d, scope_ood };
std::string_view split_name(Split split);

struct DatasetBundle {
  int base = 10;
  std::vector<BaseProblem> train_2d;   // 1000, two-digit operands, repeats allowed
  std::vector<BaseProblem> id_2d;      // 250 distinct pairs, none seen in train_2d
  std::vector<BaseProblem> scope_ood;  // 250 three-digit then 250 four-digit
  std::uint64_t seed = 0;

  friend bool operator==(const DatasetBundle&, const DatasetBundle&) = default;
};

// UnsupportedBase when the base is out of range or too small to leave 250
// unseen two-digit pairs after drawing the training split.
DatasetBundle synthesize_bundle(int base, std::uint64_t seed);

// Last base-B numeral in the response, leading zeros stripped. A "_B" radix
// suffix is skipped; subscript digits end the numeral.
std::optional<std::string> extract_answer(std::string_view response, int base);
bool grade(std::string_view response, std::string_view expected, int base);

// One JSON object per line: {"base","lhs","rhs","answer","split"}.
void write_bundle_jsonl(std::ostream& out, const DatasetBundle& bundle);
DatasetBundle read_bundle_jsonl(std::istream& in);

}  // namespace anchorlab::arith
