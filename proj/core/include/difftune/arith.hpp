#pragma once

// Arithmetic operator-sequence task: given x and y, recover operators o_1..o_N
// with y = (o_N . ... . o_1)(x). Every operator is unary; binary operators
// take the same value for both operands.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>
#include <nlohmann/json.hpp>

#include "difftune/paramspace.hpp"

namespace difftune::arith {

using BigInt = boost::multiprecision::cpp_int;

enum class Op { kAdd, kSub, kMul, kDiv, kSqrt, kPow };

inline constexpr std::array<Op, 6> kAllOps = {Op::kAdd, Op::kSub, Op::kMul,
                                              Op::kDiv, Op::kSqrt, Op::kPow};

std::string_view to_string(Op op);
std::optional<Op> parse_op(std::string_view name);
std::string join_ops(std::span<const Op> ops, std::string_view sep = ", ");

/// Exact integer while every step keeps the value integral (int-mode inputs
/// through add/sub/mul/div/pow and perfect-square roots); binary double
/// otherwise.
class Number {
 public:
  Number() : value_(BigInt(0)) {}
  Number(BigInt v) : value_(std::move(v)) {}  // NOLINT(google-explicit-constructor)
  Number(double v) : value_(v) {}             // NOLINT(google-explicit-constructor)
  Number(int v) : value_(BigInt(v)) {}        // NOLINT(google-explicit-constructor)

  bool is_integer() const { return std::holds_alternative<BigInt>(value_); }
  const BigInt* as_integer() const { return std::get_if<BigInt>(&value_); }
  const double* as_double() const { return std::get_if<double>(&value_); }
  bool is_zero() const;
  bool is_negative() const;

  /// Decimal digits for integers, shortest round-trip form for doubles.
  std::string to_string() const;
  /// Integers become decimal strings, doubles JSON numbers.
  nlohmann::json to_json() const;
  static Number from_json(const nlohmann::json& j);
  /// Integer literal -> exact; anything else parsed as a double.
  static std::optional<Number> parse(std::string_view text);

  /// Number of decimal digits of the integer part magnitude.
  std::size_t digit_count() const;

  friend bool operator==(const Number& a, const Number& b) { return a.value_ == b.value_; }

 private:
  std::variant<BigInt, double> value_;
};

/// |a - b| <= 1e-9 * max(1, |b|); exact rational check when both are integers.
bool close_enough(const Number& a, const Number& b);

/// Throws DomainError for sqrt of a negative, div at zero, or a double that
/// leaves the finite range.
Number apply_op(Op op, const Number& x);

/// Left fold of apply_op. DomainError carries the failing step index.
Number eval_sequence(std::span<const Op> ops, const Number& x);

enum class NumberType { kInt, kFloat };

struct ArithParams {
  std::int64_t max_range_of_nums = 10;
  std::int64_t length = 5;      // N
  std::int64_t max_repeat = 2;  // K
  NumberType type_of_nums = NumberType::kInt;
  std::vector<Op> operator_sequence;
};

/// max_range_of_nums in [5,50], N in [5,10], K in [1,5], type_of_nums in
/// {int, float}, operator_sequence of length N over at most 3 distinct
/// operators each repeated at most K times; 3*K >= N.
const paramspace::ParameterSpec& parameter_spec();
ArithParams params_from_config(const paramspace::ParamConfig& config);

struct ArithProblem {
  Number x;
  Number y;
  std::vector<Op> ground_truth;
  std::string rendered_prompt;
};

inline constexpr int kMaxGenerationTries = 100;

/// x uniform in (1, max_range_of_nums) (integers 2..max-1 in int mode),
/// y = eval_sequence(operator_sequence, x). Resamples x when an intermediate
/// raises DomainError; GenerationExhausted after kMaxGenerationTries.
ArithProblem generate_problem(const ArithParams& params, std::uint64_t seed);

/// True iff the predicted sequence maps x to y within tolerance. A
/// DomainError while evaluating the prediction counts as wrong.
bool verify(const ArithProblem& problem, std::span<const Op> predicted);

/// All sequences of length 1..max_len over `allowed` that verify, in
/// lexicographic order (operator order as in kAllOps), truncated at `cap`.
std::vector<std::vector<Op>> enumerate_solutions(const ArithProblem& problem,
                                                 std::span<const Op> allowed,
                                                 std::size_t max_len, std::size_t cap);

/// Shortest verifying sequence, lexicographically first among equal lengths.
std::optional<std::vector<Op>> shortest_solution(const ArithProblem& problem,
                                                 std::span<const Op> allowed,
                                                 std::size_t max_len);

std::string render_prompt(const ArithProblem& problem);

/// Operators from the last line starting with FINAL. nullopt when no FINAL
/// line exists or a token is not an operator name.
std::optional<std::vector<Op>> parse_final_line(std::string_view response);

nlohmann::json problem_to_json(const ArithProblem& problem);
ArithProblem problem_from_json(const nlohmann::json& j);

}  // namespace difftune::arith
