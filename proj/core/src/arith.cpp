#include "difftune/arith.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>
#include <unordered_map>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <fmt/format.h>

#include "difftune/embedded_templates.hpp"
#include "difftune/errors.hpp"
#include "difftune/rng.hpp"
#include "difftune/templates.hpp"

namespace difftune::arith {

namespace {

using Float50 = boost::multiprecision::cpp_bin_float_50;

constexpr std::size_t kMaxVerifyLength = 16;

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

Float50 to_float50(const Number& n) {
  if (const auto* i = n.as_integer()) return Float50(*i);
  return Float50(*n.as_double());
}

double checked(double v, std::string_view what) {
  if (!std::isfinite(v)) throw DomainError(std::string(what) + " overflows double precision");
  return v;
}

}  // namespace

std::string_view to_string(Op op) {
  switch (op) {
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kDiv: return "div";
    case Op::kSqrt: return "sqrt";
    case Op::kPow: return "pow";
  }
  return "?";
}

std::optional<Op> parse_op(std::string_view name) {
  const auto n = lower(name);
  for (auto op : kAllOps) {
    if (to_string(op) == n) return op;
  }
  return std::nullopt;
}

std::string join_ops(std::span<const Op> ops, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < ops.size(); ++i) {
    if (i > 0) out += sep;
    out += to_string(ops[i]);
  }
  return out;
}

// Number ---------------------------------------------------------------------

bool Number::is_zero() const {
  if (const auto* i = as_integer()) return i->is_zero();
  return *as_double() == 0.0;
}

bool Number::is_negative() const {
  if (const auto* i = as_integer()) return i->sign() < 0;
  return *as_double() < 0.0;
}

std::string Number::to_string() const {
  if (const auto* i = as_integer()) return i->str();
  const double d = *as_double();
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, d);
  std::string s(buf, res.ptr);
  // Keep a visible fractional part so float-mode values read as floats.
  if (std::isfinite(d) && s.find_first_of(".eE") == std::string::npos) s += ".0";
  return s;
}

nlohmann::json Number::to_json() const {
  if (const auto* i = as_integer()) return i->str();
  return *as_double();
}

Number Number::from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (auto n = parse(s); n && n->is_integer()) return *n;
    throw InvalidArgument("expected a decimal integer string, got '" + s + "'");
  }
  if (j.is_number_integer()) return Number(BigInt(j.get<std::int64_t>()));
  if (j.is_number()) return Number(j.get<double>());
  throw InvalidArgument("expected a number: " + j.dump());
}

std::optional<Number> Number::parse(std::string_view text) {
  const auto b = text.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return std::nullopt;
  const auto e = text.find_last_not_of(" \t\r\n");
  text = text.substr(b, e - b + 1);
  const std::size_t start = (text[0] == '-' || text[0] == '+') ? 1 : 0;
  if (start < text.size() &&
      std::all_of(text.begin() + static_cast<std::ptrdiff_t>(start), text.end(),
                  [](unsigned char c) { return std::isdigit(c) != 0; })) {
    BigInt v(std::string(text[0] == '+' ? text.substr(1) : text));
    return Number(std::move(v));
  }
  double d = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), d);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) return std::nullopt;
  return Number(d);
}

std::size_t Number::digit_count() const {
  if (const auto* i = as_integer()) {
    const BigInt magnitude = boost::multiprecision::abs(*i);
    const auto s = magnitude.str();
    return s.size();
  }
  const double a = std::floor(std::fabs(*as_double()));
  if (a < 1.0) return 1;
  return static_cast<std::size_t>(std::floor(std::log10(a))) + 1;
}

bool close_enough(const Number& a, const Number& b) {
  const auto* ai = a.as_integer();
  const auto* bi = b.as_integer();
  if (ai && bi) {
    const BigInt diff = boost::multiprecision::abs(*ai - *bi);
    const BigInt scale = std::max(BigInt(1), BigInt(boost::multiprecision::abs(*bi)));
    return diff * BigInt(1000000000) <= scale;
  }
  if (!ai && !bi) {
    const double x = *a.as_double();
    const double y = *b.as_double();
    return std::fabs(x - y) <= 1e-9 * std::max(1.0, std::fabs(y));
  }
  const Float50 x = to_float50(a);
  const Float50 y = to_float50(b);
  const Float50 scale = std::max(Float50(1), Float50(abs(y)));
  return abs(x - y) <= Float50(1e-9) * scale;
}

Number apply_op(Op op, const Number& x) {
  if (const auto* i = x.as_integer()) {
    switch (op) {
      case Op::kAdd: return Number(BigInt(*i * 2));
      case Op::kSub: return Number(BigInt(0));
      case Op::kMul:
      case Op::kPow: return Number(BigInt(*i * *i));
      case Op::kDiv:
        if (i->is_zero()) throw DomainError("div at zero");
        return Number(BigInt(1));
      case Op::kSqrt: {
        if (i->sign() < 0) throw DomainError("sqrt of a negative number");
        BigInt r = boost::multiprecision::sqrt(*i);
        if (r * r == *i) return Number(std::move(r));
        const Float50 f = sqrt(Float50(*i));
        return Number(checked(f.convert_to<double>(), "sqrt"));
      }
    }
  }
  const double v = *x.as_double();
  switch (op) {
    case Op::kAdd: return Number(checked(v + v, "add"));
    case Op::kSub: return Number(checked(v - v, "sub"));
    case Op::kMul:
    case Op::kPow: return Number(checked(v * v, "square"));
    case Op::kDiv:
      if (v == 0.0) throw DomainError("div at zero");
      return Number(checked(v / v, "div"));
    case Op::kSqrt:
      if (v < 0.0) throw DomainError("sqrt of a negative number");
      return Number(std::sqrt(v));
  }
  throw InvalidArgument("unknown operator");
}

Number eval_sequence(std::span<const Op> ops, const Number& x) {
  Number v = x;
  for (std::size_t i = 0; i < ops.size(); ++i) {
    try {
      v = apply_op(ops[i], v);
    } catch (const DomainError& e) {
      throw DomainError(i, e.what());
    }
  }
  return v;
}

// Parameters -------------------------------------------------------------------

const paramspace::ParameterSpec& parameter_spec() {
  using paramspace::CrossConstraint;
  using paramspace::Label;
  using paramspace::ParamDomain;
  static const paramspace::ParameterSpec spec = [] {
    paramspace::LabelList ops;
    for (auto op : kAllOps) ops.emplace_back(std::string(to_string(op)));
    return paramspace::ParameterSpec(
        "arithmetic",
        {{"max_range_of_nums", ParamDomain::int_range(5, 50)},
         {"N", ParamDomain::int_range(5, 10)},
         {"K", ParamDomain::int_range(1, 5)},
         {"type_of_nums", ParamDomain::choice({Label("int"), Label("float")})},
         {"operator_sequence", ParamDomain::sequence(ops, "N", "K", 3)}},
        {CrossConstraint::feasibility({{"K", 3}}, {{"N", 1}}, "K")});
  }();
  return spec;
}

ArithParams params_from_config(const paramspace::ParamConfig& config) {
  ArithParams p;
  p.max_range_of_nums = paramspace::get_int(config, "max_range_of_nums");
  p.length = paramspace::get_int(config, "N");
  p.max_repeat = paramspace::get_int(config, "K");
  const auto type = paramspace::label_to_string(paramspace::get_label(config, "type_of_nums"));
  if (type == "int") {
    p.type_of_nums = NumberType::kInt;
  } else if (type == "float") {
    p.type_of_nums = NumberType::kFloat;
  } else {
    throw InvalidArgument("type_of_nums must be int or float, got '" + type + "'");
  }
  for (const auto& label : paramspace::get_list(config, "operator_sequence")) {
    const auto name = paramspace::label_to_string(label);
    const auto op = parse_op(name);
    if (!op) throw InvalidArgument("unknown operator '" + name + "'");
    p.operator_sequence.push_back(*op);
  }
  return p;
}

// Problems ---------------------------------------------------------------------

ArithProblem generate_problem(const ArithParams& params, std::uint64_t seed) {
  if (params.max_range_of_nums < 3) {
    throw InvalidArgument("max_range_of_nums must leave room for an input above 1");
  }
  Rng rng(seed);
  for (int attempt = 0; attempt < kMaxGenerationTries; ++attempt) {
    Number x;
    if (params.type_of_nums == NumberType::kInt) {
      x = Number(BigInt(rng.uniform_int(2, params.max_range_of_nums - 1)));
    } else {
      double u = 0.0;
      while (u == 0.0) u = rng.uniform01();
      x = Number(1.0 + static_cast<double>(params.max_range_of_nums - 1) * u);
    }
    try {
      Number y = eval_sequence(params.operator_sequence, x);
      ArithProblem p{std::move(x), std::move(y), params.operator_sequence, {}};
      p.rendered_prompt = render_prompt(p);
      return p;
    } catch (const DomainError&) {
      continue;
    }
  }
  throw GenerationExhausted(fmt::format("no valid input within {} draws for [{}]",
                                        kMaxGenerationTries, join_ops(params.operator_sequence)));
}

bool verify(const ArithProblem& problem, std::span<const Op> predicted) {
  if (predicted.size() > kMaxVerifyLength) return false;
  try {
    return close_enough(eval_sequence(predicted, problem.x), problem.y);
  } catch (const DomainError&) {
    return false;
  }
}

namespace {

std::string value_key(const Number& n) {
  if (const auto* i = n.as_integer()) return "i" + i->str();
  return fmt::format("d{:016x}", std::bit_cast<std::uint64_t>(*n.as_double()));
}

// Depth-first search over operator sequences with memoized reachability, so
// that dead subtrees sharing a value (everything after sub, div, ...) are
// visited once.
class Search {
 public:
  Search(const ArithProblem& problem, std::span<const Op> allowed)
      : problem_(problem), allowed_(sort_ops(allowed)) {}

  // True when some sequence of length in [min_len, max_len] from `v` hits y.
  bool reachable(const Number& v, std::size_t min_len, std::size_t max_len) {
    if (min_len == 0 && close_enough(v, problem_.y)) return true;
    if (max_len == 0) return false;
    const auto key = fmt::format("{}:{}:{}", value_key(v), min_len, max_len);
    if (const auto it = memo_.find(key); it != memo_.end()) return it->second;
    bool found = false;
    for (auto op : allowed_) {
      const auto next = step(op, v);
      if (next && reachable(*next, min_len == 0 ? 0 : min_len - 1, max_len - 1)) {
        found = true;
        break;
      }
    }
    memo_.emplace(key, found);
    return found;
  }

  void collect(const Number& v, std::size_t max_len, std::size_t cap, std::vector<Op>& prefix,
               std::vector<std::vector<Op>>& out) {
    if (out.size() >= cap) return;
    if (!prefix.empty() && close_enough(v, problem_.y)) out.push_back(prefix);
    if (prefix.size() >= max_len) return;
    const auto remaining = max_len - prefix.size();
    for (auto op : allowed_) {
      if (out.size() >= cap) return;
      const auto next = step(op, v);
      if (!next || !reachable(*next, 0, remaining - 1)) continue;
      prefix.push_back(op);
      collect(*next, max_len, cap, prefix, out);
      prefix.pop_back();
    }
  }

  bool first_exact(const Number& v, std::size_t remaining, std::vector<Op>& prefix) {
    if (remaining == 0) return close_enough(v, problem_.y);
    for (auto op : allowed_) {
      const auto next = step(op, v);
      if (!next || !reachable(*next, remaining - 1, remaining - 1)) continue;
      prefix.push_back(op);
      if (first_exact(*next, remaining - 1, prefix)) return true;
      prefix.pop_back();
    }
    return false;
  }

 private:
  static std::vector<Op> sort_ops(std::span<const Op> allowed) {
    std::vector<Op> ops(allowed.begin(), allowed.end());
    std::sort(ops.begin(), ops.end());
    ops.erase(std::unique(ops.begin(), ops.end()), ops.end());
    return ops;
  }

  static std::optional<Number> step(Op op, const Number& v) {
    try {
      return apply_op(op, v);
    } catch (const DomainError&) {
      return std::nullopt;
    }
  }

  const ArithProblem& problem_;
  std::vector<Op> allowed_;
  std::unordered_map<std::string, bool> memo_;
};

void check_max_len(std::size_t max_len) {
  if (max_len > 10) throw InvalidArgument("enumeration limited to sequences of length 10");
}

}  // namespace

std::vector<std::vector<Op>> enumerate_solutions(const ArithProblem& problem,
                                                 std::span<const Op> allowed,
                                                 std::size_t max_len, std::size_t cap) {
  check_max_len(max_len);
  std::vector<std::vector<Op>> out;
  if (cap == 0 || max_len == 0) return out;
  Search search(problem, allowed);
  std::vector<Op> prefix;
  search.collect(problem.x, max_len, cap, prefix, out);
  return out;
}

std::optional<std::vector<Op>> shortest_solution(const ArithProblem& problem,
                                                 std::span<const Op> allowed,
                                                 std::size_t max_len) {
  check_max_len(max_len);
  Search search(problem, allowed);
  for (std::size_t len = 1; len <= max_len; ++len) {
    std::vector<Op> prefix;
    if (search.first_exact(problem.x, len, prefix)) return prefix;
  }
  return std::nullopt;
}

std::string render_prompt(const ArithProblem& problem) {
  std::string tools;
  for (auto op : kAllOps) {
    const auto name = to_string(op);
    std::string_view effect;
    switch (op) {
      case Op::kAdd: effect = "returns num + num"; break;
      case Op::kSub: effect = "returns num - num"; break;
      case Op::kMul: effect = "returns num * num"; break;
      case Op::kDiv: effect = "returns num / num"; break;
      case Op::kSqrt: effect = "returns the square root of num"; break;
      case Op::kPow: effect = "returns num ** 2"; break;
    }
    tools += fmt::format("- {}(num): {}\n", name, effect);
  }
  if (!tools.empty()) tools.pop_back();
  return templates::render(templates::embedded::arithmetic_question,
                           {{"tools", tools},
                            {"input_number", problem.x.to_string()},
                            {"final_answer", problem.y.to_string()}});
}

std::optional<std::vector<Op>> parse_final_line(std::string_view response) {
  std::optional<std::string_view> last;
  std::size_t pos = 0;
  while (pos <= response.size()) {
    auto end = response.find('\n', pos);
    if (end == std::string_view::npos) end = response.size();
    auto line = response.substr(pos, end - pos);
    const auto b = line.find_first_not_of(" \t\r*`>");
    if (b != std::string_view::npos) {
      line = line.substr(b);
      if (line.size() >= 5 && lower(line.substr(0, 5)) == "final" &&
          (line.size() == 5 || !std::isalnum(static_cast<unsigned char>(line[5])))) {
        last = line.substr(5);
      }
    }
    pos = end + 1;
  }
  if (!last) return std::nullopt;
  std::vector<Op> ops;
  std::string token;
  auto flush = [&]() -> bool {
    if (token.empty()) return true;
    const auto op = parse_op(token);
    token.clear();
    if (!op) return false;
    ops.push_back(*op);
    return true;
  };
  for (char c : *last) {
    if (std::isalpha(static_cast<unsigned char>(c))) {
      token += c;
    } else if (c == ',' || c == ' ' || c == '\t' || c == '\r' || c == '[' || c == ']' ||
               c == '"' || c == '\'' || c == ':' || c == '`' || c == '*' || c == '.' ||
               c == '(' || c == ')') {
      if (!flush()) return std::nullopt;
    } else {
      return std::nullopt;
    }
  }
  if (!flush()) return std::nullopt;
  return ops;
}

nlohmann::json problem_to_json(const ArithProblem& problem) {
  nlohmann::json gt = nlohmann::json::array();
  for (auto op : problem.ground_truth) gt.push_back(std::string(to_string(op)));
  return {{"x", problem.x.to_json()},
          {"y", problem.y.to_json()},
          {"ground_truth", std::move(gt)},
          {"prompt", problem.rendered_prompt}};
}

ArithProblem problem_from_json(const nlohmann::json& j) {
  try {
    ArithProblem p;
    p.x = Number::from_json(j.at("x"));
    p.y = Number::from_json(j.at("y"));
    for (const auto& o : j.at("ground_truth")) {
      const auto name = o.get<std::string>();
      const auto op = parse_op(name);
      if (!op) throw InvalidArgument("unknown operator '" + name + "'");
      p.ground_truth.push_back(*op);
    }
    p.rendered_prompt = j.contains("prompt") ? j.at("prompt").get<std::string>() : render_prompt(p);
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed arithmetic problem: ") + e.what());
  }
}

}  // namespace difftune::arith
