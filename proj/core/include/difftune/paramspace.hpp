#pragma once

// Declarative design spaces: validation, projection, sampling, perturbation
// and featurization of parameter configurations.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace difftune::paramspace {

/// A choice label. Rotations are integer labels, moves are string labels.
using Label = std::variant<std::int64_t, std::string>;
using LabelList = std::vector<Label>;

/// One coordinate of a configuration: integer | boolean | label | label list.
using ParamValue = std::variant<std::int64_t, bool, Label, LabelList>;

std::string label_to_string(const Label& label);

enum class DomainKind {
  kIntRange,
  kBool,
  kChoice,
  kSubset,
  /// Ordered list of labels whose length equals another int param and whose
  /// per-label repetition is bounded by a second int param.
  kSequence,
};

std::string_view to_string(DomainKind kind);

struct ParamDomain {
  DomainKind kind = DomainKind::kIntRange;
  std::int64_t low = 0;
  std::int64_t high = 0;
  LabelList choices;
  std::size_t min_subset_size = 0;
  std::size_t max_subset_size = 0;
  std::string length_param;
  std::string max_repeat_param;
  std::size_t max_distinct = 0;  // 0: no limit
  std::optional<ParamValue> default_value;

  static ParamDomain int_range(std::int64_t low, std::int64_t high);
  static ParamDomain boolean();
  static ParamDomain choice(LabelList choices);
  static ParamDomain subset(LabelList choices, std::size_t min_size, std::size_t max_size);
  static ParamDomain sequence(LabelList choices, std::string length_param,
                              std::string max_repeat_param, std::size_t max_distinct);

  std::optional<std::size_t> index_of(const Label& label) const;
};

enum class ConstraintKind {
  kImpliesNonempty,  // flag true  -> target subset non-empty
  kImpliesZero,      // flag false -> target int is 0 / target subset is empty
  kFeasibility,      // sum(lhs) >= sum(rhs) over int params
};

std::string_view to_string(ConstraintKind kind);

struct LinearTerm {
  std::string param;
  std::int64_t coef = 1;
};

struct CrossConstraint {
  ConstraintKind kind = ConstraintKind::kImpliesNonempty;
  std::string flag;
  std::string target;
  std::vector<LinearTerm> lhs;
  std::vector<LinearTerm> rhs;
  std::string adjust;  // feasibility: param projection raises first

  static CrossConstraint implies_nonempty(std::string flag, std::string target);
  static CrossConstraint implies_zero(std::string flag, std::string target);
  static CrossConstraint feasibility(std::vector<LinearTerm> lhs, std::vector<LinearTerm> rhs,
                                     std::string adjust);
};

/// The design space V = V_1 x ... x V_k plus cross-parameter constraints.
/// Construction checks well-formedness and throws InvalidSpec.
class ParameterSpec {
 public:
  using Entry = std::pair<std::string, ParamDomain>;

  ParameterSpec(std::string name, std::vector<Entry> params,
                std::vector<CrossConstraint> constraints = {});

  const std::string& name() const { return name_; }
  const std::vector<Entry>& params() const { return params_; }
  const std::vector<CrossConstraint>& constraints() const { return constraints_; }

  /// nullptr when the param is not declared.
  const ParamDomain* find(std::string_view param) const;

 private:
  void check() const;

  std::string name_;
  std::vector<Entry> params_;
  std::vector<CrossConstraint> constraints_;
};

/// A point v in the design space. Keys are sorted, which makes the JSON
/// serialization canonical.
using ParamConfig = std::map<std::string, ParamValue, std::less<>>;

enum class Rule {
  kMissing,
  kUnknownParam,
  kWrongType,
  kBelowLow,
  kAboveHigh,
  kUnknownChoice,
  kDuplicateMember,
  kSubsetTooSmall,
  kSubsetTooLarge,
  kSequenceLength,
  kSequenceRepeat,
  kSequenceDistinct,
  kImpliesNonempty,
  kImpliesZero,
  kFeasibility,
};

std::string_view to_string(Rule rule);

struct Violation {
  std::string param;
  Rule rule = Rule::kMissing;
  std::string detail;

  friend bool operator==(const Violation& a, const Violation& b) {
    return a.param == b.param && a.rule == b.rule;
  }
};

std::string describe(const Violation& violation);

/// Empty iff the config lies in the design space. Violations are data: this
/// never throws.
std::vector<Violation> validate(const ParameterSpec& spec, const ParamConfig& config);

/// Deterministic map onto the design space. Ints clamp to the nearest bound,
/// unknown subset members drop, subsets grow or shrink in choice order,
/// feasibility constraints raise their adjust param minimally. In-domain
/// configs come back unchanged. Throws UnprojectableConfig when a param is
/// missing (or mistyped) and has no default.
ParamConfig project(const ParameterSpec& spec, const ParamConfig& config);

ParamConfig sample_uniform(const ParameterSpec& spec, std::uint64_t seed);

/// Local noisy variant of an in-domain config. Int params step by
/// {-1, 0, +1} * ceil(range / 20); bools flip with p = 0.1; choices resample
/// with p = 0.1; subsets toggle one member with p = 0.2; sequences replace
/// one position with p = 0.2. The result is projected.
ParamConfig perturb(const ParameterSpec& spec, const ParamConfig& base, std::uint64_t seed);

/// Int params min-max scaled to [0, 1], bools 0/1, choices one-hot, subsets
/// membership indicators, sequences per-label counts over the maximum
/// length. Slots follow declaration order.
std::vector<double> featurize(const ParameterSpec& spec, const ParamConfig& config);
std::size_t feature_count(const ParameterSpec& spec);
/// Human readable slot names, e.g. "width", "board_allowed_moves=LEFT".
std::vector<std::string> feature_names(const ParameterSpec& spec);

// Typed accessors; throw InvalidArgument on missing key or wrong alternative.
std::int64_t get_int(const ParamConfig& config, std::string_view name);
bool get_bool(const ParamConfig& config, std::string_view name);
const Label& get_label(const ParamConfig& config, std::string_view name);
const LabelList& get_list(const ParamConfig& config, std::string_view name);

// JSON ---------------------------------------------------------------------

/// {"name", "params": {name: {"kind", ...}}, "constraints": [...]}, params in
/// declaration order.
nlohmann::ordered_json spec_to_json(const ParameterSpec& spec);
ParameterSpec spec_from_json(const nlohmann::ordered_json& doc);

nlohmann::json value_to_json(const ParamValue& value);
nlohmann::json config_to_json(const ParamConfig& config);
/// Compact JSON with sorted keys.
std::string canonical_json(const ParamConfig& config);

struct ParsedConfig {
  ParamConfig config;
  /// Fields present in the document that could not be coerced to the
  /// declared kind (reported as kWrongType, left out of `config`).
  std::vector<Violation> issues;
};

/// Coerces a flat JSON object against the parameter spec: numbers to ints (rounded),
/// "true"/"false" strings to bools, labels matched against choices by value
/// or by spelling. Keys the parameter spec does not declare are ignored.
ParsedConfig config_from_json(const ParameterSpec& spec, const nlohmann::json& doc);

}  // namespace difftune::paramspace
