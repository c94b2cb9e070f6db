#include "difftune/paramspace.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <fmt/format.h>

#include "difftune/errors.hpp"
#include "difftune/rng.hpp"

namespace difftune::paramspace {

std::string label_to_string(const Label& label) {
  if (const auto* i = std::get_if<std::int64_t>(&label)) return std::to_string(*i);
  return std::get<std::string>(label);
}

std::string_view to_string(DomainKind kind) {
  switch (kind) {
    case DomainKind::kIntRange: return "int-range";
    case DomainKind::kBool: return "bool";
    case DomainKind::kChoice: return "choice";
    case DomainKind::kSubset: return "subset-of-choices";
    case DomainKind::kSequence: return "sequence-of-choices";
  }
  return "?";
}

std::string_view to_string(ConstraintKind kind) {
  switch (kind) {
    case ConstraintKind::kImpliesNonempty: return "implies-nonempty";
    case ConstraintKind::kImpliesZero: return "implies-zero";
    case ConstraintKind::kFeasibility: return "feasibility";
  }
  return "?";
}

std::string_view to_string(Rule rule) {
  switch (rule) {
    case Rule::kMissing: return "missing";
    case Rule::kUnknownParam: return "unknown-param";
    case Rule::kWrongType: return "wrong-type";
    case Rule::kBelowLow: return "below-low";
    case Rule::kAboveHigh: return "above-high";
    case Rule::kUnknownChoice: return "unknown-choice";
    case Rule::kDuplicateMember: return "duplicate-member";
    case Rule::kSubsetTooSmall: return "subset-too-small";
    case Rule::kSubsetTooLarge: return "subset-too-large";
    case Rule::kSequenceLength: return "sequence-length";
    case Rule::kSequenceRepeat: return "sequence-repeat";
    case Rule::kSequenceDistinct: return "sequence-distinct";
    case Rule::kImpliesNonempty: return "implies-nonempty";
    case Rule::kImpliesZero: return "implies-zero";
    case Rule::kFeasibility: return "feasibility";
  }
  return "?";
}

std::string describe(const Violation& v) {
  if (v.detail.empty()) return fmt::format("{}: {}", v.param, to_string(v.rule));
  return fmt::format("{}: {} ({})", v.param, to_string(v.rule), v.detail);
}

// ---------------------------------------------------------------------------
// Domains and constraints

ParamDomain ParamDomain::int_range(std::int64_t low, std::int64_t high) {
  ParamDomain d;
  d.kind = DomainKind::kIntRange;
  d.low = low;
  d.high = high;
  return d;
}

ParamDomain ParamDomain::boolean() {
  ParamDomain d;
  d.kind = DomainKind::kBool;
  return d;
}

ParamDomain ParamDomain::choice(LabelList choices) {
  ParamDomain d;
  d.kind = DomainKind::kChoice;
  d.choices = std::move(choices);
  return d;
}

ParamDomain ParamDomain::subset(LabelList choices, std::size_t min_size, std::size_t max_size) {
  ParamDomain d;
  d.kind = DomainKind::kSubset;
  d.choices = std::move(choices);
  d.min_subset_size = min_size;
  d.max_subset_size = max_size;
  return d;
}

ParamDomain ParamDomain::sequence(LabelList choices, std::string length_param,
                                  std::string max_repeat_param, std::size_t max_distinct) {
  ParamDomain d;
  d.kind = DomainKind::kSequence;
  d.choices = std::move(choices);
  d.length_param = std::move(length_param);
  d.max_repeat_param = std::move(max_repeat_param);
  d.max_distinct = max_distinct;
  return d;
}

std::optional<std::size_t> ParamDomain::index_of(const Label& label) const {
  const auto it = std::find(choices.begin(), choices.end(), label);
  if (it == choices.end()) return std::nullopt;
  return static_cast<std::size_t>(it - choices.begin());
}

CrossConstraint CrossConstraint::implies_nonempty(std::string flag, std::string target) {
  CrossConstraint c;
  c.kind = ConstraintKind::kImpliesNonempty;
  c.flag = std::move(flag);
  c.target = std::move(target);
  return c;
}

CrossConstraint CrossConstraint::implies_zero(std::string flag, std::string target) {
  CrossConstraint c;
  c.kind = ConstraintKind::kImpliesZero;
  c.flag = std::move(flag);
  c.target = std::move(target);
  return c;
}

CrossConstraint CrossConstraint::feasibility(std::vector<LinearTerm> lhs,
                                             std::vector<LinearTerm> rhs, std::string adjust) {
  CrossConstraint c;
  c.kind = ConstraintKind::kFeasibility;
  c.lhs = std::move(lhs);
  c.rhs = std::move(rhs);
  c.adjust = std::move(adjust);
  return c;
}

ParameterSpec::ParameterSpec(std::string name, std::vector<Entry> params,
                             std::vector<CrossConstraint> constraints)
    : name_(std::move(name)), params_(std::move(params)), constraints_(std::move(constraints)) {
  check();
}

const ParamDomain* ParameterSpec::find(std::string_view param) const {
  for (const auto& [name, domain] : params_) {
    if (name == param) return &domain;
  }
  return nullptr;
}

namespace {

bool value_fits(const ParamDomain& d, const ParamValue& v);

}  // namespace

void ParameterSpec::check() const {
  std::set<std::string, std::less<>> seen;
  for (const auto& [name, d] : params_) {
    if (name.empty()) throw InvalidSpec("empty param name");
    if (!seen.insert(name).second) throw InvalidSpec("duplicate param '" + name + "'");
    switch (d.kind) {
      case DomainKind::kIntRange:
        if (d.low > d.high) throw InvalidSpec(name + ": low > high");
        break;
      case DomainKind::kBool:
        break;
      case DomainKind::kChoice:
      case DomainKind::kSubset:
      case DomainKind::kSequence: {
        if (d.choices.empty()) throw InvalidSpec(name + ": empty choices");
        std::set<Label> unique(d.choices.begin(), d.choices.end());
        if (unique.size() != d.choices.size()) throw InvalidSpec(name + ": duplicate choices");
        if (d.kind == DomainKind::kSubset &&
            !(d.min_subset_size <= d.max_subset_size && d.max_subset_size <= d.choices.size())) {
          throw InvalidSpec(name + ": subset size bounds");
        }
        break;
      }
    }
    if (d.default_value && !value_fits(d, *d.default_value)) {
      throw InvalidSpec(name + ": default outside its domain");
    }
  }
  auto require = [&](const std::string& param, std::initializer_list<DomainKind> kinds,
                     const char* role) -> const ParamDomain& {
    const ParamDomain* d = find(param);
    if (d == nullptr) throw InvalidSpec(fmt::format("{} references undeclared param '{}'", role, param));
    if (std::find(kinds.begin(), kinds.end(), d->kind) == kinds.end()) {
      throw InvalidSpec(fmt::format("{} param '{}' has kind {}", role, param, to_string(d->kind)));
    }
    return *d;
  };
  for (const auto& [name, d] : params_) {
    if (d.kind != DomainKind::kSequence) continue;
    const auto& len = require(d.length_param, {DomainKind::kIntRange}, "sequence length");
    if (len.low < 0) throw InvalidSpec(name + ": sequence length may be negative");
    if (!d.max_repeat_param.empty()) {
      require(d.max_repeat_param, {DomainKind::kIntRange}, "sequence repeat");
    }
  }
  for (const auto& c : constraints_) {
    switch (c.kind) {
      case ConstraintKind::kImpliesNonempty: {
        require(c.flag, {DomainKind::kBool}, "constraint flag");
        const auto& t = require(c.target, {DomainKind::kSubset}, "implies-nonempty target");
        if (t.max_subset_size == 0) throw InvalidSpec(c.target + ": can never be non-empty");
        break;
      }
      case ConstraintKind::kImpliesZero: {
        require(c.flag, {DomainKind::kBool}, "constraint flag");
        const auto& t =
            require(c.target, {DomainKind::kIntRange, DomainKind::kSubset}, "implies-zero target");
        if (t.kind == DomainKind::kIntRange && (t.low > 0 || t.high < 0)) {
          throw InvalidSpec(c.target + ": domain excludes 0");
        }
        if (t.kind == DomainKind::kSubset && t.min_subset_size > 0) {
          throw InvalidSpec(c.target + ": domain excludes the empty set");
        }
        break;
      }
      case ConstraintKind::kFeasibility: {
        if (c.lhs.empty() && c.rhs.empty()) throw InvalidSpec("feasibility without terms");
        for (const auto& t : c.lhs) require(t.param, {DomainKind::kIntRange}, "feasibility");
        for (const auto& t : c.rhs) require(t.param, {DomainKind::kIntRange}, "feasibility");
        require(c.adjust, {DomainKind::kIntRange}, "feasibility adjust");
        break;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Accessors

namespace {

template <typename T>
const T& get_as(const ParamConfig& config, std::string_view name, const char* what) {
  const auto it = config.find(name);
  if (it == config.end()) throw InvalidArgument(fmt::format("missing param '{}'", name));
  const T* v = std::get_if<T>(&it->second);
  if (v == nullptr) throw InvalidArgument(fmt::format("param '{}' is not {}", name, what));
  return *v;
}

}  // namespace

std::int64_t get_int(const ParamConfig& config, std::string_view name) {
  return get_as<std::int64_t>(config, name, "an integer");
}
bool get_bool(const ParamConfig& config, std::string_view name) {
  return get_as<bool>(config, name, "a boolean");
}
const Label& get_label(const ParamConfig& config, std::string_view name) {
  return get_as<Label>(config, name, "a label");
}
const LabelList& get_list(const ParamConfig& config, std::string_view name) {
  return get_as<LabelList>(config, name, "a label list");
}

// ---------------------------------------------------------------------------
// Validation

namespace {

const std::int64_t* int_of(const ParamConfig& c, std::string_view name) {
  const auto it = c.find(name);
  return it == c.end() ? nullptr : std::get_if<std::int64_t>(&it->second);
}
const bool* bool_of(const ParamConfig& c, std::string_view name) {
  const auto it = c.find(name);
  return it == c.end() ? nullptr : std::get_if<bool>(&it->second);
}
const LabelList* list_of(const ParamConfig& c, std::string_view name) {
  const auto it = c.find(name);
  return it == c.end() ? nullptr : std::get_if<LabelList>(&it->second);
}

bool value_fits(const ParamDomain& d, const ParamValue& v) {
  switch (d.kind) {
    case DomainKind::kIntRange: {
      const auto* i = std::get_if<std::int64_t>(&v);
      return i != nullptr && *i >= d.low && *i <= d.high;
    }
    case DomainKind::kBool:
      return std::holds_alternative<bool>(v);
    case DomainKind::kChoice: {
      const auto* l = std::get_if<Label>(&v);
      return l != nullptr && d.index_of(*l).has_value();
    }
    case DomainKind::kSubset:
    case DomainKind::kSequence: {
      const auto* l = std::get_if<LabelList>(&v);
      if (l == nullptr) return false;
      return std::all_of(l->begin(), l->end(),
                         [&](const Label& x) { return d.index_of(x).has_value(); });
    }
  }
  return false;
}

std::map<Label, std::size_t> label_counts(const LabelList& items) {
  std::map<Label, std::size_t> counts;
  for (const auto& x : items) ++counts[x];
  return counts;
}

// Whether some feasibility constraint in the parameter spec relates the two params, so
// that an infeasible repeat cap is reported once, as that constraint.
bool feasibility_covers(const ParameterSpec& spec, const std::string& a, const std::string& b) {
  for (const auto& c : spec.constraints()) {
    if (c.kind != ConstraintKind::kFeasibility) continue;
    bool has_a = false;
    bool has_b = false;
    for (const auto* side : {&c.lhs, &c.rhs}) {
      for (const auto& t : *side) {
        has_a = has_a || t.param == a;
        has_b = has_b || t.param == b;
      }
    }
    if (has_a && has_b) return true;
  }
  return false;
}

std::int64_t linear_sum(const std::vector<LinearTerm>& terms, const ParamConfig& c, bool& ok) {
  std::int64_t total = 0;
  for (const auto& t : terms) {
    const auto* v = int_of(c, t.param);
    if (v == nullptr) {
      ok = false;
      return 0;
    }
    total += t.coef * *v;
  }
  return total;
}

std::string linear_text(const std::vector<LinearTerm>& terms, const ParamConfig& c) {
  std::string out;
  for (const auto& t : terms) {
    if (!out.empty()) out += " + ";
    const auto* v = int_of(c, t.param);
    out += fmt::format("{}*{}={}", t.coef, t.param, v ? t.coef * *v : 0);
  }
  return out.empty() ? "0" : out;
}

void validate_param(const ParameterSpec& spec, const std::string& name, const ParamDomain& d,
                    const ParamValue& value, const ParamConfig& config,
                    std::vector<Violation>& out) {
  auto add = [&](Rule rule, std::string detail = {}) {
    out.push_back({name, rule, std::move(detail)});
  };
  switch (d.kind) {
    case DomainKind::kIntRange: {
      const auto* i = std::get_if<std::int64_t>(&value);
      if (i == nullptr) return add(Rule::kWrongType, "expected integer");
      if (*i < d.low) add(Rule::kBelowLow, fmt::format("{} < {}", *i, d.low));
      if (*i > d.high) add(Rule::kAboveHigh, fmt::format("{} > {}", *i, d.high));
      return;
    }
    case DomainKind::kBool:
      if (!std::holds_alternative<bool>(value)) add(Rule::kWrongType, "expected boolean");
      return;
    case DomainKind::kChoice: {
      const auto* l = std::get_if<Label>(&value);
      if (l == nullptr) return add(Rule::kWrongType, "expected label");
      if (!d.index_of(*l)) add(Rule::kUnknownChoice, label_to_string(*l));
      return;
    }
    case DomainKind::kSubset: {
      const auto* l = std::get_if<LabelList>(&value);
      if (l == nullptr) return add(Rule::kWrongType, "expected label list");
      for (const auto& x : *l) {
        if (!d.index_of(x)) add(Rule::kUnknownChoice, label_to_string(x));
      }
      const auto counts = label_counts(*l);
      for (const auto& [label, n] : counts) {
        if (n > 1) add(Rule::kDuplicateMember, label_to_string(label));
      }
      if (l->size() < d.min_subset_size) {
        add(Rule::kSubsetTooSmall, fmt::format("{} < {}", l->size(), d.min_subset_size));
      }
      if (l->size() > d.max_subset_size) {
        add(Rule::kSubsetTooLarge, fmt::format("{} > {}", l->size(), d.max_subset_size));
      }
      return;
    }
    case DomainKind::kSequence: {
      const auto* l = std::get_if<LabelList>(&value);
      if (l == nullptr) return add(Rule::kWrongType, "expected label list");
      for (const auto& x : *l) {
        if (!d.index_of(x)) add(Rule::kUnknownChoice, label_to_string(x));
      }
      const auto* length = int_of(config, d.length_param);
      if (length != nullptr && static_cast<std::int64_t>(l->size()) != *length) {
        add(Rule::kSequenceLength, fmt::format("{} != {}={}", l->size(), d.length_param, *length));
      }
      const auto counts = label_counts(*l);
      if (d.max_distinct > 0 && counts.size() > d.max_distinct) {
        add(Rule::kSequenceDistinct, fmt::format("{} > {}", counts.size(), d.max_distinct));
      }
      if (!d.max_repeat_param.empty()) {
        if (const auto* cap = int_of(config, d.max_repeat_param)) {
          const std::size_t distinct_cap = d.max_distinct > 0 ? d.max_distinct : d.choices.size();
          const bool infeasible = static_cast<std::int64_t>(distinct_cap) * *cap <
                                  static_cast<std::int64_t>(l->size());
          if (infeasible && feasibility_covers(spec, d.length_param, d.max_repeat_param)) return;
          for (const auto& [label, n] : counts) {
            if (static_cast<std::int64_t>(n) > *cap) {
              add(Rule::kSequenceRepeat,
                  fmt::format("{} x{} > {}={}", label_to_string(label), n, d.max_repeat_param, *cap));
            }
          }
        }
      }
      return;
    }
  }
}

}  // namespace

std::vector<Violation> validate(const ParameterSpec& spec, const ParamConfig& config) {
  std::vector<Violation> out;
  for (const auto& [name, d] : spec.params()) {
    const auto it = config.find(name);
    if (it == config.end()) {
      out.push_back({name, Rule::kMissing, {}});
      continue;
    }
    validate_param(spec, name, d, it->second, config, out);
  }
  for (const auto& [key, value] : config) {
    if (spec.find(key) == nullptr) out.push_back({key, Rule::kUnknownParam, {}});
  }
  for (const auto& c : spec.constraints()) {
    switch (c.kind) {
      case ConstraintKind::kImpliesNonempty: {
        const auto* flag = bool_of(config, c.flag);
        const auto* target = list_of(config, c.target);
        if (flag && target && *flag && target->empty()) {
          out.push_back({c.target, Rule::kImpliesNonempty, c.flag + " is true"});
        }
        break;
      }
      case ConstraintKind::kImpliesZero: {
        const auto* flag = bool_of(config, c.flag);
        if (flag == nullptr || *flag) break;
        if (const auto* i = int_of(config, c.target); i && *i != 0) {
          out.push_back({c.target, Rule::kImpliesZero, c.flag + " is false"});
        }
        if (const auto* l = list_of(config, c.target); l && !l->empty()) {
          out.push_back({c.target, Rule::kImpliesZero, c.flag + " is false"});
        }
        break;
      }
      case ConstraintKind::kFeasibility: {
        bool ok = true;
        const auto lhs = linear_sum(c.lhs, config, ok);
        const auto rhs = linear_sum(c.rhs, config, ok);
        if (ok && lhs < rhs) {
          out.push_back({c.adjust, Rule::kFeasibility,
                         linear_text(c.lhs, config) + " < " + linear_text(c.rhs, config)});
        }
        break;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Projection

namespace {

ParamValue required_default(const std::string& name, const ParamDomain& d) {
  if (d.default_value) return *d.default_value;
  throw UnprojectableConfig("param '" + name + "' is missing and has no default");
}

LabelList project_subset(const ParamDomain& d, const LabelList& in) {
  LabelList out;
  for (const auto& x : in) {
    if (d.index_of(x) && std::find(out.begin(), out.end(), x) == out.end()) out.push_back(x);
  }
  for (const auto& c : d.choices) {
    if (out.size() >= d.min_subset_size) break;
    if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
  }
  if (out.size() > d.max_subset_size) out.resize(d.max_subset_size);
  return out;
}

LabelList project_sequence(const std::string& name, const ParamDomain& d, const LabelList& in,
                           std::size_t length, std::optional<std::int64_t> cap) {
  const std::size_t limit = cap ? static_cast<std::size_t>(std::max<std::int64_t>(*cap, 0))
                                : std::numeric_limits<std::size_t>::max();
  LabelList allowed;  // first-appearance order
  std::map<Label, std::size_t> used;
  std::vector<std::optional<Label>> slots(length);
  for (std::size_t i = 0; i < std::min(length, in.size()); ++i) {
    const Label& x = in[i];
    if (!d.index_of(x)) continue;
    const bool known = std::find(allowed.begin(), allowed.end(), x) != allowed.end();
    if (!known) {
      if (d.max_distinct > 0 && allowed.size() >= d.max_distinct) continue;
      allowed.push_back(x);
    }
    if (used[x] >= limit) continue;
    ++used[x];
    slots[i] = x;
  }
  auto pick = [&]() -> std::optional<Label> {
    // Prefer labels already in use (choice order), then introduce new ones.
    for (const auto& c : d.choices) {
      if (std::find(allowed.begin(), allowed.end(), c) != allowed.end() && used[c] < limit) {
        return c;
      }
    }
    for (const auto& c : d.choices) {
      if (std::find(allowed.begin(), allowed.end(), c) != allowed.end()) continue;
      if (d.max_distinct > 0 && allowed.size() >= d.max_distinct) break;
      if (limit == 0) break;
      allowed.push_back(c);
      return c;
    }
    return std::nullopt;
  };
  LabelList out;
  out.reserve(length);
  for (auto& slot : slots) {
    if (!slot) {
      slot = pick();
      if (!slot) throw UnprojectableConfig("sequence '" + name + "' cannot satisfy its repeat cap");
      ++used[*slot];
    }
    out.push_back(*slot);
  }
  return out;
}

void apply_feasibility(const ParameterSpec& spec, const CrossConstraint& c, ParamConfig& config) {
  bool ok = true;
  auto deficit = linear_sum(c.rhs, config, ok) - linear_sum(c.lhs, config, ok);
  if (!ok || deficit <= 0) return;
  auto move = [&](const std::string& param, std::int64_t coef_gain) {
    // coef_gain: how much one unit increase of `param` reduces the deficit.
    if (coef_gain == 0 || deficit <= 0) return;
    const ParamDomain& d = *spec.find(param);
    auto& value = std::get<std::int64_t>(config[param]);
    const std::int64_t steps = (deficit + std::abs(coef_gain) - 1) / std::abs(coef_gain);
    const std::int64_t wanted = coef_gain > 0 ? value + steps : value - steps;
    const std::int64_t next = std::clamp(wanted, d.low, d.high);
    deficit -= (next - value) * coef_gain;
    value = next;
  };
  auto gain_of = [&](const std::string& param) {
    std::int64_t gain = 0;
    for (const auto& t : c.lhs) if (t.param == param) gain += t.coef;
    for (const auto& t : c.rhs) if (t.param == param) gain -= t.coef;
    return gain;
  };
  move(c.adjust, gain_of(c.adjust));
  for (const auto& t : c.rhs) move(t.param, gain_of(t.param));
  if (deficit > 0) {
    throw UnprojectableConfig("feasibility constraint on '" + c.adjust + "' cannot be met");
  }
}

}  // namespace

ParamConfig project(const ParameterSpec& spec, const ParamConfig& config) {
  ParamConfig out;
  for (const auto& [name, d] : spec.params()) {
    const auto it = config.find(name);
    switch (d.kind) {
      case DomainKind::kIntRange: {
        const auto* i = it == config.end() ? nullptr : std::get_if<std::int64_t>(&it->second);
        out[name] = i ? std::clamp(*i, d.low, d.high) : required_default(name, d);
        break;
      }
      case DomainKind::kBool: {
        const auto* b = it == config.end() ? nullptr : std::get_if<bool>(&it->second);
        out[name] = b ? ParamValue{*b} : required_default(name, d);
        break;
      }
      case DomainKind::kChoice: {
        const auto* l = it == config.end() ? nullptr : std::get_if<Label>(&it->second);
        if (l == nullptr) {
          out[name] = required_default(name, d);
        } else if (d.index_of(*l)) {
          out[name] = *l;
        } else {
          out[name] = d.default_value ? *d.default_value : ParamValue{d.choices.front()};
        }
        break;
      }
      case DomainKind::kSubset: {
        const auto* l = it == config.end() ? nullptr : std::get_if<LabelList>(&it->second);
        out[name] = l ? ParamValue{project_subset(d, *l)} : required_default(name, d);
        break;
      }
      case DomainKind::kSequence: {
        const auto* l = it == config.end() ? nullptr : std::get_if<LabelList>(&it->second);
        // Length and repeat fixes wait for the constraint pass below.
        out[name] = l ? ParamValue{*l} : required_default(name, d);
        break;
      }
    }
  }

  // Constraints may interact (a feasibility fix can touch a flag's target);
  // iterate to a fixed point over a small bounded number of passes.
  for (int pass = 0; pass < 4; ++pass) {
    const ParamConfig before = out;
    for (const auto& c : spec.constraints()) {
      switch (c.kind) {
        case ConstraintKind::kImpliesNonempty: {
          auto& target = std::get<LabelList>(out[c.target]);
          if (std::get<bool>(out[c.flag]) && target.empty()) {
            target.push_back(spec.find(c.target)->choices.front());
          }
          break;
        }
        case ConstraintKind::kImpliesZero: {
          if (std::get<bool>(out[c.flag])) break;
          auto& target = out[c.target];
          if (auto* i = std::get_if<std::int64_t>(&target)) *i = 0;
          if (auto* l = std::get_if<LabelList>(&target)) l->clear();
          break;
        }
        case ConstraintKind::kFeasibility:
          apply_feasibility(spec, c, out);
          break;
      }
    }
    if (out == before) break;
  }

  for (const auto& [name, d] : spec.params()) {
    if (d.kind != DomainKind::kSequence) continue;
    const auto length = static_cast<std::size_t>(std::get<std::int64_t>(out[d.length_param]));
    std::optional<std::int64_t> cap;
    if (!d.max_repeat_param.empty()) cap = std::get<std::int64_t>(out[d.max_repeat_param]);
    out[name] = project_sequence(name, d, std::get<LabelList>(out[name]), length, cap);
  }

  const auto remaining = validate(spec, out);
  if (!remaining.empty()) {
    throw UnprojectableConfig("projection left violations: " + describe(remaining.front()));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sampling and perturbation

ParamConfig sample_uniform(const ParameterSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  ParamConfig out;
  for (const auto& [name, d] : spec.params()) {
    switch (d.kind) {
      case DomainKind::kIntRange:
        out[name] = rng.uniform_int(d.low, d.high);
        break;
      case DomainKind::kBool:
        out[name] = rng.bernoulli(0.5);
        break;
      case DomainKind::kChoice:
        out[name] = d.choices[rng.index(d.choices.size())];
        break;
      case DomainKind::kSubset: {
        const auto size = static_cast<std::size_t>(rng.uniform_int(
            static_cast<std::int64_t>(d.min_subset_size), static_cast<std::int64_t>(d.max_subset_size)));
        std::vector<std::size_t> order(d.choices.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(std::span(order));
        order.resize(size);
        std::sort(order.begin(), order.end());
        LabelList members;
        for (auto i : order) members.push_back(d.choices[i]);
        out[name] = std::move(members);
        break;
      }
      case DomainKind::kSequence:
        out[name] = LabelList{};  // filled once its length param is known
        break;
    }
  }
  for (const auto& [name, d] : spec.params()) {
    if (d.kind != DomainKind::kSequence) continue;
    const auto length = std::get<std::int64_t>(out[d.length_param]);
    const std::size_t distinct_cap =
        d.max_distinct > 0 ? std::min(d.max_distinct, d.choices.size()) : d.choices.size();
    const auto distinct = static_cast<std::size_t>(
        rng.uniform_int(1, static_cast<std::int64_t>(distinct_cap)));
    std::vector<std::size_t> order(d.choices.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(std::span(order));
    order.resize(distinct);
    LabelList seq;
    for (std::int64_t i = 0; i < length; ++i) seq.push_back(d.choices[order[rng.index(distinct)]]);
    out[name] = std::move(seq);
  }
  return project(spec, out);
}

ParamConfig perturb(const ParameterSpec& spec, const ParamConfig& base, std::uint64_t seed) {
  Rng rng(seed);
  ParamConfig out = base;
  for (const auto& [name, d] : spec.params()) {
    auto it = out.find(name);
    if (it == out.end()) continue;
    ParamValue& value = it->second;
    switch (d.kind) {
      case DomainKind::kIntRange: {
        const std::int64_t step = (d.high - d.low + 19) / 20;
        const std::int64_t direction = rng.uniform_int(-1, 1);
        if (auto* i = std::get_if<std::int64_t>(&value)) *i += direction * step;
        break;
      }
      case DomainKind::kBool: {
        const bool flip = rng.bernoulli(0.1);
        if (auto* b = std::get_if<bool>(&value); b && flip) *b = !*b;
        break;
      }
      case DomainKind::kChoice: {
        const bool resample = rng.bernoulli(0.1);
        const auto pick = rng.index(d.choices.size());
        if (resample) value = d.choices[pick];
        break;
      }
      case DomainKind::kSubset: {
        const bool toggle = rng.bernoulli(0.2);
        const Label& member = d.choices[rng.index(d.choices.size())];
        auto* l = std::get_if<LabelList>(&value);
        if (l == nullptr || !toggle) break;
        const auto pos = std::find(l->begin(), l->end(), member);
        if (pos == l->end()) {
          l->push_back(member);
        } else {
          l->erase(pos);
        }
        break;
      }
      case DomainKind::kSequence: {
        const bool replace = rng.bernoulli(0.2);
        const Label& label = d.choices[rng.index(d.choices.size())];
        auto* l = std::get_if<LabelList>(&value);
        if (l == nullptr || l->empty()) break;
        const auto pos = rng.index(l->size());
        if (replace) (*l)[pos] = label;
        break;
      }
    }
  }
  return project(spec, out);
}

// ---------------------------------------------------------------------------
// Featurization

std::size_t feature_count(const ParameterSpec& spec) {
  std::size_t n = 0;
  for (const auto& [name, d] : spec.params()) {
    switch (d.kind) {
      case DomainKind::kIntRange:
      case DomainKind::kBool:
        n += 1;
        break;
      case DomainKind::kChoice:
      case DomainKind::kSubset:
      case DomainKind::kSequence:
        n += d.choices.size();
        break;
    }
  }
  return n;
}

std::vector<std::string> feature_names(const ParameterSpec& spec) {
  std::vector<std::string> names;
  for (const auto& [name, d] : spec.params()) {
    if (d.kind == DomainKind::kIntRange || d.kind == DomainKind::kBool) {
      names.push_back(name);
      continue;
    }
    for (const auto& c : d.choices) names.push_back(name + "=" + label_to_string(c));
  }
  return names;
}

std::vector<double> featurize(const ParameterSpec& spec, const ParamConfig& config) {
  std::vector<double> f;
  f.reserve(feature_count(spec));
  for (const auto& [name, d] : spec.params()) {
    switch (d.kind) {
      case DomainKind::kIntRange: {
        const auto v = get_int(config, name);
        f.push_back(d.high == d.low ? 0.0
                                    : static_cast<double>(v - d.low) / static_cast<double>(d.high - d.low));
        break;
      }
      case DomainKind::kBool:
        f.push_back(get_bool(config, name) ? 1.0 : 0.0);
        break;
      case DomainKind::kChoice: {
        const auto& label = get_label(config, name);
        for (const auto& c : d.choices) f.push_back(c == label ? 1.0 : 0.0);
        break;
      }
      case DomainKind::kSubset: {
        const auto& members = get_list(config, name);
        for (const auto& c : d.choices) {
          f.push_back(std::find(members.begin(), members.end(), c) != members.end() ? 1.0 : 0.0);
        }
        break;
      }
      case DomainKind::kSequence: {
        const auto& seq = get_list(config, name);
        const auto* len = spec.find(d.length_param);
        const double scale = std::max<double>(1.0, static_cast<double>(len->high));
        for (const auto& c : d.choices) {
          f.push_back(static_cast<double>(std::count(seq.begin(), seq.end(), c)) / scale);
        }
        break;
      }
    }
  }
  return f;
}

}  // namespace difftune::paramspace
