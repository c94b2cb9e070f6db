#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>

#include "difftune/errors.hpp"
#include "difftune/paramspace.hpp"

namespace difftune::paramspace {

namespace {

using ojson = nlohmann::ordered_json;

template <typename Json>
Json label_json(const Label& label) {
  if (const auto* i = std::get_if<std::int64_t>(&label)) return Json(*i);
  return Json(std::get<std::string>(label));
}

template <typename Json>
Json value_json(const ParamValue& value) {
  return std::visit(
      [](const auto& v) -> Json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Label>) {
          return label_json<Json>(v);
        } else if constexpr (std::is_same_v<T, LabelList>) {
          Json arr = Json::array();
          for (const auto& x : v) arr.push_back(label_json<Json>(x));
          return arr;
        } else {
          return Json(v);
        }
      },
      value);
}

template <typename Json>
Label label_from(const Json& j) {
  if (j.is_number_integer()) return j.template get<std::int64_t>();
  if (j.is_string()) return j.template get<std::string>();
  throw InvalidSpec("labels must be integers or strings: " + j.dump());
}

template <typename Json>
LabelList labels_from(const Json& j) {
  if (!j.is_array()) throw InvalidSpec("expected a label array: " + j.dump());
  LabelList out;
  for (const auto& x : j) out.push_back(label_from(x));
  return out;
}

const ojson& field(const ojson& obj, const char* key) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw InvalidSpec(std::string("missing field '") + key + "'");
  }
  return obj.at(key);
}

DomainKind kind_from(const std::string& s) {
  for (auto k : {DomainKind::kIntRange, DomainKind::kBool, DomainKind::kChoice,
                 DomainKind::kSubset, DomainKind::kSequence}) {
    if (to_string(k) == s) return k;
  }
  throw InvalidSpec("unknown param kind '" + s + "'");
}

ConstraintKind constraint_kind_from(const std::string& s) {
  for (auto k : {ConstraintKind::kImpliesNonempty, ConstraintKind::kImpliesZero,
                 ConstraintKind::kFeasibility}) {
    if (to_string(k) == s) return k;
  }
  throw InvalidSpec("unknown constraint kind '" + s + "'");
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::optional<std::int64_t> parse_int(const std::string& s) {
  std::int64_t v = 0;
  const auto t = trim(s);
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc{} || res.ptr != t.data() + t.size() || t.empty()) return std::nullopt;
  return v;
}

std::optional<Label> coerce_label(const ParamDomain& d, const nlohmann::json& j) {
  if (j.is_number_integer()) {
    const Label l = j.get<std::int64_t>();
    if (d.index_of(l)) return l;
    const Label as_text = std::to_string(j.get<std::int64_t>());
    if (d.index_of(as_text)) return as_text;
    return l;
  }
  if (j.is_number_float()) {
    const double v = j.get<double>();
    if (std::isfinite(v) && v == std::floor(v)) return Label(static_cast<std::int64_t>(v));
    return std::nullopt;
  }
  if (!j.is_string()) return std::nullopt;
  const std::string s = j.get<std::string>();
  if (d.index_of(s)) return Label(s);
  for (const auto& c : d.choices) {
    if (const auto* cs = std::get_if<std::string>(&c); cs && lower(*cs) == lower(trim(s))) return c;
  }
  if (const auto v = parse_int(s); v && d.index_of(Label(*v))) return Label(*v);
  return Label(s);
}

std::optional<ParamValue> coerce(const ParamDomain& d, const nlohmann::json& j) {
  switch (d.kind) {
    case DomainKind::kIntRange:
      if (j.is_number_integer()) return ParamValue{j.get<std::int64_t>()};
      if (j.is_number_float()) {
        const double v = j.get<double>();
        if (!std::isfinite(v) || std::abs(v) > 9.0e18) return std::nullopt;
        return ParamValue{static_cast<std::int64_t>(std::llround(v))};
      }
      if (j.is_string()) {
        if (const auto v = parse_int(j.get<std::string>())) return ParamValue{*v};
      }
      return std::nullopt;
    case DomainKind::kBool:
      if (j.is_boolean()) return ParamValue{j.get<bool>()};
      if (j.is_string()) {
        const auto s = lower(trim(j.get<std::string>()));
        if (s == "true") return ParamValue{true};
        if (s == "false") return ParamValue{false};
      }
      if (j.is_number_integer()) {
        const auto v = j.get<std::int64_t>();
        if (v == 0 || v == 1) return ParamValue{v == 1};
      }
      return std::nullopt;
    case DomainKind::kChoice: {
      if (auto l = coerce_label(d, j)) return ParamValue{std::move(*l)};
      return std::nullopt;
    }
    case DomainKind::kSubset:
    case DomainKind::kSequence: {
      if (!j.is_array()) return std::nullopt;
      LabelList items;
      for (const auto& x : j) {
        auto l = coerce_label(d, x);
        if (!l) return std::nullopt;
        items.push_back(std::move(*l));
      }
      return ParamValue{std::move(items)};
    }
  }
  return std::nullopt;
}

}  // namespace

nlohmann::json value_to_json(const ParamValue& value) { return value_json<nlohmann::json>(value); }

nlohmann::json config_to_json(const ParamConfig& config) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [k, v] : config) out[k] = value_to_json(v);
  return out;
}

std::string canonical_json(const ParamConfig& config) { return config_to_json(config).dump(); }

ojson spec_to_json(const ParameterSpec& spec) {
  ojson params = ojson::object();
  for (const auto& [name, d] : spec.params()) {
    ojson p;
    p["kind"] = std::string(to_string(d.kind));
    switch (d.kind) {
      case DomainKind::kIntRange:
        p["low"] = d.low;
        p["high"] = d.high;
        break;
      case DomainKind::kBool:
        break;
      case DomainKind::kChoice:
        p["choices"] = value_json<ojson>(ParamValue{d.choices});
        break;
      case DomainKind::kSubset:
        p["choices"] = value_json<ojson>(ParamValue{d.choices});
        p["min_subset_size"] = d.min_subset_size;
        p["max_subset_size"] = d.max_subset_size;
        break;
      case DomainKind::kSequence:
        p["choices"] = value_json<ojson>(ParamValue{d.choices});
        p["length_param"] = d.length_param;
        if (!d.max_repeat_param.empty()) p["max_repeat_param"] = d.max_repeat_param;
        if (d.max_distinct > 0) p["max_distinct"] = d.max_distinct;
        break;
    }
    if (d.default_value) p["default"] = value_json<ojson>(*d.default_value);
    params[name] = std::move(p);
  }
  ojson constraints = ojson::array();
  for (const auto& c : spec.constraints()) {
    ojson j;
    j["kind"] = std::string(to_string(c.kind));
    if (c.kind == ConstraintKind::kFeasibility) {
      auto terms = [](const std::vector<LinearTerm>& ts) {
        ojson arr = ojson::array();
        for (const auto& t : ts) arr.push_back(ojson{{"param", t.param}, {"coef", t.coef}});
        return arr;
      };
      j["lhs"] = terms(c.lhs);
      j["rhs"] = terms(c.rhs);
      j["adjust"] = c.adjust;
    } else {
      j["flag"] = c.flag;
      j["target"] = c.target;
    }
    constraints.push_back(std::move(j));
  }
  ojson out;
  out["name"] = spec.name();
  out["params"] = std::move(params);
  out["constraints"] = std::move(constraints);
  return out;
}

ParameterSpec spec_from_json(const ojson& doc) {
  try {
    std::vector<ParameterSpec::Entry> params;
    for (const auto& [name, p] : field(doc, "params").items()) {
      ParamDomain d;
      d.kind = kind_from(field(p, "kind").get<std::string>());
      switch (d.kind) {
        case DomainKind::kIntRange:
          d.low = field(p, "low").get<std::int64_t>();
          d.high = field(p, "high").get<std::int64_t>();
          break;
        case DomainKind::kBool:
          break;
        case DomainKind::kChoice:
          d.choices = labels_from(field(p, "choices"));
          break;
        case DomainKind::kSubset:
          d.choices = labels_from(field(p, "choices"));
          d.min_subset_size = p.value("min_subset_size", std::size_t{0});
          d.max_subset_size = p.value("max_subset_size", d.choices.size());
          break;
        case DomainKind::kSequence:
          d.choices = labels_from(field(p, "choices"));
          d.length_param = field(p, "length_param").get<std::string>();
          d.max_repeat_param = p.value("max_repeat_param", std::string{});
          d.max_distinct = p.value("max_distinct", std::size_t{0});
          break;
      }
      if (p.contains("default")) {
        const auto parsed = coerce(d, nlohmann::json::parse(p.at("default").dump()));
        if (!parsed) throw InvalidSpec(name + ": default has the wrong type");
        d.default_value = *parsed;
      }
      params.emplace_back(name, std::move(d));
    }
    std::vector<CrossConstraint> constraints;
    if (doc.contains("constraints")) {
      for (const auto& c : doc.at("constraints")) {
        const auto kind = constraint_kind_from(field(c, "kind").get<std::string>());
        if (kind == ConstraintKind::kFeasibility) {
          auto terms = [](const ojson& arr) {
            std::vector<LinearTerm> ts;
            for (const auto& t : arr) {
              ts.push_back({field(t, "param").get<std::string>(), t.value("coef", std::int64_t{1})});
            }
            return ts;
          };
          constraints.push_back(CrossConstraint::feasibility(
              terms(field(c, "lhs")), terms(field(c, "rhs")), field(c, "adjust").get<std::string>()));
        } else {
          auto flag = field(c, "flag").get<std::string>();
          auto target = field(c, "target").get<std::string>();
          constraints.push_back(kind == ConstraintKind::kImpliesZero
                                    ? CrossConstraint::implies_zero(flag, target)
                                    : CrossConstraint::implies_nonempty(flag, target));
        }
      }
    }
    return ParameterSpec(field(doc, "name").get<std::string>(), std::move(params),
                         std::move(constraints));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidSpec(std::string("malformed parameter spec: ") + e.what());
  }
}

ParsedConfig config_from_json(const ParameterSpec& spec, const nlohmann::json& doc) {
  ParsedConfig out;
  if (!doc.is_object()) {
    throw InvalidArgument("parameter configuration must be a JSON object");
  }
  for (const auto& [name, d] : spec.params()) {
    const auto it = doc.find(name);
    if (it == doc.end() || it->is_null()) continue;
    if (auto v = coerce(d, *it)) {
      out.config[name] = std::move(*v);
    } else {
      out.issues.push_back({name, Rule::kWrongType, it->dump()});
    }
  }
  return out;
}

}  // namespace difftune::paramspace
