#include "difftune/environment.hpp"

#include <fmt/format.h>

#include "difftune/errors.hpp"
#include "difftune/rng.hpp"

namespace difftune::env {

std::string_view to_string(EnvId id) {
  switch (id) {
    case EnvId::kArithmetic: return "arithmetic";
    case EnvId::kSpatial: return "spatial";
    case EnvId::kSynthetic: return "synthetic";
  }
  return "?";
}

EnvId parse_env(std::string_view name) {
  for (auto id : {EnvId::kArithmetic, EnvId::kSpatial, EnvId::kSynthetic}) {
    if (to_string(id) == name) return id;
  }
  throw InvalidArgument(fmt::format("unknown environment '{}'", name));
}

paramspace::ParameterSpec default_synthetic_spec() {
  return paramspace::ParameterSpec("synthetic",
                                   {{"difficulty", paramspace::ParamDomain::int_range(0, 100)}});
}

Environment Environment::arithmetic() {
  return Environment(EnvId::kArithmetic,
                     std::shared_ptr<const paramspace::ParameterSpec>(
                         &arith::parameter_spec(), [](const paramspace::ParameterSpec*) {}));
}

Environment Environment::spatial() {
  return Environment(EnvId::kSpatial,
                     std::shared_ptr<const paramspace::ParameterSpec>(
                         &spatial::parameter_spec(), [](const paramspace::ParameterSpec*) {}));
}

Environment Environment::synthetic(paramspace::ParameterSpec spec) {
  return Environment(EnvId::kSynthetic,
                     std::make_shared<const paramspace::ParameterSpec>(std::move(spec)));
}

Environment Environment::from_json(const nlohmann::json& j) {
  if (j.is_string()) return from_json(nlohmann::json{{"env", j}});
  if (!j.is_object() || !j.contains("env")) {
    throw InvalidArgument("environment description needs an \"env\" field");
  }
  const auto id = parse_env(j.at("env").get<std::string>());
  switch (id) {
    case EnvId::kArithmetic: return arithmetic();
    case EnvId::kSpatial: return spatial();
    case EnvId::kSynthetic:
      if (j.contains("spec")) {
        return synthetic(paramspace::spec_from_json(
            nlohmann::ordered_json::parse(j.at("spec").dump())));
      }
      return synthetic();
  }
  throw InvalidArgument("unknown environment");
}

nlohmann::json Environment::to_json() const {
  nlohmann::json j = {{"env", std::string(to_string(id_))}};
  if (id_ == EnvId::kSynthetic) j["spec"] = nlohmann::json::parse(spec_to_json(*spec_).dump());
  return j;
}

Problem Environment::generate(const paramspace::ParamConfig& config, std::uint64_t seed,
                              std::size_t index) const {
  if (const auto v = paramspace::validate(*spec_, config); !v.empty()) {
    throw InvalidArgument("config outside the design space: " + paramspace::describe(v.front()));
  }
  Problem p;
  p.id = std::to_string(index);
  p.seed = mix_seed(seed, index);
  p.config = config;
  switch (id_) {
    case EnvId::kArithmetic:
      p.payload = arith::generate_problem(arith::params_from_config(config), p.seed);
      break;
    case EnvId::kSpatial:
      p.payload = spatial::generate_problem(spatial::params_from_config(config), p.seed);
      break;
    case EnvId::kSynthetic:
      p.payload = SyntheticProblem{};
      break;
  }
  return p;
}

std::vector<Problem> Environment::generate_dataset(const paramspace::ParamConfig& config,
                                                   std::size_t n, std::uint64_t seed) const {
  std::vector<Problem> out;
  out.reserve(n);
  for (std::size_t j = 0; j < n; ++j) out.push_back(generate(config, seed, j));
  return out;
}

bool Environment::check(const Problem& problem, std::string_view response) const {
  if (const auto* a = std::get_if<arith::ArithProblem>(&problem.payload)) {
    const auto ops = arith::parse_final_line(response);
    return ops && arith::verify(*a, *ops);
  }
  if (const auto* s = std::get_if<spatial::SpatialProblem>(&problem.payload)) {
    return spatial::verify_answer(*s, response);
  }
  return response == "correct";
}

std::string Environment::prompt(const Problem& problem) const {
  if (const auto* a = std::get_if<arith::ArithProblem>(&problem.payload)) {
    return a->rendered_prompt;
  }
  if (const auto* s = std::get_if<spatial::SpatialProblem>(&problem.payload)) {
    return s->rendered_prompt;
  }
  return {};
}

nlohmann::json Environment::problem_to_json(const Problem& problem) const {
  nlohmann::json j = nlohmann::json::object();
  if (const auto* a = std::get_if<arith::ArithProblem>(&problem.payload)) {
    j = arith::problem_to_json(*a);
  } else if (const auto* s = std::get_if<spatial::SpatialProblem>(&problem.payload)) {
    j = spatial::problem_to_json(*s);
  }
  j["env"] = std::string(to_string(id_));
  j["id"] = problem.id;
  j["seed"] = problem.seed;
  j["params"] = paramspace::config_to_json(problem.config);
  return j;
}

Problem Environment::problem_from_json(const nlohmann::json& j) const {
  try {
    if (j.contains("env") && parse_env(j.at("env").get<std::string>()) != id_) {
      throw InvalidArgument("problem belongs to environment " + j.at("env").dump());
    }
    Problem p;
    p.id = j.at("id").get<std::string>();
    p.seed = j.at("seed").get<std::uint64_t>();
    auto parsed = paramspace::config_from_json(*spec_, j.at("params"));
    if (!parsed.issues.empty()) throw InvalidArgument(paramspace::describe(parsed.issues.front()));
    p.config = std::move(parsed.config);
    switch (id_) {
      case EnvId::kArithmetic: p.payload = arith::problem_from_json(j); break;
      case EnvId::kSpatial: p.payload = spatial::problem_from_json(j); break;
      case EnvId::kSynthetic: p.payload = SyntheticProblem{}; break;
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed problem record: ") + e.what());
  }
}

}  // namespace difftune::env
