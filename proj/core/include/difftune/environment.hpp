#pragma once

// Uniform view over the task environments: a parameter spec, a problem
// generator and a response checker per environment.

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "difftune/arith.hpp"
#include "difftune/paramspace.hpp"
#include "difftune/spatial.hpp"

namespace difftune::env {

enum class EnvId { kArithmetic, kSpatial, kSynthetic };

std::string_view to_string(EnvId id);
/// Throws InvalidArgument.
EnvId parse_env(std::string_view name);

/// Problems of the synthetic environment carry nothing but their config; a
/// synthetic target scores them from the config alone.
struct SyntheticProblem {};

struct Problem {
  std::string id;
  std::uint64_t seed = 0;
  paramspace::ParamConfig config;
  std::variant<arith::ArithProblem, spatial::SpatialProblem, SyntheticProblem> payload;
};

/// One knob, "difficulty" in [0, 100].
paramspace::ParameterSpec default_synthetic_spec();

class Environment {
 public:
  static Environment arithmetic();
  static Environment spatial();
  static Environment synthetic(paramspace::ParameterSpec spec = default_synthetic_spec());
  /// {"env": name} plus, for synthetic, an optional "spec" document.
  static Environment from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  EnvId id() const { return id_; }
  const paramspace::ParameterSpec& spec() const { return *spec_; }

  /// Config must be in-domain (InvalidArgument otherwise). Problem j of a
  /// dataset is generated from mix_seed(seed, j).
  Problem generate(const paramspace::ParamConfig& config, std::uint64_t seed,
                   std::size_t index) const;
  std::vector<Problem> generate_dataset(const paramspace::ParamConfig& config, std::size_t n,
                                        std::uint64_t seed) const;

  /// Correctness of a raw model response. Synthetic problems accept the
  /// literal text "correct".
  bool check(const Problem& problem, std::string_view response) const;

  std::string prompt(const Problem& problem) const;

  nlohmann::json problem_to_json(const Problem& problem) const;
  Problem problem_from_json(const nlohmann::json& j) const;

 private:
  Environment(EnvId id, std::shared_ptr<const paramspace::ParameterSpec> spec)
      : id_(id), spec_(std::move(spec)) {}

  EnvId id_;
  std::shared_ptr<const paramspace::ParameterSpec> spec_;
};

}  // namespace difftune::env
