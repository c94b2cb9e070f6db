#pragma once

// Target models: the systems whose accuracy on generated problems is
// measured. An LLM behind the gateway, a solver that answers wrongly with a
// fixed probability, and a logistic stand-in driven by the config features.

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "difftune/environment.hpp"
#include "difftune/gateway.hpp"

namespace difftune::targets {

enum class Backend { kLlm, kOracleNoisy, kSyntheticLogistic };

std::string_view to_string(Backend backend);
Backend parse_backend(std::string_view name);

struct TargetSpec {
  Backend backend = Backend::kOracleNoisy;
  std::uint64_t seed = 0;
  std::size_t workers = 8;

  // oracle-noisy
  double epsilon = 0.0;

  // synthetic-logistic: p = sigmoid(offset - slope * (weights . features))
  std::vector<double> weights;
  double slope = 1.0;
  double offset = 0.0;

  // llm
  std::string model;
  double temperature = 0.0;
  std::int64_t max_output_tokens = 1024;
  std::int64_t max_reasoning_tokens = 0;
  int horizon = 16;

  /// Throws InvalidArgument on broken invariants.
  void check() const;
};

/// {"backend", "seed", "workers", "epsilon", "weights", "slope", "offset",
/// "model", "temperature", "max_output_tokens", "max_reasoning_tokens",
/// "horizon"}; absent fields keep their defaults.
TargetSpec target_from_json(const nlohmann::json& j);
nlohmann::json target_to_json(const TargetSpec& spec);

struct ItemResult {
  std::string problem_id;
  bool correct = false;
  std::string response;
  std::string note;  // e.g. horizon exceeded
};

struct RolloutResult {
  double rho_hat = 0.0;
  std::size_t n = 0;
  std::vector<ItemResult> per_item;
};

nlohmann::json rollout_to_json(const RolloutResult& result);
RolloutResult rollout_from_json(const nlohmann::json& j);

/// Scores every problem; per_item keeps dataset order. Items run on up to
/// `spec.workers` threads. Gateway failures surface as BackendError naming
/// the lowest failing item index.
RolloutResult evaluate(const TargetSpec& spec, const env::Environment& env,
                       const std::vector<env::Problem>& dataset,
                       std::shared_ptr<gateway::ChatClient> client = nullptr);

/// Noisy-oracle answer text: "FINAL ..." with the shortest solution for
/// arithmetic, the ground-truth JSON for spatial; replaced by a wrong answer
/// with probability epsilon (coin seeded from the target and problem seeds).
/// Throws NoSolutionFound when the search bound holds no solution.
std::string oracle_answer(const TargetSpec& spec, const env::Environment& env,
                          const env::Problem& problem);

double sigmoid(double z);
/// sigmoid(offset - slope * (weights . featurize(spec, config))).
double synthetic_success_prob(const std::vector<double>& weights, double slope, double offset,
                              const paramspace::ParameterSpec& spec,
                              const paramspace::ParamConfig& config);

struct LlmAnswer {
  std::string text;  // the final model message
  int exchanges = 0;
};

/// Spatial: one chat turn. Arithmetic: a loop of at most `spec.horizon`
/// exchanges in which the model either asks for one tool application with a
/// line "CALL <op> <number>" or ends with a FINAL line. HorizonExceeded when
/// no FINAL line arrives in time.
LlmAnswer llm_answer(const TargetSpec& spec, const env::Environment& env,
                     const env::Problem& problem, gateway::ChatClient& client);

}  // namespace difftune::targets
