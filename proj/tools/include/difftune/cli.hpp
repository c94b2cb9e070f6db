#pragma once

// The difftune command line: tune, generate, evaluate and report.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "difftune/designers.hpp"
#include "difftune/environment.hpp"
#include "difftune/gateway.hpp"
#include "difftune/orchestrator.hpp"
#include "difftune/targets.hpp"

namespace difftune::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitBackend = 3;

/// One JSON document per run. Field names double as flag names.
struct RunConfig {
  env::Environment env = env::Environment::synthetic();
  designers::DesignerSpec designer;
  targets::TargetSpec target;
  std::optional<std::string> level;
  std::optional<double> rho_value;
  std::size_t iterations = orchestrator::kDefaultIterations;  // "I"
  std::size_t rollout_size = 0;                               // "n_s", 0: per env
  std::size_t eval_size = 0;                                  // 0: per env
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = ".";
  gateway::Mode gateway_mode = gateway::Mode::kLive;
  std::filesystem::path store;       // empty: <output_dir>/llm_store.jsonl
  std::filesystem::path transcript;  // empty: none
  orchestrator::Timestamps timestamps = orchestrator::Timestamps::kFixed;

  /// The level's rho or the explicit one. InvalidArgument when neither is set.
  double rho() const;
  std::filesystem::path store_path() const;
  /// True when a designer or target talks to a model.
  bool needs_client() const;
};

/// InvalidArgument when both "level" and "rho" are present, UnknownLevel for
/// a level outside the registry.
RunConfig run_config_from_json(const nlohmann::json& j);

/// Parses `args` (without the program name) and runs one command. Exit
/// codes: 0 success, 2 configuration error, 3 backend failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace difftune::cli
