#pragma once

// The search loop (propose, project, generate, evaluate, feed back) and the
// follow-up evaluation of the selected configuration.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "difftune/designers.hpp"
#include "difftune/environment.hpp"
#include "difftune/gateway.hpp"
#include "difftune/metrics.hpp"
#include "difftune/paramspace.hpp"
#include "difftune/targets.hpp"

namespace difftune::orchestrator {

inline constexpr std::size_t kDefaultIterations = 10;
inline constexpr std::size_t kDefaultEvalSeeds = 3;

/// Problems per search iteration: arithmetic 10, spatial 250, synthetic 200.
std::size_t default_rollout_size(env::EnvId id);
/// Problems per evaluation seed: arithmetic 75, spatial 500, synthetic 500.
std::size_t default_eval_size(env::EnvId id);

enum class Timestamps {
  /// started_at is the epoch and durations are 0, so logs are byte-stable.
  kFixed,
  kWallClock,
};

struct SearchInputs {
  env::Environment env = env::Environment::synthetic();
  designers::DesignerSpec designer;
  targets::TargetSpec target;
  double rho = 0.5;
  std::size_t iterations = kDefaultIterations;
  std::size_t rollout_size = 0;  // 0: default_rollout_size(env)
  std::uint64_t seed = 0;
  std::filesystem::path log_path;  // empty: no log
  Timestamps timestamps = Timestamps::kFixed;
  std::shared_ptr<gateway::ChatClient> client;

  void check() const;
};

struct IterationRecord {
  std::size_t i = 0;  // 1-based
  bool skipped = false;
  std::string error;  // set when skipped
  paramspace::ParamConfig config;
  double rho_hat = 0.0;
  double gap = 0.0;
  std::int64_t duration_ms = 0;
};

struct SearchRun {
  SearchInputs inputs;
  std::vector<IterationRecord> records;
  /// 1-based iteration of the smallest gap, earliest on ties; empty while no
  /// iteration has been evaluated.
  std::optional<std::size_t> best_index;
  double best_gap = 0.0;
  bool complete = false;

  /// Evaluated iterations only, in order.
  std::vector<designers::HistoryEntry> history() const;
  /// Config of best_index. InvalidArgument when there is none.
  const paramspace::ParamConfig& best_config() const;
};

/// Seed of iteration i: mix_seed(seed, i). Designer, dataset and retry
/// streams are derived from it.
std::uint64_t iteration_seed(std::uint64_t seed, std::size_t i);

/// Runs iterations 1..I. Each record is appended to the log (and flushed)
/// before the next iteration starts; the footer closes a complete run.
/// A designer failure is retried once with a fresh seed, then the iteration
/// is recorded as skipped; so is an iteration whose config cannot produce
/// problems. Gateway and backend failures propagate and leave a partial
/// log that resume() continues.
SearchRun run_search(const SearchInputs& inputs);

/// Rebuilds a run from its log and executes the remaining iterations,
/// appending to the same file. CorruptLog on an unreadable header, a line
/// that is not a complete JSON record, or out-of-order iteration indices.
SearchRun resume(const std::filesystem::path& log_path,
                 std::shared_ptr<gateway::ChatClient> client = nullptr,
                 Timestamps timestamps = Timestamps::kFixed);

/// Parses a log without running anything.
SearchRun load_log(const std::filesystem::path& log_path);

struct EvalReport {
  env::Environment env = env::Environment::synthetic();
  paramspace::ParamConfig config;
  double rho = 0.0;
  std::size_t eval_size = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<double> rho_hats;  // per seed
  std::vector<double> gaps;      // per seed
  double mean_rho_hat = 0.0;
  double mean_gap = 0.0;
  /// Over the per-seed gaps; empty with fewer than two seeds.
  std::optional<metrics::Interval> ci;
};

/// Per seed: generate eval_size problems from that seed and evaluate them.
/// BackendError raised by a seed is re-raised naming the seed position.
EvalReport run_evaluation(const paramspace::ParamConfig& config, const env::Environment& env,
                          const targets::TargetSpec& target, double rho, std::size_t eval_size,
                          const std::vector<std::uint64_t>& seeds,
                          std::shared_ptr<gateway::ChatClient> client = nullptr);

/// Carries the environment description ({"env"} plus "spec" for
/// synthetic) so the config can be read back against its spec.
nlohmann::json eval_report_to_json(const EvalReport& report);
/// InvalidArgument on malformed input; mean and interval are recomputed.
EvalReport eval_report_from_json(const nlohmann::json& j);

nlohmann::ordered_json iteration_to_json(const IterationRecord& record);

}  // namespace difftune::orchestrator
