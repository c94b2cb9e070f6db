#pragma once

// Designers propose the next configuration from the search history: an LLM
// prompted with feedback, or one of the non-LLM baselines.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "difftune/environment.hpp"
#include "difftune/gateway.hpp"
#include "difftune/paramspace.hpp"
#include "difftune/surrogate.hpp"
#include "difftune/targets.hpp"

namespace difftune::designers {

enum class Strategy { kLlm, kRandom, kRsPpr, kBonTm, kBonMl, kScriptedBisection };

std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view name);

struct HistoryEntry {
  std::size_t iteration = 0;  // 1-based
  paramspace::ParamConfig config;
  double rho_hat = 0.0;
  double gap = 0.0;
};

struct DesignerSpec {
  Strategy strategy = Strategy::kRandom;

  // rs-ppr
  double p = 0.5;
  double delta = 0.1;
  std::size_t buffer_capacity = 32;

  // bon-tm / bon-ml
  std::size_t candidates = 8;
  std::size_t probe_size = 10;
  /// "uniform" or "llm" (candidates from independent llm_propose calls).
  std::string candidate_source = "uniform";
  std::size_t surrogate_samples = 100;
  std::uint64_t training_seed = 0;
  /// JSON-lines of {"config", "gap"} or {"config", "rho_hat"}; when empty the
  /// surrogate trains on uniform configs probed against the target.
  std::string training_samples;
  RidgeConfig ridge;

  // scripted-bisection
  std::string knob;
  bool harder_when_larger = true;

  // llm
  std::string prompt_template;  // built-in name or file path; empty: per env
  std::string model;
  double temperature = 0.5;
  std::int64_t max_reasoning_tokens = 4096;
  std::int64_t max_output_tokens = 4096;
  int retries = 3;

  void check() const;
};

DesignerSpec designer_from_json(const nlohmann::json& j);
nlohmann::json designer_to_json(const DesignerSpec& spec);

/// Everything a proposal may depend on. `target` is needed by the
/// best-of-N strategies, `client` by LLM-backed ones.
struct ProposeContext {
  const env::Environment& env;
  double rho = 0.5;
  const std::vector<HistoryEntry>& history;
  std::uint64_t seed = 0;
  const targets::TargetSpec* target = nullptr;
  gateway::ChatClient* client = nullptr;
};

/// A designer belongs to one search run. Proposals depend only on the
/// context (history included), so a run resumed from its log proposes the
/// same configs as an uninterrupted one.
class Designer {
 public:
  virtual ~Designer() = default;
  virtual paramspace::ParamConfig propose(const ProposeContext& ctx) = 0;
};

std::unique_ptr<Designer> make_designer(const DesignerSpec& spec);

// Building blocks -------------------------------------------------------------

struct PPRBuffer {
  struct Entry {
    paramspace::ParamConfig config;
    double gap = 0.0;
  };
  std::vector<Entry> entries;
  std::size_t capacity = 32;

  /// Appends, evicting the oldest entry when full.
  void insert(paramspace::ParamConfig config, double gap);
};

/// Inserts `last` when last.gap <= delta, then with probability p returns
/// sample_uniform(spec, mix_seed(seed, 1)) and otherwise
/// perturb(spec, <uniform buffer entry>, mix_seed(seed, 2)); an empty
/// buffer always samples uniformly.
std::pair<paramspace::ParamConfig, PPRBuffer> rs_ppr_step(PPRBuffer buffer, double p,
                                                          double delta,
                                                          const paramspace::ParameterSpec& spec,
                                                          const std::optional<HistoryEntry>& last,
                                                          std::uint64_t seed);

struct BonResult {
  std::size_t index = 0;
  std::vector<double> gaps;
};

/// Probes every candidate on n_s problems generated from the same seed and
/// returns the smallest measured gap; ties resolve to the lowest index.
BonResult bon_tm_select(const std::vector<paramspace::ParamConfig>& candidates, double rho,
                        std::size_t probe_size, const targets::TargetSpec& target,
                        const env::Environment& env, std::uint64_t seed,
                        std::shared_ptr<gateway::ChatClient> client = nullptr);

/// Bracket [lo, hi] on the knob implied by the history.
std::pair<std::int64_t, std::int64_t> bisection_bracket(const paramspace::ParameterSpec& spec,
                                                        const std::string& knob,
                                                        bool harder_when_larger, double rho,
                                                        const std::vector<HistoryEntry>& history);

/// "Iteration {i}: params={canonical JSON}; observed_accuracy={4dp};
/// target={rho}; gap={4dp}" per entry, oldest first, newline separated.
std::string summarize_feedback(const std::vector<HistoryEntry>& history, double rho);

struct LlmProposeOptions {
  std::string prompt_template;  // template text, not a name
  std::string model;
  double temperature = 0.5;
  std::int64_t max_reasoning_tokens = 4096;
  std::int64_t max_output_tokens = 4096;
  int retries = 3;
};

/// Renders the designer prompt, asks the model, and maps the last JSON
/// object of the reply onto the parameter spec. Violations are sent back for up to
/// `retries` more attempts; then the last parse is projected.
/// UnparseableResponse when no attempt produced a JSON object.
paramspace::ParamConfig llm_propose(const LlmProposeOptions& options,
                                    const paramspace::ParameterSpec& spec, double rho,
                                    const std::vector<HistoryEntry>& history,
                                    gateway::ChatClient& client);

/// Built-in designer template for an environment.
std::string default_template_name(env::EnvId id);

}  // namespace difftune::designers
