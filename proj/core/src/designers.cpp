#include "difftune/designers.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>

#include "difftune/errors.hpp"
#include "difftune/json_extract.hpp"
#include "difftune/metrics.hpp"
#include "difftune/rng.hpp"
#include "difftune/templates.hpp"

namespace difftune::designers {

namespace pspace = paramspace;

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::kLlm: return "llm";
    case Strategy::kRandom: return "random";
    case Strategy::kRsPpr: return "rs-ppr";
    case Strategy::kBonTm: return "bon-tm";
    case Strategy::kBonMl: return "bon-ml";
    case Strategy::kScriptedBisection: return "scripted-bisection";
  }
  return "?";
}

Strategy parse_strategy(std::string_view name) {
  for (auto s : {Strategy::kLlm, Strategy::kRandom, Strategy::kRsPpr, Strategy::kBonTm,
                 Strategy::kBonMl, Strategy::kScriptedBisection}) {
    if (to_string(s) == name) return s;
  }
  throw InvalidArgument(fmt::format("unknown designer strategy '{}'", name));
}

void DesignerSpec::check() const {
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("p must lie in [0, 1]");
  if (!(delta >= 0.0)) throw InvalidArgument("delta must be non-negative");
  if (buffer_capacity == 0) throw InvalidArgument("buffer_capacity must be positive");
  if (candidates == 0) throw InvalidArgument("candidates (N) must be at least 1");
  if (probe_size == 0) throw InvalidArgument("probe_size must be at least 1");
  if (candidate_source != "uniform" && candidate_source != "llm") {
    throw InvalidArgument("candidate_source must be uniform or llm");
  }
  if (retries < 0) throw InvalidArgument("retries must be non-negative");
  if (strategy == Strategy::kScriptedBisection && knob.empty()) {
    throw InvalidArgument("scripted-bisection needs a knob");
  }
}

DesignerSpec designer_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InvalidArgument("designer spec must be a JSON object");
  try {
    DesignerSpec d;
    d.strategy = parse_strategy(j.at("strategy").get<std::string>());
    d.p = j.value("p", d.p);
    d.delta = j.value("delta", d.delta);
    d.buffer_capacity = j.value("buffer_capacity", d.buffer_capacity);
    d.candidates = j.value("candidates", d.candidates);
    d.probe_size = j.value("probe_size", d.probe_size);
    d.candidate_source = j.value("candidate_source", d.candidate_source);
    d.surrogate_samples = j.value("surrogate_samples", d.surrogate_samples);
    d.training_seed = j.value("training_seed", d.training_seed);
    d.training_samples = j.value("training_samples", d.training_samples);
    d.ridge.lambdas = j.value("lambdas", d.ridge.lambdas);
    d.ridge.folds = j.value("folds", d.ridge.folds);
    d.ridge.fold_seed = j.value("fold_seed", d.ridge.fold_seed);
    d.knob = j.value("knob", d.knob);
    d.harder_when_larger = j.value("harder_when_larger", d.harder_when_larger);
    d.prompt_template = j.value("template", d.prompt_template);
    d.model = j.value("model", d.model);
    d.temperature = j.value("temperature", d.temperature);
    d.max_reasoning_tokens = j.value("max_reasoning_tokens", d.max_reasoning_tokens);
    d.max_output_tokens = j.value("max_output_tokens", d.max_output_tokens);
    d.retries = j.value("retries", d.retries);
    d.check();
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed designer spec: ") + e.what());
  }
}

nlohmann::json designer_to_json(const DesignerSpec& d) {
  nlohmann::json j = {{"strategy", std::string(to_string(d.strategy))}};
  switch (d.strategy) {
    case Strategy::kRandom:
      break;
    case Strategy::kRsPpr:
      j["p"] = d.p;
      j["delta"] = d.delta;
      j["buffer_capacity"] = d.buffer_capacity;
      break;
    case Strategy::kBonTm:
    case Strategy::kBonMl:
      j["candidates"] = d.candidates;
      j["probe_size"] = d.probe_size;
      j["candidate_source"] = d.candidate_source;
      if (d.strategy == Strategy::kBonMl) {
        j["surrogate_samples"] = d.surrogate_samples;
        j["training_seed"] = d.training_seed;
        j["training_samples"] = d.training_samples;
        j["lambdas"] = d.ridge.lambdas;
        j["folds"] = d.ridge.folds;
        j["fold_seed"] = d.ridge.fold_seed;
      }
      break;
    case Strategy::kScriptedBisection:
      j["knob"] = d.knob;
      j["harder_when_larger"] = d.harder_when_larger;
      break;
    case Strategy::kLlm:
      break;
  }
  if (d.strategy == Strategy::kLlm || d.candidate_source == "llm") {
    j["template"] = d.prompt_template;
    j["model"] = d.model;
    j["temperature"] = d.temperature;
    j["max_reasoning_tokens"] = d.max_reasoning_tokens;
    j["max_output_tokens"] = d.max_output_tokens;
    j["retries"] = d.retries;
  }
  return j;
}

// Building blocks -------------------------------------------------------------

void PPRBuffer::insert(pspace::ParamConfig config, double gap) {
  if (capacity == 0) return;
  if (entries.size() >= capacity) entries.erase(entries.begin());
  entries.push_back({std::move(config), gap});
}

std::pair<pspace::ParamConfig, PPRBuffer> rs_ppr_step(PPRBuffer buffer, double p, double delta,
                                                      const pspace::ParameterSpec& spec,
                                                      const std::optional<HistoryEntry>& last,
                                                      std::uint64_t seed) {
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("p must lie in [0, 1]");
  if (last && last->gap <= delta) buffer.insert(last->config, last->gap);
  Rng rng(seed);
  const bool explore = rng.bernoulli(p);
  if (explore || buffer.entries.empty()) {
    return {pspace::sample_uniform(spec, mix_seed(seed, 1)), std::move(buffer)};
  }
  const auto& base = buffer.entries[rng.index(buffer.entries.size())].config;
  return {pspace::perturb(spec, base, mix_seed(seed, 2)), std::move(buffer)};
}

BonResult bon_tm_select(const std::vector<pspace::ParamConfig>& candidates, double rho,
                        std::size_t probe_size, const targets::TargetSpec& target,
                        const env::Environment& env, std::uint64_t seed,
                        std::shared_ptr<gateway::ChatClient> client) {
  if (candidates.empty()) throw InvalidArgument("best-of-N needs at least one candidate");
  if (probe_size == 0) throw InvalidArgument("probe size must be at least 1");
  BonResult result;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    double g = std::numeric_limits<double>::infinity();
    try {
      const auto dataset = env.generate_dataset(candidates[i], probe_size, seed);
      g = metrics::gap(rho, targets::evaluate(target, env, dataset, client).rho_hat);
    } catch (const GenerationExhausted&) {
      // A candidate that cannot produce problems is never selected.
    }
    result.gaps.push_back(g);
    if (g < best) {
      best = g;
      result.index = i;
    }
  }
  return result;
}

std::pair<std::int64_t, std::int64_t> bisection_bracket(const pspace::ParameterSpec& spec,
                                                        const std::string& knob,
                                                        bool harder_when_larger, double rho,
                                                        const std::vector<HistoryEntry>& history) {
  const auto* d = spec.find(knob);
  if (!d || d->kind != pspace::DomainKind::kIntRange) {
    throw InvalidArgument("bisection knob '" + knob + "' must be an int-range param");
  }
  std::int64_t lo = d->low;
  std::int64_t hi = d->high;
  for (const auto& h : history) {
    const auto it = h.config.find(knob);
    if (it == h.config.end()) continue;
    const auto* v = std::get_if<std::int64_t>(&it->second);
    if (!v) continue;
    if (h.rho_hat == rho) {
      lo = hi = *v;
      continue;
    }
    const bool too_easy = h.rho_hat > rho;
    // Too easy means move toward harder settings.
    const bool raise = too_easy == harder_when_larger;
    if (raise) {
      lo = std::max(lo, std::min(*v, hi));
    } else {
      hi = std::min(hi, std::max(*v, lo));
    }
  }
  return {lo, hi};
}

std::string summarize_feedback(const std::vector<HistoryEntry>& history, double rho) {
  std::string out;
  for (const auto& h : history) {
    if (!out.empty()) out += '\n';
    out += fmt::format("Iteration {}: params={}; observed_accuracy={:.4f}; target={}; gap={:.4f}",
                       h.iteration, pspace::canonical_json(h.config), h.rho_hat, rho, h.gap);
  }
  return out;
}

std::string default_template_name(env::EnvId id) {
  switch (id) {
    case env::EnvId::kArithmetic: return "arithmetic_designer";
    case env::EnvId::kSpatial: return "spatial_designer";
    case env::EnvId::kSynthetic: break;
  }
  throw InvalidArgument("no built-in designer prompt for the synthetic environment");
}

namespace {

std::string render_designer_prompt(const std::string& tpl, double rho,
                                   const std::vector<HistoryEntry>& history) {
  const std::string feedback = summarize_feedback(history, rho);
  std::string ops = "[";
  for (std::size_t i = 0; i < arith::kAllOps.size(); ++i) {
    if (i > 0) ops += ", ";
    ops += arith::to_string(arith::kAllOps[i]);
  }
  ops += "]";
  std::string prompt = templates::render(
      tpl, {{"target_regret", fmt::format("{:.4g}", 1.0 - rho)},
            {"target_accuracy", fmt::format("{:.4g}", rho)},
            {"feedback", feedback.empty() ? "None." : feedback},
            {"operators", ops}});
  if (!feedback.empty() && !templates::has_placeholder(tpl, "feedback")) {
    prompt += "\n\nHere is the feedback from the previous iterations:\n" + feedback + "\n";
  }
  return prompt;
}

}  // namespace

pspace::ParamConfig llm_propose(const LlmProposeOptions& options,
                                const pspace::ParameterSpec& spec, double rho,
                                const std::vector<HistoryEntry>& history,
                                gateway::ChatClient& client) {
  if (options.retries < 0) throw InvalidArgument("retries must be non-negative");
  gateway::ChatRequest request;
  request.model = options.model;
  request.temperature = options.temperature;
  request.max_reasoning_tokens = options.max_reasoning_tokens;
  request.max_output_tokens = options.max_output_tokens;
  request.messages.push_back({"user", render_designer_prompt(options.prompt_template, rho, history)});

  std::optional<pspace::ParamConfig> last_parse;
  for (int attempt = 0; attempt <= options.retries; ++attempt) {
    const auto response = client.chat(request);
    std::string complaint;
    if (const auto obj = extract_last_json_object(response.content)) {
      auto parsed = pspace::config_from_json(spec, *obj);
      auto violations = parsed.issues;
      for (auto& v : pspace::validate(spec, parsed.config)) {
        if (std::find(violations.begin(), violations.end(), v) == violations.end()) {
          violations.push_back(std::move(v));
        }
      }
      if (violations.empty()) return parsed.config;
      last_parse = std::move(parsed.config);
      complaint = "The parameters you proposed are not valid:\n";
      for (const auto& v : violations) complaint += "- " + pspace::describe(v) + "\n";
      complaint += "Respond again with a corrected JSON object that follows the output format.";
    } else {
      complaint = "Your response did not contain a JSON object. Respond with a JSON object that "
                  "follows the output format.";
    }
    request.messages.push_back({"assistant", response.content});
    request.messages.push_back({"user", complaint});
  }
  if (!last_parse) {
    throw UnparseableResponse(
        fmt::format("no JSON object in {} designer responses", options.retries + 1));
  }
  return pspace::project(spec, *last_parse);
}

// Strategies ------------------------------------------------------------------

namespace {

LlmProposeOptions llm_options(const DesignerSpec& d, env::EnvId env) {
  LlmProposeOptions o;
  o.prompt_template =
      templates::load(d.prompt_template.empty() ? default_template_name(env) : d.prompt_template);
  o.model = d.model;
  o.temperature = d.temperature;
  o.max_reasoning_tokens = d.max_reasoning_tokens;
  o.max_output_tokens = d.max_output_tokens;
  o.retries = d.retries;
  return o;
}

gateway::ChatClient& need_client(const ProposeContext& ctx) {
  if (!ctx.client) throw InvalidArgument("this designer needs a gateway client");
  return *ctx.client;
}

class RandomDesigner : public Designer {
 public:
  pspace::ParamConfig propose(const ProposeContext& ctx) override {
    return pspace::sample_uniform(ctx.env.spec(), ctx.seed);
  }
};

class RsPprDesigner : public Designer {
 public:
  explicit RsPprDesigner(DesignerSpec spec) : spec_(std::move(spec)) {}

  pspace::ParamConfig propose(const ProposeContext& ctx) override {
    PPRBuffer buffer;
    buffer.capacity = spec_.buffer_capacity;
    for (const auto& h : ctx.history) {
      if (h.gap <= spec_.delta) buffer.insert(h.config, h.gap);
    }
    return rs_ppr_step(std::move(buffer), spec_.p, spec_.delta, ctx.env.spec(), std::nullopt,
                       ctx.seed)
        .first;
  }

 private:
  DesignerSpec spec_;
};

class BisectionDesigner : public Designer {
 public:
  explicit BisectionDesigner(DesignerSpec spec) : spec_(std::move(spec)) {}

  pspace::ParamConfig propose(const ProposeContext& ctx) override {
    const auto& spec = ctx.env.spec();
    const auto [lo, hi] =
        bisection_bracket(spec, spec_.knob, spec_.harder_when_larger, ctx.rho, ctx.history);
    auto config = ctx.history.empty() ? pspace::sample_uniform(spec, ctx.seed)
                                      : ctx.history.back().config;
    config[spec_.knob] = lo + (hi - lo) / 2;
    return pspace::project(spec, config);
  }

 private:
  DesignerSpec spec_;
};

std::vector<pspace::ParamConfig> draw_candidates(const DesignerSpec& d, const ProposeContext& ctx) {
  std::vector<pspace::ParamConfig> out;
  out.reserve(d.candidates);
  if (d.candidate_source == "llm") {
    const auto options = llm_options(d, ctx.env.id());
    for (std::size_t k = 0; k < d.candidates; ++k) {
      out.push_back(llm_propose(options, ctx.env.spec(), ctx.rho, ctx.history, need_client(ctx)));
    }
    return out;
  }
  for (std::size_t k = 0; k < d.candidates; ++k) {
    out.push_back(pspace::sample_uniform(ctx.env.spec(), mix_seed(ctx.seed, 100 + k)));
  }
  return out;
}

std::shared_ptr<gateway::ChatClient> borrow(gateway::ChatClient* client) {
  return std::shared_ptr<gateway::ChatClient>(client, [](gateway::ChatClient*) {});
}

class BonTmDesigner : public Designer {
 public:
  explicit BonTmDesigner(DesignerSpec spec) : spec_(std::move(spec)) {}

  pspace::ParamConfig propose(const ProposeContext& ctx) override {
    if (!ctx.target) throw InvalidArgument("bon-tm needs a target to probe");
    auto candidates = draw_candidates(spec_, ctx);
    const auto result = bon_tm_select(candidates, ctx.rho, spec_.probe_size, *ctx.target, ctx.env,
                                      mix_seed(ctx.seed, 7), borrow(ctx.client));
    return std::move(candidates[result.index]);
  }

 private:
  DesignerSpec spec_;
};

std::vector<Sample> load_samples(const std::string& path, const pspace::ParameterSpec& spec,
                                 double rho) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot read training samples '" + path + "'");
  std::vector<Sample> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("config")) {
      throw InvalidArgument("malformed training sample line in '" + path + "'");
    }
    auto parsed = pspace::config_from_json(spec, j.at("config"));
    Sample s{pspace::project(spec, parsed.config), 0.0};
    if (j.contains("gap")) {
      s.gap = j.at("gap").get<double>();
    } else if (j.contains("rho_hat")) {
      s.gap = metrics::gap(rho, j.at("rho_hat").get<double>());
    } else {
      throw InvalidArgument("training sample needs gap or rho_hat");
    }
    out.push_back(std::move(s));
  }
  return out;
}

class BonMlDesigner : public Designer {
 public:
  explicit BonMlDesigner(DesignerSpec spec) : spec_(std::move(spec)) {}

  pspace::ParamConfig propose(const ProposeContext& ctx) override {
    if (!model_) model_ = train(ctx);
    auto candidates = draw_candidates(spec_, ctx);
    return std::move(candidates[bon_ml_select(*model_, ctx.env.spec(), candidates)]);
  }

 private:
  SurrogateModel train(const ProposeContext& ctx) const {
    const auto& spec = ctx.env.spec();
    if (!spec_.training_samples.empty()) {
      return train_surrogate(load_samples(spec_.training_samples, spec, ctx.rho), spec,
                             spec_.ridge);
    }
    if (!ctx.target) throw InvalidArgument("bon-ml needs a target or training samples");
    std::vector<Sample> samples;
    for (std::size_t k = 0; k < spec_.surrogate_samples; ++k) {
      auto config = pspace::sample_uniform(spec, mix_seed(spec_.training_seed, k));
      try {
        const auto dataset = ctx.env.generate_dataset(
            config, spec_.probe_size, mix_seed(spec_.training_seed, 1'000'000 + k));
        const auto r = targets::evaluate(*ctx.target, ctx.env, dataset, borrow(ctx.client));
        samples.push_back({std::move(config), metrics::gap(ctx.rho, r.rho_hat)});
      } catch (const GenerationExhausted&) {
        continue;
      }
    }
    return train_surrogate(samples, spec, spec_.ridge);
  }

  DesignerSpec spec_;
  std::optional<SurrogateModel> model_;
};

class LlmDesigner : public Designer {
 public:
  explicit LlmDesigner(DesignerSpec spec) : spec_(std::move(spec)) {}

  pspace::ParamConfig propose(const ProposeContext& ctx) override {
    return llm_propose(llm_options(spec_, ctx.env.id()), ctx.env.spec(), ctx.rho, ctx.history,
                       need_client(ctx));
  }

 private:
  DesignerSpec spec_;
};

}  // namespace

std::unique_ptr<Designer> make_designer(const DesignerSpec& spec) {
  spec.check();
  switch (spec.strategy) {
    case Strategy::kRandom: return std::make_unique<RandomDesigner>();
    case Strategy::kRsPpr: return std::make_unique<RsPprDesigner>(spec);
    case Strategy::kBonTm: return std::make_unique<BonTmDesigner>(spec);
    case Strategy::kBonMl: return std::make_unique<BonMlDesigner>(spec);
    case Strategy::kScriptedBisection: return std::make_unique<BisectionDesigner>(spec);
    case Strategy::kLlm: return std::make_unique<LlmDesigner>(spec);
  }
  throw InvalidArgument("unknown designer strategy");
}

}  // namespace difftune::designers
