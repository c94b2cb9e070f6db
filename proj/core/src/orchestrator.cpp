#include "difftune/orchestrator.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <limits>
#include <sstream>

#include <fmt/format.h>

#include "difftune/errors.hpp"
#include "difftune/rng.hpp"

namespace difftune::orchestrator {

namespace pspace = paramspace;
using Clock = std::chrono::steady_clock;

std::size_t default_rollout_size(env::EnvId id) {
  switch (id) {
    case env::EnvId::kArithmetic: return 10;
    case env::EnvId::kSpatial: return 250;
    case env::EnvId::kSynthetic: return 200;
  }
  return 10;
}

std::size_t default_eval_size(env::EnvId id) {
  switch (id) {
    case env::EnvId::kArithmetic: return 75;
    case env::EnvId::kSpatial: return 500;
    case env::EnvId::kSynthetic: return 500;
  }
  return 75;
}

void SearchInputs::check() const {
  if (iterations < 1) throw InvalidArgument("iterations must be at least 1");
  if (!(rho > 0.0 && rho < 1.0)) throw InvalidArgument("rho must lie in (0, 1)");
  designer.check();
  target.check();
}

std::vector<designers::HistoryEntry> SearchRun::history() const {
  std::vector<designers::HistoryEntry> out;
  for (const auto& r : records) {
    if (!r.skipped) out.push_back({r.i, r.config, r.rho_hat, r.gap});
  }
  return out;
}

const pspace::ParamConfig& SearchRun::best_config() const {
  if (best_index) {
    for (const auto& r : records) {
      if (r.i == *best_index) return r.config;
    }
  }
  throw InvalidArgument("the run has no evaluated iteration");
}

std::uint64_t iteration_seed(std::uint64_t seed, std::size_t i) { return mix_seed(seed, i); }

namespace {

std::string now_utc() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

nlohmann::ordered_json header_json(const SearchInputs& in, std::size_t rollout_size,
                                   const std::string& started_at) {
  nlohmann::ordered_json j;
  j["spec"] = pspace::spec_to_json(in.env.spec());
  j["env"] = std::string(env::to_string(in.env.id()));
  j["designer"] = nlohmann::ordered_json::parse(designers::designer_to_json(in.designer).dump());
  j["target"] = nlohmann::ordered_json::parse(targets::target_to_json(in.target).dump());
  j["rho"] = in.rho;
  j["I"] = in.iterations;
  j["n_s"] = rollout_size;
  j["seed"] = in.seed;
  j["started_at"] = started_at;
  return j;
}

nlohmann::ordered_json footer_json(const SearchRun& run) {
  nlohmann::ordered_json j;
  if (run.best_index) {
    j["best_index"] = *run.best_index;
    j["best_gap"] = run.best_gap;
  } else {
    j["best_index"] = nullptr;
    j["best_gap"] = nullptr;
  }
  return j;
}

class LogWriter {
 public:
  explicit LogWriter(const std::filesystem::path& path, bool append) {
    if (path.empty()) return;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    out_.open(path, append ? std::ios::app : std::ios::trunc);
    if (!out_) throw InvalidArgument("cannot open run log '" + path.string() + "'");
  }

  template <typename J>
  void write(const J& record) {
    if (!out_.is_open()) return;
    out_ << record.dump() << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

void update_best(SearchRun& run, const IterationRecord& r) {
  if (r.skipped) return;
  if (!run.best_index || r.gap < run.best_gap) {
    run.best_index = r.i;
    run.best_gap = r.gap;
  }
}

bool is_designer_failure(const Error& e) {
  return dynamic_cast<const UnparseableResponse*>(&e) ||
         dynamic_cast<const UnprojectableConfig*>(&e) ||
         dynamic_cast<const DegenerateDesign*>(&e);
}

IterationRecord run_iteration(const SearchRun& run, std::size_t i, designers::Designer& designer,
                              std::size_t rollout_size) {
  const auto& in = run.inputs;
  const auto t0 = Clock::now();
  const std::uint64_t seed = iteration_seed(in.seed, i);
  const auto history = run.history();
  IterationRecord rec;
  rec.i = i;

  std::optional<pspace::ParamConfig> config;
  std::string error;
  for (std::uint64_t attempt = 0; attempt < 2 && !config; ++attempt) {
    designers::ProposeContext ctx{in.env,          in.rho, history, mix_seed(seed, 2 * attempt),
                                  &in.target,      in.client.get()};
    try {
      config = pspace::project(in.env.spec(), designer.propose(ctx));
    } catch (const Error& e) {
      if (!is_designer_failure(e)) throw;
      error = e.what();
    }
  }
  if (!config) {
    rec.skipped = true;
    rec.error = "designer: " + error;
  } else {
    try {
      const auto dataset = in.env.generate_dataset(*config, rollout_size, mix_seed(seed, 1));
      const auto result = targets::evaluate(in.target, in.env, dataset, in.client);
      rec.config = std::move(*config);
      rec.rho_hat = result.rho_hat;
      rec.gap = metrics::gap(in.rho, result.rho_hat);
    } catch (const GenerationExhausted& e) {
      rec.skipped = true;
      rec.config = std::move(*config);
      rec.error = std::string("generation: ") + e.what();
    }
  }
  if (in.timestamps == Timestamps::kWallClock) {
    rec.duration_ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - t0).count();
  }
  return rec;
}

void continue_run(SearchRun& run, LogWriter& log) {
  const std::size_t rollout_size = run.inputs.rollout_size;
  auto designer = designers::make_designer(run.inputs.designer);
  for (std::size_t i = run.records.size() + 1; i <= run.inputs.iterations; ++i) {
    auto rec = run_iteration(run, i, *designer, rollout_size);
    log.write(iteration_to_json(rec));
    update_best(run, rec);
    run.records.push_back(std::move(rec));
  }
  run.complete = true;
  log.write(footer_json(run));
}

}  // namespace

nlohmann::ordered_json iteration_to_json(const IterationRecord& r) {
  nlohmann::ordered_json j;
  j["i"] = r.i;
  if (r.skipped) {
    j["skipped"] = true;
    j["error"] = r.error;
    if (!r.config.empty()) j["config"] = pspace::config_to_json(r.config);
  } else {
    j["config"] = pspace::config_to_json(r.config);
    j["rho_hat"] = r.rho_hat;
    j["gap"] = r.gap;
  }
  j["duration_ms"] = r.duration_ms;
  return j;
}

SearchRun run_search(const SearchInputs& inputs) {
  inputs.check();
  SearchRun run;
  run.inputs = inputs;
  if (run.inputs.rollout_size == 0) {
    run.inputs.rollout_size = default_rollout_size(inputs.env.id());
  }
  LogWriter log(inputs.log_path, false);
  const std::string started_at =
      inputs.timestamps == Timestamps::kWallClock ? now_utc() : "1970-01-01T00:00:00Z";
  log.write(header_json(run.inputs, run.inputs.rollout_size, started_at));
  continue_run(run, log);
  return run;
}

namespace {

IterationRecord iteration_from_json(const nlohmann::json& j, const pspace::ParameterSpec& spec) {
  IterationRecord r;
  r.i = j.at("i").get<std::size_t>();
  r.skipped = j.value("skipped", false);
  r.error = j.value("error", std::string());
  if (j.contains("config")) {
    auto parsed = pspace::config_from_json(spec, j.at("config"));
    if (!parsed.issues.empty()) {
      throw CorruptLog(fmt::format("iteration {}: {}", r.i, pspace::describe(parsed.issues[0])));
    }
    r.config = std::move(parsed.config);
  }
  if (!r.skipped) {
    r.rho_hat = j.at("rho_hat").get<double>();
    r.gap = j.at("gap").get<double>();
  }
  r.duration_ms = j.value("duration_ms", std::int64_t{0});
  return r;
}

}  // namespace

SearchRun load_log(const std::filesystem::path& log_path) {
  std::ifstream in(log_path, std::ios::binary);
  if (!in) throw CorruptLog("cannot read run log '" + log_path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  if (text.empty()) throw CorruptLog("run log is empty");
  if (text.back() != '\n') throw CorruptLog("run log ends in a truncated record");

  std::vector<std::string> lines;
  std::istringstream stream(text);
  for (std::string line; std::getline(stream, line);) lines.push_back(line);

  SearchRun run;
  try {
    const auto header = nlohmann::json::parse(lines.front());
    auto& inputs = run.inputs;
    const auto env_name = header.at("env").get<std::string>();
    if (env::parse_env(env_name) == env::EnvId::kSynthetic) {
      inputs.env = env::Environment::synthetic(
          pspace::spec_from_json(nlohmann::ordered_json::parse(header.at("spec").dump())));
    } else {
      inputs.env = env::Environment::from_json(nlohmann::json{{"env", env_name}});
    }
    inputs.designer = designers::designer_from_json(header.at("designer"));
    inputs.target = targets::target_from_json(header.at("target"));
    inputs.rho = header.at("rho").get<double>();
    inputs.iterations = header.at("I").get<std::size_t>();
    inputs.rollout_size = header.at("n_s").get<std::size_t>();
    inputs.seed = header.at("seed").get<std::uint64_t>();
    inputs.log_path = log_path;
  } catch (const nlohmann::json::exception& e) {
    throw CorruptLog(std::string("bad run log header: ") + e.what());
  } catch (const CorruptLog&) {
    throw;
  } catch (const Error& e) {
    throw CorruptLog(std::string("bad run log header: ") + e.what());
  }

  for (std::size_t k = 1; k < lines.size(); ++k) {
    if (run.complete) throw CorruptLog(fmt::format("line {} follows the footer", k + 1));
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(lines[k]);
    } catch (const nlohmann::json::exception&) {
      throw CorruptLog(fmt::format("line {} is not a complete JSON record", k + 1));
    }
    if (!j.is_object()) throw CorruptLog(fmt::format("line {} is not a record", k + 1));
    if (j.contains("best_index")) {
      run.complete = true;
      continue;
    }
    IterationRecord rec;
    try {
      rec = iteration_from_json(j, run.inputs.env.spec());
    } catch (const nlohmann::json::exception& e) {
      throw CorruptLog(fmt::format("line {}: {}", k + 1, e.what()));
    }
    if (rec.i != run.records.size() + 1) {
      throw CorruptLog(fmt::format("line {} holds iteration {}, expected {}", k + 1, rec.i,
                                   run.records.size() + 1));
    }
    if (rec.i > run.inputs.iterations) {
      throw CorruptLog(fmt::format("iteration {} exceeds I", rec.i));
    }
    update_best(run, rec);
    run.records.push_back(std::move(rec));
  }
  if (run.complete && run.records.size() != run.inputs.iterations) {
    throw CorruptLog("footer present before the last iteration");
  }
  return run;
}

SearchRun resume(const std::filesystem::path& log_path,
                 std::shared_ptr<gateway::ChatClient> client, Timestamps timestamps) {
  auto run = load_log(log_path);
  if (run.complete) return run;
  run.inputs.client = std::move(client);
  run.inputs.timestamps = timestamps;
  run.inputs.check();
  LogWriter log(log_path, true);
  continue_run(run, log);
  return run;
}

EvalReport run_evaluation(const pspace::ParamConfig& config, const env::Environment& env,
                          const targets::TargetSpec& target, double rho, std::size_t eval_size,
                          const std::vector<std::uint64_t>& seeds,
                          std::shared_ptr<gateway::ChatClient> client) {
  if (eval_size < 1) throw InvalidArgument("eval_size must be at least 1");
  if (seeds.empty()) throw InvalidArgument("evaluation needs at least one seed");
  EvalReport report;
  report.env = env;
  report.config = config;
  report.rho = rho;
  report.eval_size = eval_size;
  report.seeds = seeds;
  for (std::size_t k = 0; k < seeds.size(); ++k) {
    const auto dataset = env.generate_dataset(config, eval_size, seeds[k]);
    targets::RolloutResult result;
    try {
      result = targets::evaluate(target, env, dataset, client);
    } catch (const BackendError& e) {
      throw BackendError(e.item_index(), fmt::format("seed #{} ({}): {}", k, seeds[k], e.what()));
    }
    report.rho_hats.push_back(result.rho_hat);
    report.gaps.push_back(metrics::gap(rho, result.rho_hat));
  }
  report.mean_rho_hat = metrics::mean(report.rho_hats);
  report.mean_gap = metrics::mean(report.gaps);
  if (report.gaps.size() >= 2) report.ci = metrics::aggregate_ci(report.gaps);
  return report;
}

nlohmann::json eval_report_to_json(const EvalReport& r) {
  nlohmann::json j = r.env.to_json();
  j["config"] = pspace::config_to_json(r.config);
  j["rho"] = r.rho;
  j["eval_size"] = r.eval_size;
  j["seeds"] = r.seeds;
  j["rho_hats"] = r.rho_hats;
  j["gaps"] = r.gaps;
  j["mean_rho_hat"] = r.mean_rho_hat;
  j["mean_gap"] = r.mean_gap;
  if (r.ci) {
    j["ci_half_width"] = r.ci->half_width;
  } else {
    j["ci_half_width"] = nullptr;
  }
  return j;
}

EvalReport eval_report_from_json(const nlohmann::json& j) {
  try {
    EvalReport r;
    r.rho = j.at("rho").get<double>();
    r.eval_size = j.at("eval_size").get<std::size_t>();
    r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    r.rho_hats = j.at("rho_hats").get<std::vector<double>>();
    r.gaps = j.value("gaps", std::vector<double>{});
    if (r.gaps.empty()) {
      for (double v : r.rho_hats) r.gaps.push_back(metrics::gap(r.rho, v));
    }
    if (r.rho_hats.empty() || r.gaps.size() != r.rho_hats.size() ||
        r.seeds.size() != r.rho_hats.size()) {
      throw InvalidArgument("eval report needs one rho_hat and gap per seed");
    }
    r.mean_rho_hat = metrics::mean(r.rho_hats);
    r.mean_gap = metrics::mean(r.gaps);
    if (r.gaps.size() >= 2) r.ci = metrics::aggregate_ci(r.gaps);
    r.env = env::Environment::from_json(j);
    auto parsed = pspace::config_from_json(r.env.spec(), j.at("config"));
    if (!parsed.issues.empty()) {
      throw InvalidArgument("eval report config: " + pspace::describe(parsed.issues.front()));
    }
    r.config = std::move(parsed.config);
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed eval report: ") + e.what());
  }
}

}  // namespace difftune::orchestrator
