#include "difftune/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "difftune/errors.hpp"
#include "difftune/metrics.hpp"
#include "difftune/paramspace.hpp"

namespace difftune::cli {

namespace fs = std::filesystem;
namespace pspace = paramspace;
using nlohmann::json;

double RunConfig::rho() const {
  if (level) return metrics::level_of(*level).rho;
  if (rho_value) return *rho_value;
  throw InvalidArgument("the run config needs a \"level\" or a \"rho\"");
}

fs::path RunConfig::store_path() const {
  return store.empty() ? output_dir / "llm_store.jsonl" : store;
}

bool RunConfig::needs_client() const {
  return designer.strategy == designers::Strategy::kLlm || designer.candidate_source == "llm" ||
         target.backend == targets::Backend::kLlm;
}

namespace {

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot read '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidArgument("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

/// Inline JSON when the text starts like a document, a file path otherwise.
json json_arg(const std::string& text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && (text[first] == '{' || text[first] == '[')) {
    try {
      return json::parse(text);
    } catch (const json::exception& e) {
      throw InvalidArgument(std::string("inline JSON does not parse: ") + e.what());
    }
  }
  return read_json_file(text);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidArgument("cannot write '" + path.string() + "'");
  out << text;
}

std::shared_ptr<gateway::ChatClient> client_for(const RunConfig& rc) {
  if (!rc.needs_client() && rc.gateway_mode == gateway::Mode::kLive) return nullptr;
  return gateway::make_client(rc.gateway_mode, rc.store_path(), rc.transcript);
}

template <typename T>
T field(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw InvalidArgument("the run config must be a JSON object");
  try {
    RunConfig rc;
    if (j.contains("env")) {
      const auto& e = j.at("env");
      rc.env = e.is_string() && j.contains("spec")
                   ? env::Environment::from_json(json{{"env", e}, {"spec", j.at("spec")}})
                   : env::Environment::from_json(e);
    }
    if (j.contains("designer")) rc.designer = designers::designer_from_json(j.at("designer"));
    if (j.contains("target")) rc.target = targets::target_from_json(j.at("target"));
    if (j.contains("level") && j.contains("rho")) {
      throw InvalidArgument("give either \"level\" or \"rho\", not both");
    }
    if (j.contains("level")) {
      rc.level = j.at("level").get<std::string>();
      metrics::level_of(*rc.level);
    }
    if (j.contains("rho")) {
      rc.rho_value = j.at("rho").get<double>();
      if (!(*rc.rho_value > 0.0 && *rc.rho_value < 1.0)) {
        throw InvalidArgument("rho must lie in (0, 1)");
      }
    }
    rc.iterations = field(j, "I", rc.iterations);
    rc.rollout_size = field(j, "n_s", rc.rollout_size);
    rc.eval_size = field(j, "eval_size", rc.eval_size);
    rc.seeds = field(j, "seeds", rc.seeds);
    rc.seed = field(j, "seed", rc.seed);
    rc.output_dir = field(j, "output_dir", rc.output_dir.string());
    if (j.contains("gateway_mode")) {
      rc.gateway_mode = gateway::parse_mode(j.at("gateway_mode").get<std::string>());
    }
    rc.store = field(j, "store", std::string());
    rc.transcript = field(j, "transcript", std::string());
    if (j.contains("timestamps")) {
      const auto t = j.at("timestamps").get<std::string>();
      if (t == "fixed") {
        rc.timestamps = orchestrator::Timestamps::kFixed;
      } else if (t == "wall") {
        rc.timestamps = orchestrator::Timestamps::kWallClock;
      } else {
        throw InvalidArgument("timestamps must be fixed or wall");
      }
    }
    if (rc.iterations < 1) throw InvalidArgument("I must be at least 1");
    if (rc.seeds.empty()) throw InvalidArgument("seeds must not be empty");
    return rc;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed run config: ") + e.what());
  }
}

namespace {

// Commands --------------------------------------------------------------------

struct Common {
  std::string config_path;
  std::optional<std::string> env, level, output_dir, gateway_mode, store, transcript, timestamps,
      designer, target;
  std::optional<double> rho;
  std::optional<std::size_t> iterations, rollout_size, eval_size;
  std::optional<std::uint64_t> seed;
  std::vector<std::uint64_t> seeds;

  void add_to(CLI::App& cmd, bool config_required) {
    auto* c = cmd.add_option("--config", config_path, "Run config (JSON)");
    if (config_required) c->required();
    cmd.add_option("--env", env, "Environment name");
    cmd.add_option("--level", level, "Difficulty level: hard, medium, easy, trivial");
    cmd.add_option("--rho", rho, "Explicit target performance in (0, 1)");
    cmd.add_option("--I", iterations, "Search iterations");
    cmd.add_option("--n_s", rollout_size, "Problems per search iteration");
    cmd.add_option("--eval_size", eval_size, "Problems per evaluation seed");
    cmd.add_option("--seeds", seeds, "Evaluation seeds")->delimiter(',');
    cmd.add_option("--seed", seed, "Run seed");
    cmd.add_option("--output_dir", output_dir, "Output directory");
    cmd.add_option("--gateway_mode", gateway_mode, "live, record or replay");
    cmd.add_option("--store", store, "Record/replay store");
    cmd.add_option("--transcript", transcript, "Transcript of every model exchange");
    cmd.add_option("--timestamps", timestamps, "fixed or wall");
    cmd.add_option("--designer", designer, "Designer spec: inline JSON or file");
    cmd.add_option("--target", target, "Target spec: inline JSON or file");
  }

  RunConfig load() const {
    json j = config_path.empty() ? json::object() : read_json_file(config_path);
    if (!j.is_object()) throw InvalidArgument("the run config must be a JSON object");
    if (env) j["env"] = *env;
    if (level) {
      j.erase("rho");
      j["level"] = *level;
    }
    if (rho) {
      j.erase("level");
      j["rho"] = *rho;
    }
    if (iterations) j["I"] = *iterations;
    if (rollout_size) j["n_s"] = *rollout_size;
    if (eval_size) j["eval_size"] = *eval_size;
    if (!seeds.empty()) j["seeds"] = seeds;
    if (seed) j["seed"] = *seed;
    if (output_dir) j["output_dir"] = *output_dir;
    if (gateway_mode) j["gateway_mode"] = *gateway_mode;
    if (store) j["store"] = *store;
    if (transcript) j["transcript"] = *transcript;
    if (timestamps) j["timestamps"] = *timestamps;
    if (designer) j["designer"] = json_arg(*designer);
    if (target) j["target"] = json_arg(*target);
    return run_config_from_json(j);
  }
};

int cmd_tune(const Common& common, bool resume, std::ostream& out, std::ostream& err) {
  const RunConfig rc = common.load();
  const fs::path log_path = rc.output_dir / "run_log.jsonl";
  auto client = client_for(rc);

  orchestrator::SearchRun run;
  if (resume) {
    run = orchestrator::resume(log_path, client, rc.timestamps);
  } else {
    orchestrator::SearchInputs in;
    in.env = rc.env;
    in.designer = rc.designer;
    in.target = rc.target;
    in.rho = rc.rho();
    in.iterations = rc.iterations;
    in.rollout_size = rc.rollout_size;
    in.seed = rc.seed;
    in.log_path = log_path;
    in.timestamps = rc.timestamps;
    in.client = client;
    run = orchestrator::run_search(in);
  }

  if (!run.best_index) {
    err << "warning: every iteration was skipped; no configuration selected\n";
    return kExitOk;
  }
  write_text(rc.output_dir / "best_config.json",
             pspace::config_to_json(run.best_config()).dump(2) + "\n");
  out << fmt::format("best iteration {} of {}: gap {:.4f}\n", *run.best_index,
                     run.inputs.iterations, run.best_gap);
  out << "log: " << log_path.string() << "\n";
  return kExitOk;
}

pspace::ParamConfig read_params(const fs::path& path, const pspace::ParameterSpec& spec) {
  auto parsed = pspace::config_from_json(spec, read_json_file(path));
  auto issues = std::move(parsed.issues);
  for (auto& v : pspace::validate(spec, parsed.config)) issues.push_back(std::move(v));
  if (!issues.empty()) {
    std::string msg = "params outside the design space:";
    for (const auto& v : issues) msg += "\n  " + pspace::describe(v);
    throw InvalidArgument(msg);
  }
  return std::move(parsed.config);
}

int cmd_generate(const Common& common, const std::string& params_path, std::size_t n,
                 const std::string& out_path, std::ostream& out) {
  const RunConfig rc = common.load();
  const auto config = read_params(params_path, rc.env.spec());
  std::string text;
  for (const auto& p : rc.env.generate_dataset(config, n, rc.seed)) {
    text += rc.env.problem_to_json(p).dump() + "\n";
  }
  write_text(out_path, text);
  out << fmt::format("wrote {} problems to {}\n", n, out_path);
  return kExitOk;
}

int cmd_evaluate(const Common& common, const std::string& dataset_path,
                 const std::string& params_path, const std::string& out_path, std::ostream& out) {
  const RunConfig rc = common.load();
  if (dataset_path.empty() == params_path.empty()) {
    throw InvalidArgument("evaluate needs exactly one of --dataset and --params");
  }
  auto client = client_for(rc);
  if (!dataset_path.empty()) {
    std::ifstream in(dataset_path);
    if (!in) throw InvalidArgument("cannot read '" + dataset_path + "'");
    std::vector<env::Problem> dataset;
    std::size_t line_no = 0;
    for (std::string line; std::getline(in, line);) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        dataset.push_back(rc.env.problem_from_json(json::parse(line)));
      } catch (const json::exception& e) {
        throw InvalidArgument(fmt::format("{}:{}: {}", dataset_path, line_no, e.what()));
      }
    }
    const auto result = targets::evaluate(rc.target, rc.env, dataset, client);
    write_text(out_path, targets::rollout_to_json(result).dump(2) + "\n");
    out << fmt::format("rho_hat {:.4f} over {} problems\n", result.rho_hat, result.n);
    return kExitOk;
  }
  const auto config = read_params(params_path, rc.env.spec());
  const std::size_t eval_size =
      rc.eval_size ? rc.eval_size : orchestrator::default_eval_size(rc.env.id());
  const auto report =
      orchestrator::run_evaluation(config, rc.env, rc.target, rc.rho(), eval_size, rc.seeds, client);
  write_text(out_path, orchestrator::eval_report_to_json(report).dump(2) + "\n");
  out << fmt::format("mean rho_hat {:.4f}, mean gap {:.4f} over {} seeds\n", report.mean_rho_hat,
                     report.mean_gap, report.seeds.size());
  return kExitOk;
}

std::string level_name(double rho) {
  for (const auto& l : metrics::levels()) {
    if (std::abs(l.rho - rho) < 1e-9) return l.name;
  }
  return "custom";
}

int cmd_report(const std::vector<std::string>& eval_paths, const std::vector<std::string>& logs,
               const std::string& csv_path, const std::string& json_path, std::ostream& out,
               std::ostream& err) {
  struct Pool {
    std::vector<double> rho_hats;
    std::vector<double> gaps;
  };
  std::map<double, Pool> pools;
  for (const auto& path : eval_paths) {
    const auto r = orchestrator::eval_report_from_json(read_json_file(path));
    auto& pool = pools[r.rho];
    pool.rho_hats.insert(pool.rho_hats.end(), r.rho_hats.begin(), r.rho_hats.end());
    pool.gaps.insert(pool.gaps.end(), r.gaps.begin(), r.gaps.end());
  }

  std::string csv = "level,rho,mean_rho_hat,mean_gap,ci_half_width,n_seeds\n";
  json doc = {{"rows", json::array()}, {"runs", json::array()}};
  for (const auto& [rho, pool] : pools) {
    const std::string name = level_name(rho);
    const double mean_rho_hat = metrics::mean(pool.rho_hats);
    const double mean_gap = metrics::mean(pool.gaps);
    std::optional<double> half;
    if (pool.gaps.size() >= 2) {
      half = metrics::aggregate_ci(pool.gaps).half_width;
    } else {
      err << fmt::format("warning: {} (rho {}) has {} seed; confidence interval left empty\n",
                         name, rho, pool.gaps.size());
    }
    csv += fmt::format("{},{},{:.4f},{:.4f},{},{}\n", name, rho, mean_rho_hat, mean_gap,
                       half ? fmt::format("{:.4f}", *half) : std::string(), pool.gaps.size());
    doc["rows"].push_back({{"level", name},
                           {"rho", rho},
                           {"mean_rho_hat", mean_rho_hat},
                           {"mean_gap", mean_gap},
                           {"ci_half_width", half ? json(*half) : json(nullptr)},
                           {"n_seeds", pool.gaps.size()}});
  }
  for (const auto& path : logs) {
    const auto run = orchestrator::load_log(path);
    json entry = {{"log", path},
                  {"rho", run.inputs.rho},
                  {"complete", run.complete},
                  {"iterations", run.records.size()}};
    if (run.best_index) {
      entry["best_index"] = *run.best_index;
      entry["best_gap"] = run.best_gap;
      entry["best_config"] = pspace::config_to_json(run.best_config());
    }
    doc["runs"].push_back(std::move(entry));
  }
  write_text(csv_path, csv);
  if (!json_path.empty()) write_text(json_path, doc.dump(2) + "\n");
  out << fmt::format("{} rows written to {}\n", pools.size(), csv_path);
  return kExitOk;
}

bool is_backend_failure(const std::exception& e) {
  return dynamic_cast<const AuthMissing*>(&e) || dynamic_cast<const RateLimited*>(&e) ||
         dynamic_cast<const TransportError*>(&e) || dynamic_cast<const MalformedResponse*>(&e) ||
         dynamic_cast<const ReplayMiss*>(&e) || dynamic_cast<const BackendError*>(&e) ||
         dynamic_cast<const UnparseableResponse*>(&e) ||
         dynamic_cast<const HorizonExceeded*>(&e) || dynamic_cast<const NoSolutionFound*>(&e);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tune benchmark generators toward a target difficulty", "difftune"};
  app.require_subcommand(1);

  Common tune_opts;
  bool resume = false;
  auto* tune = app.add_subcommand("tune", "Search the design space for a config hitting rho");
  tune_opts.add_to(*tune, true);
  tune->add_flag("--resume", resume, "Continue the run log in output_dir");

  Common gen_opts;
  std::string params_path;
  std::size_t n = 0;
  std::string out_path;
  auto* generate = app.add_subcommand("generate", "Write problems for a config as JSON-lines");
  gen_opts.add_to(*generate, false);
  generate->add_option("--params", params_path, "Param config (JSON)")->required();
  generate->add_option("--n", n, "Number of problems")->required();
  generate->add_option("--out", out_path, "Output path")->required();

  Common eval_opts;
  std::string dataset_path, eval_params, eval_out;
  auto* evaluate = app.add_subcommand("evaluate", "Score a dataset or evaluate a config");
  eval_opts.add_to(*evaluate, false);
  evaluate->add_option("--dataset", dataset_path, "JSON-lines problems to score");
  evaluate->add_option("--params", eval_params, "Config to evaluate over the seeds");
  evaluate->add_option("--out", eval_out, "Output path")->required();

  std::vector<std::string> eval_files, log_files;
  std::string csv_path, json_path;
  auto* report = app.add_subcommand("report", "Fold evaluation results into CSV and JSON");
  report->add_option("--eval", eval_files, "Evaluation report files");
  report->add_option("--log", log_files, "Run logs");
  report->add_option("--csv", csv_path, "CSV output")->required();
  report->add_option("--json", json_path, "JSON mirror output");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (tune->parsed()) return cmd_tune(tune_opts, resume, out, err);
    if (generate->parsed()) return cmd_generate(gen_opts, params_path, n, out_path, out);
    if (evaluate->parsed()) {
      return cmd_evaluate(eval_opts, dataset_path, eval_params, eval_out, out);
    }
    if (report->parsed()) return cmd_report(eval_files, log_files, csv_path, json_path, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return is_backend_failure(e) ? kExitBackend : kExitConfig;
  }
  return kExitConfig;
}

}  // namespace difftune::cli
