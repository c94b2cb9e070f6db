#include "difftune/targets.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <exception>
#include <mutex>
#include <optional>
#include <thread>

#include <fmt/format.h>

#include "difftune/errors.hpp"
#include "difftune/rng.hpp"

namespace difftune::targets {

std::string_view to_string(Backend backend) {
  switch (backend) {
    case Backend::kLlm: return "llm";
    case Backend::kOracleNoisy: return "oracle-noisy";
    case Backend::kSyntheticLogistic: return "synthetic-logistic";
  }
  return "?";
}

Backend parse_backend(std::string_view name) {
  for (auto b : {Backend::kLlm, Backend::kOracleNoisy, Backend::kSyntheticLogistic}) {
    if (to_string(b) == name) return b;
  }
  throw InvalidArgument(fmt::format("unknown target backend '{}'", name));
}

void TargetSpec::check() const {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw InvalidArgument("epsilon must lie in [0, 1]");
  if (workers == 0) throw InvalidArgument("workers must be positive");
  if (horizon < 1) throw InvalidArgument("horizon must be positive");
  if (backend == Backend::kLlm && model.empty()) {
    throw InvalidArgument("llm target needs a model id");
  }
}

TargetSpec target_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InvalidArgument("target spec must be a JSON object");
  try {
    TargetSpec t;
    t.backend = parse_backend(j.at("backend").get<std::string>());
    t.seed = j.value("seed", t.seed);
    t.workers = j.value("workers", t.workers);
    t.epsilon = j.value("epsilon", t.epsilon);
    t.weights = j.value("weights", t.weights);
    t.slope = j.value("slope", t.slope);
    t.offset = j.value("offset", t.offset);
    t.model = j.value("model", t.model);
    t.temperature = j.value("temperature", t.temperature);
    t.max_output_tokens = j.value("max_output_tokens", t.max_output_tokens);
    t.max_reasoning_tokens = j.value("max_reasoning_tokens", t.max_reasoning_tokens);
    t.horizon = j.value("horizon", t.horizon);
    t.check();
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed target spec: ") + e.what());
  }
}

nlohmann::json target_to_json(const TargetSpec& t) {
  nlohmann::json j = {{"backend", std::string(to_string(t.backend))},
                      {"seed", t.seed},
                      {"workers", t.workers}};
  switch (t.backend) {
    case Backend::kOracleNoisy:
      j["epsilon"] = t.epsilon;
      break;
    case Backend::kSyntheticLogistic:
      j["weights"] = t.weights;
      j["slope"] = t.slope;
      j["offset"] = t.offset;
      break;
    case Backend::kLlm:
      j["model"] = t.model;
      j["temperature"] = t.temperature;
      j["max_output_tokens"] = t.max_output_tokens;
      j["max_reasoning_tokens"] = t.max_reasoning_tokens;
      j["horizon"] = t.horizon;
      break;
  }
  return j;
}

nlohmann::json rollout_to_json(const RolloutResult& r) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& it : r.per_item) {
    nlohmann::json j = {{"id", it.problem_id}, {"correct", it.correct}, {"response", it.response}};
    if (!it.note.empty()) j["note"] = it.note;
    items.push_back(std::move(j));
  }
  return {{"rho_hat", r.rho_hat}, {"n", r.n}, {"per_item", std::move(items)}};
}

RolloutResult rollout_from_json(const nlohmann::json& j) {
  try {
    RolloutResult r;
    r.rho_hat = j.at("rho_hat").get<double>();
    r.n = j.at("n").get<std::size_t>();
    if (j.contains("per_item")) {
      for (const auto& it : j.at("per_item")) {
        r.per_item.push_back({it.at("id").get<std::string>(), it.at("correct").get<bool>(),
                              it.value("response", std::string{}), it.value("note", std::string{})});
      }
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed rollout result: ") + e.what());
  }
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double synthetic_success_prob(const std::vector<double>& weights, double slope, double offset,
                              const paramspace::ParameterSpec& spec,
                              const paramspace::ParamConfig& config) {
  const auto features = paramspace::featurize(spec, config);
  if (weights.size() != features.size()) {
    throw InvalidArgument(fmt::format("synthetic target has {} weights for {} feature slots",
                                      weights.size(), features.size()));
  }
  double score = 0.0;
  for (std::size_t i = 0; i < features.size(); ++i) score += weights[i] * features[i];
  return sigmoid(offset - slope * score);
}

namespace {

std::string corrupt_arith(const arith::ArithProblem& problem, Rng& rng) {
  const std::size_t max_len = std::max<std::size_t>(problem.ground_truth.size(), 1);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const std::size_t len = 1 + rng.index(max_len);
    std::vector<arith::Op> ops;
    for (std::size_t i = 0; i < len; ++i) ops.push_back(arith::kAllOps[rng.index(arith::kAllOps.size())]);
    if (!arith::verify(problem, ops)) return "FINAL " + arith::join_ops(ops);
  }
  // Every short sequence solves this problem; answer with no operators
  // unless that is correct too, then with an unparseable line.
  if (!arith::verify(problem, {})) return "FINAL";
  return "FINAL ?";
}

std::string corrupt_spatial(const spatial::SpatialProblem& problem) {
  nlohmann::json answer = problem.ground_truth;
  for (const auto& f : problem.schema) {
    if (f.kind == spatial::ValueKind::kFloat) {
      answer[f.key] = answer[f.key].get<double>() + 1.0;
      return answer.dump();
    }
    if (f.kind == spatial::ValueKind::kInteger) {
      answer[f.key] = answer[f.key].get<std::int64_t>() + 1;
      return answer.dump();
    }
  }
  for (const auto& f : problem.schema) {
    const auto o = spatial::parse_orientation(answer[f.key].get<std::string>());
    answer[f.key] = std::string(spatial::to_string(spatial::rotate(*o, 90)));
  }
  return answer.dump();
}

std::optional<std::pair<arith::Op, arith::Number>> parse_call(std::string_view text) {
  std::optional<std::pair<arith::Op, arith::Number>> found;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    pos = end + 1;
    const auto b = line.find_first_not_of(" \t\r*`>");
    if (b == std::string_view::npos) continue;
    line = line.substr(b);
    if (line.size() < 5) continue;
    std::string head(line.substr(0, 4));
    std::transform(head.begin(), head.end(), head.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    if (head != "CALL" || !std::isspace(static_cast<unsigned char>(line[4]))) continue;
    std::string rest(line.substr(5));
    for (char& c : rest) {
      if (c == '(' || c == ')' || c == ',' || c == '`' || c == '*') c = ' ';
    }
    const auto op_start = rest.find_first_not_of(" \t\r");
    if (op_start == std::string::npos) continue;
    const auto op_end = rest.find_first_of(" \t\r", op_start);
    if (op_end == std::string::npos) continue;
    const auto op = arith::parse_op(rest.substr(op_start, op_end - op_start));
    const auto num = arith::Number::parse(rest.substr(op_end));
    if (op && num) found = std::make_pair(*op, *num);
  }
  return found;
}

}  // namespace

std::string oracle_answer(const TargetSpec& spec, const env::Environment& env,
                          const env::Problem& problem) {
  Rng rng(mix_seed(spec.seed, problem.seed));
  const bool corrupt = rng.bernoulli(spec.epsilon);
  if (const auto* a = std::get_if<arith::ArithProblem>(&problem.payload)) {
    if (corrupt) return corrupt_arith(*a, rng);
    const std::size_t bound =
        a->ground_truth.empty() ? 10 : std::min<std::size_t>(a->ground_truth.size(), 10);
    const auto best = arith::shortest_solution(*a, arith::kAllOps, bound);
    if (!best) {
      throw NoSolutionFound(fmt::format("no solution of length <= {} for problem {}", bound,
                                        problem.id));
    }
    return "FINAL " + arith::join_ops(*best);
  }
  if (const auto* s = std::get_if<spatial::SpatialProblem>(&problem.payload)) {
    return corrupt ? corrupt_spatial(*s) : s->ground_truth.dump();
  }
  (void)env;
  return corrupt ? "incorrect" : "correct";
}

LlmAnswer llm_answer(const TargetSpec& spec, const env::Environment& env,
                     const env::Problem& problem, gateway::ChatClient& client) {
  gateway::ChatRequest request;
  request.model = spec.model;
  request.temperature = spec.temperature;
  request.max_output_tokens = spec.max_output_tokens;
  request.max_reasoning_tokens = spec.max_reasoning_tokens;
  request.messages.push_back({"user", env.prompt(problem)});

  if (!std::holds_alternative<arith::ArithProblem>(problem.payload)) {
    return {client.chat(request).content, 1};
  }
  for (int exchange = 1; exchange <= spec.horizon; ++exchange) {
    const auto response = client.chat(request);
    if (arith::parse_final_line(response.content)) return {response.content, exchange};
    request.messages.push_back({"assistant", response.content});
    std::string reply;
    if (const auto call = parse_call(response.content)) {
      try {
        const auto value = arith::apply_op(call->first, call->second);
        reply = fmt::format("{}({}) = {}", arith::to_string(call->first), call->second.to_string(),
                            value.to_string());
      } catch (const DomainError& e) {
        reply = fmt::format("Error: {}", e.what());
      }
    } else {
      reply =
          "Error: respond with either CALL <operator> <number> or FINAL <sequence of operators>.";
    }
    request.messages.push_back({"user", reply});
  }
  throw HorizonExceeded(fmt::format("no FINAL line within {} exchanges", spec.horizon));
}

RolloutResult evaluate(const TargetSpec& spec, const env::Environment& env,
                       const std::vector<env::Problem>& dataset,
                       std::shared_ptr<gateway::ChatClient> client) {
  spec.check();
  if (dataset.empty()) throw InvalidArgument("cannot evaluate an empty dataset");
  if (spec.backend == Backend::kLlm && !client) {
    throw InvalidArgument("llm target needs a gateway client");
  }
  RolloutResult result;
  result.n = dataset.size();
  result.per_item.resize(dataset.size());

  auto score = [&](std::size_t i) {
    const auto& problem = dataset[i];
    ItemResult& item = result.per_item[i];
    item.problem_id = problem.id;
    switch (spec.backend) {
      case Backend::kOracleNoisy:
        item.response = oracle_answer(spec, env, problem);
        item.correct = env.check(problem, item.response);
        break;
      case Backend::kSyntheticLogistic: {
        const double p = synthetic_success_prob(spec.weights, spec.slope, spec.offset, env.spec(),
                                                problem.config);
        Rng rng(mix_seed(spec.seed, problem.seed));
        item.correct = rng.bernoulli(p);
        item.response = item.correct ? "correct" : "incorrect";
        break;
      }
      case Backend::kLlm:
        try {
          item.response = llm_answer(spec, env, problem, *client).text;
          item.correct = env.check(problem, item.response);
        } catch (const HorizonExceeded& e) {
          item.correct = false;
          item.note = e.what();
        }
        break;
    }
  };

  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::optional<std::size_t> failed_index;
  std::exception_ptr failure;
  auto worker = [&] {
    for (std::size_t i = next++; i < dataset.size(); i = next++) {
      try {
        score(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!failed_index || i < *failed_index) {
          failed_index = i;
          failure = std::current_exception();
        }
      }
    }
  };
  const std::size_t threads = std::min(spec.workers, dataset.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) {
    try {
      std::rethrow_exception(failure);
    } catch (const InvalidArgument&) {
      throw;
    } catch (const NoSolutionFound&) {
      throw;
    } catch (const std::exception& e) {
      throw BackendError(*failed_index, e.what());
    }
  }
  std::size_t correct = 0;
  for (const auto& it : result.per_item) correct += it.correct ? 1 : 0;
  result.rho_hat = static_cast<double>(correct) / static_cast<double>(result.n);
  return result;
}

}  // namespace difftune::targets
