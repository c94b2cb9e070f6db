// Acceptance suite: one PASS/FAIL line per criterion.
//
// Exit status is 0 when every failing criterion is listed in
// kUnattainable (each entry carries the reason it cannot pass), 1
// otherwise. --strict turns every FAIL into a non-zero exit.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>

#include "difftune/arith.hpp"
#include "difftune/cli.hpp"
#include "difftune/designers.hpp"
#include "difftune/environment.hpp"
#include "difftune/errors.hpp"
#include "difftune/gateway.hpp"
#include "difftune/metrics.hpp"
#include "difftune/orchestrator.hpp"
#include "difftune/rng.hpp"
#include "difftune/spatial.hpp"
#include "difftune/surrogate.hpp"
#include "difftune/targets.hpp"
#include "difftune/templates.hpp"
#include "support/fakes.hpp"
#include "support/generators.hpp"
#include "support/spatial_oracle.hpp"

namespace {

using namespace difftune;
namespace ps = difftune::paramspace;
using Clock = std::chrono::steady_clock;

// Pinned tolerances and budgets.
constexpr double kBudgetC1 = 1.0;  // seconds
constexpr double kBudgetC2 = 30.0;
constexpr double kBudgetC4 = 30.0;
constexpr double kBudgetC5 = 60.0;
constexpr double kBudgetC6 = 60.0;
constexpr double kCalibrationTol = 0.03;
constexpr double kGapMedium = 0.05;
constexpr double kGapOther = 0.07;
constexpr double kMinHeldOutR2 = 0.99;
constexpr double kTopQuantile = 0.10;
constexpr double kCiMean = 0.3000;
constexpr double kCiHalfWidth = 0.1837;
constexpr double kCiTol = 0.0005;
constexpr double kOracleTol = 1e-9;

const std::map<int, std::string> kUnattainable = {
    {1,
     "the printed 3x3 example has its top two rows both running right to left, which no zigzag "
     "numbering produces; the numbering that yields tiles 111 and 139 gives a top row of 7 8 9"},
};

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    if (!ok) pass = false;
    notes.push_back((ok ? "ok: " : "FAILED: ") + what);
  }
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string join_rows(const std::vector<std::vector<std::int64_t>>& rows) {
  std::string out;
  for (const auto& r : rows) {
    if (!out.empty()) out += " / ";
    for (std::size_t i = 0; i < r.size(); ++i) out += (i ? " " : "") + std::to_string(r[i]);
  }
  return out;
}

Outcome criterion1() {
  Outcome o;
  const auto t0 = Clock::now();
  const auto a = spatial::tile_of(12, {3.5, 3.5});
  const auto b = spatial::tile_of(12, {-0.5, 5.5});
  o.check(a == 111, fmt::format("tile_of(12, (3.5, 3.5)) = {} (want 111)", a));
  o.check(b == 139, fmt::format("tile_of(12, (-0.5, 5.5)) = {} (want 139)", b));
  const auto layout = spatial::tile_layout(3);
  const std::vector<std::vector<std::int64_t>> want = {{9, 8, 7}, {6, 5, 4}, {1, 2, 3}};
  o.check(layout == want,
          fmt::format("3x3 layout {} (want {})", join_rows(layout), join_rows(want)));
  const double dt = seconds_since(t0);
  o.check(dt < kBudgetC1, fmt::format("{:.3f}s < {}s", dt, kBudgetC1));
  return o;
}

Outcome criterion2() {
  Outcome o;
  const auto t0 = Clock::now();
  Rng rng(20240601);
  int agree = 0;
  int wrap_on = 0;
  std::string first_mismatch;
  for (int k = 0; k < 1000; ++k) {
    auto params = testing::random_spatial_params(rng, 5, 8, 6);
    params.wrap_around = k % 2 == 0;
    wrap_on += params.wrap_around ? 1 : 0;
    const auto problem = spatial::generate_problem(params, rng.next_u64());
    const auto expected = testing::SpatialOracle::solve(problem);
    if (spatial::compute_ground_truth(problem) == expected && problem.ground_truth == expected) {
      ++agree;
    } else if (first_mismatch.empty()) {
      first_mismatch = spatial::problem_to_json(problem).dump();
    }
  }
  o.check(agree == 1000, fmt::format("{}/1000 instances agree with the brute-force stepper", agree));
  if (!first_mismatch.empty()) o.notes.push_back("first mismatch: " + first_mismatch);
  o.check(wrap_on == 500, fmt::format("{} instances with wrap on, {} off", wrap_on, 1000 - wrap_on));
  const double dt = seconds_since(t0);
  o.check(dt < kBudgetC2, fmt::format("{:.2f}s < {}s", dt, kBudgetC2));
  return o;
}

Outcome criterion3() {
  Outcome o;
  Rng rng(7);
  int restored = 0;
  int identities = 0;
  for (int k = 0; k < 1000; ++k) {
    const auto s = testing::random_state(rng);
    auto t = s;
    const spatial::SpatialAction quarter{spatial::ActionKind::kBoardRotate,
                                         std::string(spatial::kBoardId), 90};
    for (int i = 0; i < 4; ++i) t = spatial::apply_action(t, quarter);
    restored += t == s ? 1 : 0;
    bool same = true;
    for (int deg : {0, 360}) {
      same &= spatial::apply_action(s, {spatial::ActionKind::kBoardRotate,
                                        std::string(spatial::kBoardId), deg}) == s;
      same &= spatial::apply_action(s, {spatial::ActionKind::kParticleRotate, "P1", deg}) == s;
    }
    identities += same ? 1 : 0;
  }
  o.check(restored == 1000, fmt::format("{}/1000 states restored by four quarter turns", restored));
  o.check(identities == 1000, fmt::format("{}/1000 states fixed by 0 and 360", identities));
  return o;
}

Outcome criterion4() {
  Outcome o;
  const auto t0 = Clock::now();
  Rng rng(99);
  int verified = 0;
  int generated = 0;
  int exhausted = 0;
  while (generated < 1000) {
    const auto params = testing::random_arith_params(rng);
    try {
      const auto p = arith::generate_problem(params, rng.next_u64());
      ++generated;
      verified += arith::verify(p, p.ground_truth) ? 1 : 0;
    } catch (const GenerationExhausted&) {
      ++exhausted;
    }
  }
  o.check(verified == 1000,
          fmt::format("{}/1000 generated problems verify their own ground truth "
                      "({} unsatisfiable param draws skipped)",
                      verified, exhausted));

  arith::ArithProblem p;
  p.x = arith::Number(3);
  p.y = arith::Number(36);
  const std::vector<arith::Op> allowed = {arith::Op::kAdd, arith::Op::kMul};
  const auto sols = arith::enumerate_solutions(p, allowed, 2, 100);
  const std::vector<std::vector<arith::Op>> want = {{arith::Op::kAdd, arith::Op::kMul}};
  o.check(sols == want, fmt::format("enumerate(3 -> 36, {{add, mul}}, len 2) has {} solution(s), "
                                    "first [{}]",
                                    sols.size(), sols.empty() ? "" : arith::join_ops(sols[0])));

  const std::vector<arith::Op> squarings(8, arith::Op::kMul);
  const auto big = arith::eval_sequence(squarings, arith::Number(40));
  o.check(big.is_integer() && big.to_string().size() == 411,
          fmt::format("40 squared 8 times has {} digits (want 411)", big.to_string().size()));
  const double dt = seconds_since(t0);
  o.check(dt < kBudgetC4, fmt::format("{:.2f}s < {}s", dt, kBudgetC4));
  return o;
}

Outcome criterion5() {
  Outcome o;
  const auto t0 = Clock::now();
  const auto env = env::Environment::spatial();
  for (double eps : {0.0, 0.25, 0.5}) {
    double total = 0.0;
    for (std::uint64_t s = 0; s < 20; ++s) {
      const auto config = ps::sample_uniform(env.spec(), mix_seed(1000, s));
      targets::TargetSpec t;
      t.backend = targets::Backend::kOracleNoisy;
      t.epsilon = eps;
      t.seed = s;
      total += targets::evaluate(t, env, env.generate_dataset(config, 500, s)).rho_hat;
    }
    const double m = total / 20.0;
    o.check(std::abs(m - (1.0 - eps)) <= kCalibrationTol,
            fmt::format("eps {:.2f}: mean rho_hat {:.4f} vs {:.2f} (tol {})", eps, m, 1.0 - eps,
                        kCalibrationTol));
  }
  const double dt = seconds_since(t0);
  o.check(dt < kBudgetC5, fmt::format("{:.2f}s < {}s", dt, kBudgetC5));
  return o;
}

targets::TargetSpec logistic_target() {
  targets::TargetSpec t;
  t.backend = targets::Backend::kSyntheticLogistic;
  t.weights = {1.0};
  t.slope = 10.0;
  t.offset = 5.0;
  return t;
}

orchestrator::SearchInputs synthetic_inputs(designers::Strategy strategy, double rho,
                                            std::uint64_t seed) {
  orchestrator::SearchInputs in;
  in.designer.strategy = strategy;
  in.designer.knob = "difficulty";
  in.target = logistic_target();
  in.rho = rho;
  in.iterations = 10;
  in.rollout_size = 200;
  in.seed = seed;
  return in;
}

Outcome criterion6() {
  Outcome o;
  const auto t0 = Clock::now();
  for (double rho : {0.5, 0.25, 0.75, 0.9}) {
    const auto run = orchestrator::run_search(
        synthetic_inputs(designers::Strategy::kScriptedBisection, rho, 11));
    const double bound = rho == 0.5 ? kGapMedium : kGapOther;
    o.check(run.best_index && run.best_gap <= bound,
            fmt::format("rho {:.2f}: best gap {:.4f} at iteration {} (bound {})", rho, run.best_gap,
                        run.best_index.value_or(0), bound));
  }
  const double dt = seconds_since(t0);
  o.check(dt < kBudgetC6, fmt::format("{:.2f}s < {}s", dt, kBudgetC6));
  return o;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Outcome criterion7() {
  Outcome o;
  std::vector<double> ppr, random;
  for (std::uint64_t s = 0; s < 20; ++s) {
    auto in = synthetic_inputs(designers::Strategy::kRsPpr, 0.5, s);
    in.designer.p = 0.5;
    in.designer.delta = 0.1;
    ppr.push_back(orchestrator::run_search(in).best_gap);
    random.push_back(
        orchestrator::run_search(synthetic_inputs(designers::Strategy::kRandom, 0.5, s)).best_gap);
  }
  o.check(median(ppr) <= median(random),
          fmt::format("median best gap: rs-ppr {:.4f} <= random {:.4f}", median(ppr), median(random)));

  const auto env = env::Environment::synthetic();
  const auto target = logistic_target();
  int minimal = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    std::vector<ps::ParamConfig> cands;
    for (std::uint64_t k = 0; k < 8; ++k) cands.push_back(ps::sample_uniform(env.spec(), mix_seed(s, k)));
    const auto r = designers::bon_tm_select(cands, 0.5, 50, target, env, s);
    bool ok = true;
    for (const auto& c : cands) {
      const auto rho_hat = targets::evaluate(target, env, env.generate_dataset(c, 50, s)).rho_hat;
      ok &= r.gaps[r.index] <= std::abs(rho_hat - 0.5);
    }
    minimal += ok ? 1 : 0;
  }
  o.check(minimal == 20, fmt::format("bon-tm picked the minimal measured gap in {}/20 draws", minimal));
  return o;
}

Outcome criterion8() {
  Outcome o;
  const auto& spec = env::Environment::spatial().spec();
  const auto true_gap = [&](const ps::ParamConfig& c) { return 0.5 * ps::featurize(spec, c)[0]; };
  const auto samples = [&](std::uint64_t seed, std::size_t n) {
    std::vector<designers::Sample> out;
    for (std::size_t k = 0; k < n; ++k) {
      auto c = ps::sample_uniform(spec, mix_seed(seed, k));
      const double g = true_gap(c);
      out.push_back({std::move(c), g});
    }
    return out;
  };
  const auto model = designers::train_surrogate(samples(1, 100), spec);
  std::vector<double> truth, pred;
  for (const auto& s : samples(2, 200)) {
    truth.push_back(s.gap);
    pred.push_back(model.predict(spec, s.config));
  }
  const double r2 = designers::r_squared(truth, pred);
  o.check(r2 >= kMinHeldOutR2, fmt::format("held-out R^2 {:.5f} >= {}", r2, kMinHeldOutR2));

  int within = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto m = designers::train_surrogate(samples(100 + s, 100), spec);
    std::vector<ps::ParamConfig> cands;
    std::vector<double> gaps;
    for (std::uint64_t k = 0; k < 50; ++k) {
      cands.push_back(ps::sample_uniform(spec, mix_seed(500 + s, k)));
      gaps.push_back(true_gap(cands.back()));
    }
    const auto pick = designers::bon_ml_select(m, spec, cands);
    auto sorted = gaps;
    std::sort(sorted.begin(), sorted.end());
    const double q = sorted[static_cast<std::size_t>(kTopQuantile * static_cast<double>(sorted.size() - 1))];
    within += gaps[pick] <= q ? 1 : 0;
  }
  o.check(within == 20, fmt::format("bon-ml pick inside the top-10% true-gap quantile in {}/20 seeds", within));
  return o;
}

Outcome criterion9() {
  Outcome o;
  const std::vector<double> v = {0.2, 0.3, 0.4};
  const auto ci = metrics::aggregate_ci(v, 0.95);
  o.check(std::abs(ci.mean - kCiMean) <= kCiTol, fmt::format("mean {:.4f}", ci.mean));
  o.check(std::abs(ci.half_width - kCiHalfWidth) <= kCiTol,
          fmt::format("half width {:.4f} (want {} +- {})", ci.half_width, kCiHalfWidth, kCiTol));
  // Independent route: Boost's t quantile and a hand-rolled stddev.
  const double m = (v[0] + v[1] + v[2]) / 3.0;
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  const double sd = std::sqrt(ss / 2.0);
  const double t = boost::math::quantile(boost::math::students_t(3.0), 0.975);
  const double hw = t * sd / std::sqrt(3.0);
  o.check(std::abs(ci.half_width - hw) <= kOracleTol,
          fmt::format("matches boost students_t route ({:.6f} vs {:.6f})", ci.half_width, hw));
  return o;
}

Outcome criterion10() {
  Outcome o;
  testing::TempDir dir;
  const auto store = dir / "store.jsonl";
  auto transport = std::make_shared<testing::FakeTransport>();
  gateway::GatewayConfig gc;
  gc.api_key = "unused";
  auto live = std::make_shared<gateway::LiveClient>(gc, transport);

  const auto arith_spec = env::Environment::arithmetic().spec();
  const auto spatial_spec = env::Environment::spatial().spec();
  designers::LlmProposeOptions arith_opts;
  arith_opts.prompt_template = std::string(templates::builtin("arithmetic_designer"));
  designers::LlmProposeOptions spatial_opts;
  spatial_opts.prompt_template = std::string(templates::builtin("spatial_designer"));

  const std::string valid =
      R"({"thought_process": "x", "max_range_of_nums": 30, "N": 8, "K": 4, "type_of_nums": "int",
          "operator_sequence": ["add", "mul", "sub", "add", "mul", "sub", "add", "mul"]})";
  auto wide = ps::config_to_json(ps::sample_uniform(spatial_spec, 3));
  wide["width"] = 150;

  // Record canned replies once.
  {
    gateway::RecordReplayClient rec(gateway::Mode::kRecord, store,
                                    std::make_shared<testing::ScriptedClient>(std::vector<std::string>{valid}));
    designers::llm_propose(arith_opts, arith_spec, 0.25, {}, rec);
  }
  {
    gateway::RecordReplayClient rec(gateway::Mode::kRecord, store,
                                    std::make_shared<testing::ScriptedClient>(std::vector<std::string>{wide.dump()}));
    designers::llm_propose(spatial_opts, spatial_spec, 0.5, {}, rec);
  }
  {
    gateway::RecordReplayClient rec(gateway::Mode::kRecord, store,
                                    std::make_shared<testing::ScriptedClient>(std::vector<std::string>{"no json here"}));
    try {
      designers::llm_propose(arith_opts, arith_spec, 0.75, {}, rec);
    } catch (const UnparseableResponse&) {
    }
  }

  gateway::RecordReplayClient replay(gateway::Mode::kReplay, store, live);
  const auto c = designers::llm_propose(arith_opts, arith_spec, 0.25, {}, replay);
  o.check(ps::validate(arith_spec, c).empty() && ps::get_int(c, "N") == 8 && ps::get_int(c, "K") == 4,
          "replayed valid reply parses to an in-domain config with N=8, K=4");
  const auto w = designers::llm_propose(spatial_opts, spatial_spec, 0.5, {}, replay);
  o.check(ps::get_int(w, "width") == 100, fmt::format("width 150 projected to {}", ps::get_int(w, "width")));
  bool unparseable = false;
  try {
    designers::llm_propose(arith_opts, arith_spec, 0.75, {}, replay);
  } catch (const UnparseableResponse&) {
    unparseable = true;
  }
  o.check(unparseable, "R+1 non-JSON replies raise UnparseableResponse");
  o.check(transport->calls.load() == 0,
          fmt::format("{} network calls during replay", transport->calls.load()));
  return o;
}

Outcome criterion11() {
  Outcome o;
  testing::TempDir dir;
  const nlohmann::json cfg = {
      {"env", "synthetic"},
      {"designer", {{"strategy", "rs-ppr"}, {"p", 0.5}, {"delta", 0.1}}},
      {"target", {{"backend", "synthetic-logistic"}, {"weights", {1.0}}, {"slope", 10.0}, {"offset", 5.0}}},
      {"level", "medium"},
      {"seed", 42}};
  testing::spit(dir / "config.json", cfg.dump(2));
  std::ostringstream sink;
  int codes = 0;
  for (const char* sub : {"a", "b"}) {
    codes += cli::run({"tune", "--config", (dir / "config.json").string(), "--output_dir",
                       (dir / sub).string()},
                      sink, sink);
  }
  o.check(codes == 0, "both tune runs exit 0");
  const auto a = testing::slurp(dir / "a" / "run_log.jsonl");
  const auto b = testing::slurp(dir / "b" / "run_log.jsonl");
  o.check(!a.empty() && a == b, fmt::format("run logs byte-identical ({} bytes)", a.size()));
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  bool strict = false;
  bool verbose = false;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--strict") == 0) strict = true;
    if (std::strcmp(argv[i], "--verbose") == 0 || std::strcmp(argv[i], "-v") == 0) verbose = true;
  }

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"spatial tile goldens and 3x3 zigzag layout", criterion1},
      {"simulator agrees with brute-force stepper on 1000 instances", criterion2},
      {"four quarter turns and 0/360 rotations are identities", criterion3},
      {"arithmetic self-verification, enumeration, big integers", criterion4},
      {"noisy-oracle calibration", criterion5},
      {"bisection search converges at four levels", criterion6},
      {"rs-ppr beats random on median; bon-tm picks the minimum", criterion7},
      {"surrogate fidelity and bon-ml selection", criterion8},
      {"confidence interval arithmetic", criterion9},
      {"llm designer plumbing through replay", criterion10},
      {"tune logs are byte-reproducible", criterion11},
  };

  std::set<int> failed;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k + 1);
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o.check(false, std::string("threw: ") + e.what());
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << id << ": " << criteria[k].first << "\n";
    if (!o.pass || verbose) {
      for (const auto& n : o.notes) std::cout << "        " << n << "\n";
    }
    if (!o.pass) {
      failed.insert(id);
      if (const auto it = kUnattainable.find(id); it != kUnattainable.end()) {
        std::cout << "        unattainable as stated: " << it->second << "\n";
      }
    }
  }

  bool unexpected = false;
  for (int id : failed) unexpected |= kUnattainable.count(id) == 0;
  std::cout << fmt::format("{}/{} criteria passed", criteria.size() - failed.size(), criteria.size());
  if (!failed.empty()) {
    std::cout << "; failed:";
    for (int id : failed) std::cout << " " << id << (kUnattainable.count(id) ? " (unattainable)" : "");
  }
  std::cout << "\n";
  if (strict) return failed.empty() ? 0 : 1;
  return unexpected ? 1 : 0;
}
