#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "difftune/errors.hpp"
#include "difftune/rng.hpp"
#include "difftune/spatial.hpp"
#include "support/generators.hpp"
#include "support/spatial_oracle.hpp"

using namespace difftune::spatial;
using difftune::Rng;
using difftune::testing::SpatialOracle;

namespace {

State single_particle(std::int64_t width, Vec2 pos, Orientation o, bool wrap = false) {
  State s;
  s.board.width = width;
  s.board.wrap_around = wrap;
  s.particles.push_back({"P1", pos, o});
  return s;
}

SpatialAction board_rotate(int deg) { return {ActionKind::kBoardRotate, std::string(kBoardId), deg}; }
SpatialAction board_move(Move m) {
  return {ActionKind::kBoardMove, std::string(kBoardId), 0, m};
}
SpatialAction particle_rotate(const std::string& id, int deg) {
  return {ActionKind::kParticleRotate, id, deg};
}
SpatialAction particle_move(const std::string& id, Move m) {
  return {ActionKind::kParticleMove, id, 0, m};
}

SpatialAction random_action(Rng& rng) {
  SpatialAction a;
  a.kind = static_cast<ActionKind>(rng.index(4));
  const bool board = a.kind == ActionKind::kBoardRotate || a.kind == ActionKind::kBoardMove;
  a.subject = board ? std::string(kBoardId) : (rng.bernoulli(0.5) ? "P1" : "P2");
  a.rotation = difftune::testing::all_rotations()[rng.index(5)];
  a.move = difftune::testing::all_moves()[rng.index(4)];
  return a;
}

bool is_centroid(const BoardState& b, Vec2 p) {
  // Undo the board rotation, then check half-integer offsets inside the
  // footprint.
  const auto local = rotate_point(p, b.center, 360 - (degrees_of(b.orientation) + 270) % 360);
  const double half = (static_cast<double>(b.width) - 1.0) / 2.0;
  for (double v : {local.x - b.center.x, local.y - b.center.y}) {
    const double idx = v + half;
    if (idx < -1e-9 || idx > 2 * half + 1e-9) return false;
    if (std::abs(idx - std::round(idx)) > 1e-9) return false;
  }
  return true;
}

}  // namespace

TEST(TileOf, GoldenTwelveWide) {
  EXPECT_EQ(tile_of(12, {3.5, 3.5}), 111);
  EXPECT_EQ(tile_of(12, {-0.5, 5.5}), 139);
}

TEST(TileOf, ZigzagRowsAlternate) {
  // Bottom row left to right, next row right to left.
  EXPECT_EQ(tile_of(3, {-1, -1}), 1);
  EXPECT_EQ(tile_of(3, {1, -1}), 3);
  EXPECT_EQ(tile_of(3, {1, 0}), 4);
  EXPECT_EQ(tile_of(3, {-1, 0}), 6);
  const auto rows = tile_layout(3);
  ASSERT_EQ(rows.size(), 3U);
  EXPECT_EQ(rows[1], (std::vector<std::int64_t>{6, 5, 4}));
  EXPECT_EQ(rows[2], (std::vector<std::int64_t>{1, 2, 3}));
}

TEST(TileOf, LayoutIsAPermutation) {
  for (std::int64_t w = 1; w <= 9; ++w) {
    std::set<std::int64_t> seen;
    for (const auto& row : tile_layout(w)) seen.insert(row.begin(), row.end());
    EXPECT_EQ(static_cast<std::int64_t>(seen.size()), w * w);
    EXPECT_EQ(*seen.begin(), 1);
    EXPECT_EQ(*seen.rbegin(), w * w);
  }
}

TEST(TileOf, OffBoardThrows) {
  EXPECT_THROW(tile_of(12, {6.5, 0.5}), difftune::OffBoard);
  EXPECT_THROW(tile_of(5, {0.0, 3.0}), difftune::OffBoard);
}

TEST(TileOf, LabelsTravelWithTheBoard) {
  BoardState b;
  b.width = 5;
  b.center = {3, -2};
  EXPECT_EQ(tile_of(b, {1, -4}), 1);
  b.orientation = Orientation::kWest;  // rotated 90 CCW: bottom-left went to bottom-right
  EXPECT_EQ(tile_of(b, {5, -4}), 1);
}

TEST(RotatePoint, Examples) {
  EXPECT_EQ(rotate_point({1, 0}, {0, 0}, 90), (Vec2{0, 1}));
  EXPECT_EQ(rotate_point({3.5, 3.5}, {0, 0}, 270), (Vec2{3.5, -3.5}));
  EXPECT_EQ(rotate_point({2.5, -7}, {1, 1}, 360), (Vec2{2.5, -7}));
  EXPECT_EQ(rotate_point({2.5, -7}, {1, 1}, 0), (Vec2{2.5, -7}));
}

TEST(RotatePoint, MatchesRotationMatrix) {
  Rng rng(3);
  for (int k = 0; k < 200; ++k) {
    const Vec2 p{rng.uniform_int(-50, 50) / 2.0, rng.uniform_int(-50, 50) / 2.0};
    const Vec2 c{static_cast<double>(rng.uniform_int(-5, 5)), static_cast<double>(rng.uniform_int(-5, 5))};
    const int deg = 90 * static_cast<int>(rng.index(5));
    const double t = deg * M_PI / 180.0;
    const double dx = p.x - c.x;
    const double dy = p.y - c.y;
    const auto got = rotate_point(p, c, deg);
    EXPECT_NEAR(got.x, c.x + std::cos(t) * dx - std::sin(t) * dy, 1e-9);
    EXPECT_NEAR(got.y, c.y + std::sin(t) * dx + std::cos(t) * dy, 1e-9);
  }
}

TEST(Orientation, NamesAndRotation) {
  EXPECT_EQ(to_string(Orientation::kEast), "EAST");
  EXPECT_EQ(parse_orientation("south"), Orientation::kSouth);
  EXPECT_FALSE(parse_orientation("up").has_value());
  EXPECT_EQ(rotate(Orientation::kNorth, 90), Orientation::kWest);
  EXPECT_EQ(rotate(Orientation::kNorth, -90), Orientation::kEast);
  EXPECT_EQ(rotate(Orientation::kSouth, 450), Orientation::kEast);
}

TEST(ApplyAction, BoardRotationCarriesParticles) {
  const auto s = single_particle(12, {3.5, 3.5}, Orientation::kWest);
  const auto t = apply_action(s, board_rotate(90));
  EXPECT_EQ(t.board.orientation, Orientation::kWest);
  EXPECT_EQ(t.board.center, (Vec2{0, 0}));
  EXPECT_EQ(t.particle("P1").position, (Vec2{-3.5, 3.5}));
  EXPECT_EQ(t.particle("P1").orientation, Orientation::kSouth);
}

TEST(ApplyAction, BackwardOpposesFacing) {
  const auto s = single_particle(12, {0.5, 0.5}, Orientation::kSouth);
  const auto t = apply_action(s, particle_move("P1", Move::kBackward));
  EXPECT_EQ(t.particle("P1").position, (Vec2{0.5, 1.5}));
  EXPECT_EQ(t.particle("P1").orientation, Orientation::kSouth);
}

TEST(ApplyAction, WrapCrossesToOppositeSide) {
  const auto s = single_particle(12, {-0.5, 5.5}, Orientation::kSouth, true);
  const auto t = apply_action(s, particle_move("P1", Move::kBackward));
  EXPECT_EQ(t.particle("P1").position, (Vec2{-0.5, -5.5}));
}

TEST(ApplyAction, NoWrapStays) {
  const auto s = single_particle(12, {-0.5, 5.5}, Orientation::kSouth, false);
  const auto t = apply_action(s, particle_move("P1", Move::kBackward));
  EXPECT_EQ(t.particle("P1").position, (Vec2{-0.5, 5.5}));
}

TEST(ApplyAction, BoardMoveKeepsOrientationAndDragsParticles) {
  auto s = single_particle(5, {1, 1}, Orientation::kEast);
  s.board.orientation = Orientation::kWest;
  const auto t = apply_action(s, board_move(Move::kLeft));  // WEST + 90 = SOUTH
  EXPECT_EQ(t.board.center, (Vec2{0, -1}));
  EXPECT_EQ(t.board.orientation, Orientation::kWest);
  EXPECT_EQ(t.particle("P1").position, (Vec2{1, 0}));
  EXPECT_EQ(t.particle("P1").orientation, Orientation::kEast);
}

TEST(ApplyAction, UnknownParticleThrows) {
  const auto s = single_particle(5, {0, 0}, Orientation::kEast);
  EXPECT_THROW(apply_action(s, particle_rotate("P9", 90)), difftune::InvalidArgument);
}

TEST(WrapOrStay, Examples) {
  BoardState b;
  b.width = 5;
  EXPECT_EQ(wrap_or_stay(b, {0, 1}, {0, 2}), (Vec2{0, 2}));
  EXPECT_EQ(wrap_or_stay(b, {0, 2}, {0, 3}), (Vec2{0, 2}));
  b.wrap_around = true;
  EXPECT_EQ(wrap_or_stay(b, {0, 2}, {0, 3}), (Vec2{0, -2}));
  EXPECT_EQ(wrap_or_stay(b, {-2, 1}, {-3, 1}), (Vec2{2, 1}));
}

TEST(Properties, FourQuarterTurnsAreIdentity) {
  Rng rng(11);
  for (int k = 0; k < 1000; ++k) {
    const auto s = difftune::testing::random_state(rng);
    auto t = s;
    for (int i = 0; i < 4; ++i) t = apply_action(t, board_rotate(90));
    ASSERT_EQ(t, s) << state_to_json(s).dump();
  }
}

TEST(Properties, ZeroAndFullTurnsAreIdentity) {
  Rng rng(12);
  for (int k = 0; k < 300; ++k) {
    const auto s = difftune::testing::random_state(rng);
    for (int deg : {0, 360}) {
      EXPECT_EQ(apply_action(s, board_rotate(deg)), s);
      EXPECT_EQ(apply_action(s, particle_rotate("P1", deg)), s);
    }
  }
}

TEST(Properties, ConservedQuantities) {
  Rng rng(13);
  for (int k = 0; k < 1000; ++k) {
    const auto s = difftune::testing::random_state(rng);
    const auto a = random_action(rng);
    const auto t = apply_action(s, a);
    switch (a.kind) {
      case ActionKind::kBoardRotate:
        EXPECT_EQ(t.board.center, s.board.center);
        break;
      case ActionKind::kParticleRotate:
        EXPECT_EQ(t.particle(a.subject).position, s.particle(a.subject).position);
        break;
      case ActionKind::kBoardMove:
      case ActionKind::kParticleMove:
        EXPECT_EQ(t.board.orientation, s.board.orientation);
        for (const auto& p : s.particles) EXPECT_EQ(t.particle(p.id).orientation, p.orientation);
        break;
    }
  }
}

TEST(Properties, PositionsStayOnCentroids) {
  Rng rng(14);
  for (int k = 0; k < 300; ++k) {
    auto s = difftune::testing::random_state(rng);
    for (int step = 0; step < 12; ++step) {
      s = apply_action(s, random_action(rng));
      for (const auto& p : s.particles) {
        ASSERT_TRUE(is_centroid(s.board, p.position)) << state_to_json(s).dump();
      }
    }
  }
}

TEST(GroundTruth, AgreesWithOracle) {
  Rng rng(2024);
  for (int k = 0; k < 1000; ++k) {
    const auto params = difftune::testing::random_spatial_params(rng, 5, 8, 6);
    const auto problem = generate_problem(params, rng.next_u64());
    ASSERT_EQ(problem.ground_truth, SpatialOracle::solve(problem))
        << problem_to_json(problem).dump();
  }
}

TEST(GroundTruth, AgreesWithOracleOnLongerRuns) {
  Rng rng(77);
  for (int k = 0; k < 300; ++k) {
    const auto params = difftune::testing::random_spatial_params(rng, 5, 40, 60);
    const auto problem = generate_problem(params, rng.next_u64());
    ASSERT_EQ(problem.ground_truth, SpatialOracle::solve(problem))
        << problem_to_json(problem).dump();
  }
}

TEST(GroundTruth, Examples) {
  SpatialProblem p;
  p.initial = single_particle(12, {3.5, 3.5}, Orientation::kWest);
  p.actions = {board_rotate(270), particle_rotate("P1", 90), particle_move("P1", Move::kForward)};
  p.query = {QueryType::kAbsoluteLocation, std::string(kBoardId), ""};
  const auto gt = compute_ground_truth(p);
  EXPECT_EQ(gt["board_B1_x"], 0.0);
  EXPECT_EQ(gt["board_B1_y"], 0.0);

  p.actions.clear();
  p.query = {QueryType::kOrientation, "P1", ""};
  EXPECT_EQ(compute_ground_truth(p)["particle_P1_orientation"], "WEST");

  p.initial.particles.push_back({"P2", {-0.5, 1.5}, Orientation::kNorth});
  p.query = {QueryType::kRelativeLocation, "P1", "P2"};
  const auto rel = compute_ground_truth(p);
  EXPECT_EQ(rel["particle_P1_relative_to_particle_P2_x"], 4.0);
  EXPECT_EQ(rel["particle_P1_relative_to_particle_P2_y"], 2.0);
}

TEST(Generate, EmptyActionsLeaveInitialState) {
  SpatialParams params;
  params.width = 7;
  Rng rng(5);
  for (int k = 0; k < 50; ++k) {
    const auto p = generate_problem(params, rng.next_u64());
    EXPECT_TRUE(p.actions.empty());
    EXPECT_EQ(final_state(p), p.initial);
    ASSERT_EQ(p.initial.particles.size(), 2U);
    EXPECT_NE(p.initial.particles[0].position, p.initial.particles[1].position);
  }
}

TEST(Generate, CountsAndAllowedAmounts) {
  Rng rng(6);
  for (int k = 0; k < 200; ++k) {
    const auto params = difftune::testing::random_spatial_params(rng, 5, 20, 40);
    const auto p = generate_problem(params, rng.next_u64());
    std::int64_t br = 0, bm = 0, pr = 0, pm = 0;
    const auto has = [](const auto& set, const auto& v) {
      return std::find(set.begin(), set.end(), v) != set.end();
    };
    for (const auto& a : p.actions) {
      switch (a.kind) {
        case ActionKind::kBoardRotate: ++br; EXPECT_TRUE(has(params.board_allowed_rotations, a.rotation)); break;
        case ActionKind::kBoardMove: ++bm; EXPECT_TRUE(has(params.board_allowed_moves, a.move)); break;
        case ActionKind::kParticleRotate: ++pr; EXPECT_TRUE(has(params.particle_allowed_rotations, a.rotation)); break;
        case ActionKind::kParticleMove: ++pm; EXPECT_TRUE(has(params.particle_allowed_moves, a.move)); break;
      }
    }
    EXPECT_EQ(br, params.board_rotation_actions);
    EXPECT_EQ(bm, params.board_movement_actions);
    EXPECT_EQ(pr, params.particle_rotation_actions);
    EXPECT_EQ(pm, params.particle_movement_actions);
  }
}

TEST(Generate, DeterministicPerSeed) {
  Rng rng(8);
  const auto params = difftune::testing::random_spatial_params(rng, 5, 20, 20);
  EXPECT_EQ(problem_to_json(generate_problem(params, 42)), problem_to_json(generate_problem(params, 42)));
  EXPECT_EQ(render_prompt(generate_problem(params, 42)), generate_problem(params, 42).rendered_prompt);
}

TEST(Render, ContainsSidesAndSchema) {
  SpatialProblem p;
  p.initial = single_particle(12, {3.5, 3.5}, Orientation::kWest);
  p.initial.particles.push_back({"P2", {-0.5, 5.5}, Orientation::kSouth});
  p.query = {QueryType::kAbsoluteLocation, std::string(kBoardId), ""};
  p.schema = answer_schema(p.query);
  const auto text = render_prompt(p);
  for (const char* needle : {"SIDE-1", "SIDE-2", "SIDE-3", "SIDE-4", "board_B1_x", "board_B1_y",
                             "tile 111", "tile 139"}) {
    EXPECT_NE(text.find(needle), std::string::npos) << needle;
  }
}

TEST(Schema, Keys) {
  const auto keys = [](const Query& q) {
    std::vector<std::string> out;
    for (const auto& f : answer_schema(q)) out.push_back(f.key);
    return out;
  };
  EXPECT_EQ(keys({QueryType::kAbsoluteLocation, "B1", ""}),
            (std::vector<std::string>{"board_B1_x", "board_B1_y"}));
  EXPECT_EQ(keys({QueryType::kTileNumber, "P1", ""}), (std::vector<std::string>{"particle_P1_tile"}));
  EXPECT_EQ(keys({QueryType::kOrientation, "P2", ""}),
            (std::vector<std::string>{"particle_P2_orientation"}));
  EXPECT_EQ(keys({QueryType::kRelativeLocation, "P1", "B1"}),
            (std::vector<std::string>{"particle_P1_relative_to_board_B1_x",
                                      "particle_P1_relative_to_board_B1_y"}));
}

TEST(Verify, Tolerances) {
  SpatialProblem p;
  p.initial = single_particle(12, {3.5, 3.5}, Orientation::kWest);
  p.query = {QueryType::kAbsoluteLocation, "P1", ""};
  p.schema = answer_schema(p.query);
  p.ground_truth = compute_ground_truth(p);
  EXPECT_TRUE(verify_answer(p, p.ground_truth.dump()));
  EXPECT_TRUE(verify_answer(p, R"(Reasoning... {"particle_P1_x": 3.5000001, "particle_P1_y": 3.5})"));
  EXPECT_FALSE(verify_answer(p, R"({"particle_P1_x": 3.501, "particle_P1_y": 3.5})"));
  EXPECT_FALSE(verify_answer(p, R"({"particle_P1_x": 3.5})"));
  EXPECT_FALSE(verify_answer(p, R"({"particle_P1_x": "3.5", "particle_P1_y": 3.5})"));
  EXPECT_FALSE(verify_answer(p, "no json here"));
  // The last object counts.
  EXPECT_FALSE(verify_answer(p, p.ground_truth.dump() + R"( {"particle_P1_x": 0, "particle_P1_y": 0})"));

  p.query = {QueryType::kOrientation, "P1", ""};
  p.schema = answer_schema(p.query);
  p.ground_truth = compute_ground_truth(p);
  EXPECT_TRUE(verify_answer(p, R"({"particle_P1_orientation": "west"})"));
  EXPECT_FALSE(verify_answer(p, R"({"particle_P1_orientation": "EAST"})"));

  p.query = {QueryType::kTileNumber, "P1", ""};
  p.schema = answer_schema(p.query);
  p.ground_truth = compute_ground_truth(p);
  EXPECT_TRUE(verify_answer(p, R"({"particle_P1_tile": 111})"));
  EXPECT_FALSE(verify_answer(p, R"({"particle_P1_tile": 112})"));
}

TEST(Json, RoundTrips) {
  Rng rng(21);
  for (int k = 0; k < 100; ++k) {
    const auto params = difftune::testing::random_spatial_params(rng, 5, 30, 30);
    const auto p = generate_problem(params, rng.next_u64());
    const auto j = problem_to_json(p);
    EXPECT_EQ(problem_to_json(problem_from_json(j)), j);
    EXPECT_EQ(params_from_config(params_to_config(params)), params);
  }
}

TEST(FormatReal, PythonStyle) {
  EXPECT_EQ(format_real(3.5), "3.5");
  EXPECT_EQ(format_real(-0.5), "-0.5");
  EXPECT_EQ(format_real(12.0), "12.0");
}
