#pragma once

// Board-and-particles grid world: a square board of unit tiles carrying two
// particles, driven by rotations and unit moves, queried for locations, tile
// numbers and orientations.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "difftune/paramspace.hpp"

namespace difftune::spatial {

/// Degrees counter-clockwise from east.
enum class Orientation : int { kEast = 0, kNorth = 90, kWest = 180, kSouth = 270 };

std::string_view to_string(Orientation o);
/// Accepts cardinal names in any case.
std::optional<Orientation> parse_orientation(std::string_view name);
/// Adds a rotation amount; any multiple of 90 degrees, negative allowed.
Orientation rotate(Orientation o, int degrees);
int degrees_of(Orientation o);

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

/// Unit vector pointing along an orientation.
Vec2 direction(Orientation o);

enum class Move { kLeft, kRight, kForward, kBackward };

std::string_view to_string(Move m);
std::optional<Move> parse_move(std::string_view name);
/// Heading of a move for an entity facing `facing`.
Orientation heading(Orientation facing, Move m);

struct BoardState {
  std::int64_t width = 5;
  Vec2 center;
  Orientation orientation = Orientation::kNorth;
  bool wrap_around = false;
  friend bool operator==(const BoardState&, const BoardState&) = default;
};

struct ParticleState {
  std::string id;
  Vec2 position;
  Orientation orientation = Orientation::kNorth;
  friend bool operator==(const ParticleState&, const ParticleState&) = default;
};

struct State {
  BoardState board;
  std::vector<ParticleState> particles;
  friend bool operator==(const State&, const State&) = default;

  /// Throws InvalidArgument for an unknown id.
  const ParticleState& particle(std::string_view id) const;
};

enum class ActionKind { kBoardRotate, kBoardMove, kParticleRotate, kParticleMove };

std::string_view to_string(ActionKind kind);
std::optional<ActionKind> parse_action_kind(std::string_view name);

struct SpatialAction {
  ActionKind kind = ActionKind::kBoardRotate;
  std::string subject;  // "B1" or a particle id
  int rotation = 0;     // rotate kinds: 0, 90, 180, 270 or 360
  Move move = Move::kForward;
  friend bool operator==(const SpatialAction&, const SpatialAction&) = default;
};

inline constexpr std::string_view kBoardId = "B1";

/// Counter-clockwise rotation of `p` about `center` by a multiple of 90
/// degrees. Exact: no trigonometry involved.
Vec2 rotate_point(Vec2 p, Vec2 center, int degrees);

/// Tile number of a centroid on an unmoved, unrotated board of the given
/// width centred at the origin. Rows count from the bottom; even rows run
/// left to right, odd rows right to left. Throws OffBoard.
std::int64_t tile_of(std::int64_t width, Vec2 position);

/// Tile number on a board that may have moved and rotated. Labels travel
/// with the board.
std::int64_t tile_of(const BoardState& board, Vec2 position);

/// Rows of tile numbers as drawn with the top row first.
std::vector<std::vector<std::int64_t>> tile_layout(std::int64_t width);

/// Target of a unit particle step: `to` when inside the footprint, otherwise
/// the opposite-side centroid on the same lane (wrap) or `from` (no wrap).
Vec2 wrap_or_stay(const BoardState& board, Vec2 from, Vec2 to);

State apply_action(const State& state, const SpatialAction& action);

// Parameters -----------------------------------------------------------------

struct SpatialParams {
  std::int64_t width = 5;
  bool wrap_around = false;
  bool board_moves = false;
  std::vector<Move> board_allowed_moves;
  bool board_rotates = false;
  std::vector<int> board_allowed_rotations;
  bool particle_moves = false;
  std::vector<Move> particle_allowed_moves;
  bool particle_rotates = false;
  std::vector<int> particle_allowed_rotations;
  std::int64_t board_rotation_actions = 0;
  std::int64_t particle_rotation_actions = 0;
  std::int64_t board_movement_actions = 0;
  std::int64_t particle_movement_actions = 0;
  friend bool operator==(const SpatialParams&, const SpatialParams&) = default;
};

/// width in [5,100]; four capability flags each coupling a non-empty allowed
/// set when true and an empty set plus a zero action count when false;
/// action counts in [0,15].
const paramspace::ParameterSpec& parameter_spec();
SpatialParams params_from_config(const paramspace::ParamConfig& config);
paramspace::ParamConfig params_to_config(const SpatialParams& params);

// Problems ---------------------------------------------------------------------

enum class QueryType { kAbsoluteLocation, kTileNumber, kOrientation, kRelativeLocation };

std::string_view to_string(QueryType type);
std::optional<QueryType> parse_query_type(std::string_view name);

struct Query {
  QueryType type = QueryType::kAbsoluteLocation;
  std::string subject;
  std::string reference;  // relative-location only
  friend bool operator==(const Query&, const Query&) = default;
};

enum class ValueKind { kFloat, kInteger, kOrientation };

std::string_view to_string(ValueKind kind);

struct SchemaField {
  std::string key;
  ValueKind kind = ValueKind::kFloat;
  std::string description;
};

/// Answer keys for a query, e.g. board_B1_x / board_B1_y,
/// particle_P1_tile, particle_P1_orientation,
/// particle_P1_relative_to_board_B1_x.
std::vector<SchemaField> answer_schema(const Query& query);

struct SpatialProblem {
  SpatialParams params;
  State initial;
  std::vector<SpatialAction> actions;
  Query query;
  std::vector<SchemaField> schema;
  nlohmann::json ground_truth;  // key -> number or orientation name
  std::string rendered_prompt;
};

/// Particles P1 and P2 on distinct uniform tiles with uniform orientations;
/// the configured number of each action kind with uniform amounts and
/// particle subjects, shuffled; a uniform query type.
SpatialProblem generate_problem(const SpatialParams& params, std::uint64_t seed);

/// State after every action of the problem, in order.
State final_state(const SpatialProblem& problem);
nlohmann::json compute_ground_truth(const SpatialProblem& problem);

std::string render_prompt(const SpatialProblem& problem);

/// Checks the last JSON object in the text against the schema. Floats within
/// 1e-6 absolute; integers exact; orientations by name, case-insensitive.
bool verify_answer(const SpatialProblem& problem, std::string_view response_text);

nlohmann::json state_to_json(const State& state);
State state_from_json(const nlohmann::json& j);
nlohmann::json action_to_json(const SpatialAction& action);
SpatialAction action_from_json(const nlohmann::json& j);
nlohmann::json problem_to_json(const SpatialProblem& problem);
SpatialProblem problem_from_json(const nlohmann::json& j);

/// Python-style shortest round-trip real: 3.5, -0.5, 12.0.
std::string format_real(double v);

}  // namespace difftune::spatial
