#include "difftune/spatial.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>

#include <fmt/format.h>

#include "difftune/errors.hpp"
#include "difftune/json_extract.hpp"
#include "difftune/rng.hpp"

namespace difftune::spatial {

namespace {

std::string upper(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return out;
}

int normalize_degrees(int degrees) {
  if (degrees % 90 != 0) throw InvalidArgument(fmt::format("rotation {} is not a multiple of 90", degrees));
  return ((degrees % 360) + 360) % 360;
}

constexpr std::array<Orientation, 4> kOrientations = {Orientation::kEast, Orientation::kNorth,
                                                      Orientation::kWest, Orientation::kSouth};
constexpr std::array<Move, 4> kMoves = {Move::kLeft, Move::kRight, Move::kForward, Move::kBackward};
constexpr std::array<int, 5> kRotations = {0, 90, 180, 270, 360};

bool is_board(std::string_view id) { return id == kBoardId; }

std::string entity_prefix(std::string_view id) {
  return fmt::format("{}_{}", is_board(id) ? "board" : "particle", id);
}

std::string entity_name(std::string_view id) {
  return fmt::format("{} {}", is_board(id) ? "board" : "particle", id);
}

Vec2 location_of(const State& s, std::string_view id) {
  if (is_board(id)) return s.board.center;
  return s.particle(id).position;
}

// Offset of a centroid from the board's lower-left edge, in tile units, in
// the frame where the board faces north.
std::optional<std::pair<std::int64_t, std::int64_t>> local_cell(const BoardState& board,
                                                                 Vec2 position) {
  const Vec2 local = rotate_point(position, board.center, 90 - degrees_of(board.orientation));
  const double half = static_cast<double>(board.width) / 2.0;
  const double col = local.x - board.center.x + half - 0.5;
  const double row = local.y - board.center.y + half - 0.5;
  const double c = std::round(col);
  const double r = std::round(row);
  if (std::fabs(col - c) > 1e-9 || std::fabs(row - r) > 1e-9) return std::nullopt;
  if (c < 0 || r < 0 || c >= static_cast<double>(board.width) ||
      r >= static_cast<double>(board.width)) {
    return std::nullopt;
  }
  return std::make_pair(static_cast<std::int64_t>(c), static_cast<std::int64_t>(r));
}

Vec2 centroid(const BoardState& board, std::int64_t col, std::int64_t row) {
  const double half = static_cast<double>(board.width) / 2.0;
  return {board.center.x + static_cast<double>(col) + 0.5 - half,
          board.center.y + static_cast<double>(row) + 0.5 - half};
}

template <typename T, std::size_t N>
T pick(Rng& rng, const std::array<T, N>& items) {
  return items[rng.index(N)];
}

template <typename T>
T pick(Rng& rng, const std::vector<T>& items) {
  return items[rng.index(items.size())];
}

}  // namespace

// Orientation and moves ----------------------------------------------------------

std::string_view to_string(Orientation o) {
  switch (o) {
    case Orientation::kEast: return "EAST";
    case Orientation::kNorth: return "NORTH";
    case Orientation::kWest: return "WEST";
    case Orientation::kSouth: return "SOUTH";
  }
  return "?";
}

std::optional<Orientation> parse_orientation(std::string_view name) {
  const auto n = upper(name);
  for (auto o : kOrientations) {
    if (to_string(o) == n) return o;
  }
  return std::nullopt;
}

int degrees_of(Orientation o) { return static_cast<int>(o); }

Orientation rotate(Orientation o, int degrees) {
  return static_cast<Orientation>(normalize_degrees(degrees_of(o) + normalize_degrees(degrees)));
}

Vec2 direction(Orientation o) {
  switch (o) {
    case Orientation::kEast: return {1.0, 0.0};
    case Orientation::kNorth: return {0.0, 1.0};
    case Orientation::kWest: return {-1.0, 0.0};
    case Orientation::kSouth: return {0.0, -1.0};
  }
  return {};
}

std::string_view to_string(Move m) {
  switch (m) {
    case Move::kLeft: return "LEFT";
    case Move::kRight: return "RIGHT";
    case Move::kForward: return "FORWARD";
    case Move::kBackward: return "BACKWARD";
  }
  return "?";
}

std::optional<Move> parse_move(std::string_view name) {
  const auto n = upper(name);
  for (auto m : kMoves) {
    if (to_string(m) == n) return m;
  }
  return std::nullopt;
}

Orientation heading(Orientation facing, Move m) {
  switch (m) {
    case Move::kForward: return facing;
    case Move::kBackward: return rotate(facing, 180);
    case Move::kLeft: return rotate(facing, 90);
    case Move::kRight: return rotate(facing, -90);
  }
  return facing;
}

std::string_view to_string(ActionKind kind) {
  switch (kind) {
    case ActionKind::kBoardRotate: return "board-rotate";
    case ActionKind::kBoardMove: return "board-move";
    case ActionKind::kParticleRotate: return "particle-rotate";
    case ActionKind::kParticleMove: return "particle-move";
  }
  return "?";
}

std::optional<ActionKind> parse_action_kind(std::string_view name) {
  for (auto k : {ActionKind::kBoardRotate, ActionKind::kBoardMove, ActionKind::kParticleRotate,
                 ActionKind::kParticleMove}) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

const ParticleState& State::particle(std::string_view id) const {
  for (const auto& p : particles) {
    if (p.id == id) return p;
  }
  throw InvalidArgument("unknown particle '" + std::string(id) + "'");
}

// Geometry ---------------------------------------------------------------------

Vec2 rotate_point(Vec2 p, Vec2 center, int degrees) {
  const double dx = p.x - center.x;
  const double dy = p.y - center.y;
  switch (normalize_degrees(degrees)) {
    case 90: return {center.x - dy, center.y + dx};
    case 180: return {center.x - dx, center.y - dy};
    case 270: return {center.x + dy, center.y - dx};
    default: return p;
  }
}

std::int64_t tile_of(std::int64_t width, Vec2 position) {
  BoardState board;
  board.width = width;
  return tile_of(board, position);
}

std::int64_t tile_of(const BoardState& board, Vec2 position) {
  const auto cell = local_cell(board, position);
  if (!cell) {
    throw OffBoard(fmt::format("({}, {}) is not a tile centroid of the {}-wide board",
                               format_real(position.x), format_real(position.y), board.width));
  }
  const auto [c, r] = *cell;
  const auto w = board.width;
  return r % 2 == 0 ? r * w + c + 1 : r * w + (w - c);
}

std::vector<std::vector<std::int64_t>> tile_layout(std::int64_t width) {
  BoardState board;
  board.width = width;
  std::vector<std::vector<std::int64_t>> rows;
  for (std::int64_t r = width - 1; r >= 0; --r) {
    std::vector<std::int64_t> row;
    for (std::int64_t c = 0; c < width; ++c) row.push_back(tile_of(board, centroid(board, c, r)));
    rows.push_back(std::move(row));
  }
  return rows;
}

Vec2 wrap_or_stay(const BoardState& board, Vec2 from, Vec2 to) {
  const double half = static_cast<double>(board.width) / 2.0;
  const double left = board.center.x - half;
  const double right = board.center.x + half;
  const double bottom = board.center.y - half;
  const double top = board.center.y + half;
  const bool inside = to.x > left && to.x < right && to.y > bottom && to.y < top;
  if (inside) return to;
  if (!board.wrap_around) return from;
  Vec2 out = to;
  if (to.x > right) out.x = left + 0.5;
  if (to.x < left) out.x = right - 0.5;
  if (to.y > top) out.y = bottom + 0.5;
  if (to.y < bottom) out.y = top - 0.5;
  return out;
}

State apply_action(const State& state, const SpatialAction& action) {
  State next = state;
  switch (action.kind) {
    case ActionKind::kBoardRotate: {
      next.board.orientation = rotate(state.board.orientation, action.rotation);
      for (auto& p : next.particles) {
        p.position = rotate_point(p.position, state.board.center, action.rotation);
        p.orientation = rotate(p.orientation, action.rotation);
      }
      break;
    }
    case ActionKind::kBoardMove: {
      const Vec2 d = direction(heading(state.board.orientation, action.move));
      next.board.center = {state.board.center.x + d.x, state.board.center.y + d.y};
      for (auto& p : next.particles) p.position = {p.position.x + d.x, p.position.y + d.y};
      break;
    }
    case ActionKind::kParticleRotate:
    case ActionKind::kParticleMove: {
      auto it = std::find_if(next.particles.begin(), next.particles.end(),
                             [&](const ParticleState& p) { return p.id == action.subject; });
      if (it == next.particles.end()) {
        throw InvalidArgument("unknown particle '" + action.subject + "'");
      }
      if (action.kind == ActionKind::kParticleRotate) {
        it->orientation = rotate(it->orientation, action.rotation);
      } else {
        const Vec2 d = direction(heading(it->orientation, action.move));
        it->position = wrap_or_stay(next.board, it->position,
                                    {it->position.x + d.x, it->position.y + d.y});
      }
      break;
    }
  }
  return next;
}

// Parameters -------------------------------------------------------------------

const paramspace::ParameterSpec& parameter_spec() {
  using paramspace::CrossConstraint;
  using paramspace::Label;
  using paramspace::LabelList;
  using paramspace::ParamDomain;
  static const paramspace::ParameterSpec spec = [] {
    LabelList moves;
    for (auto m : kMoves) moves.emplace_back(std::string(to_string(m)));
    LabelList rotations;
    for (int r : kRotations) rotations.emplace_back(std::int64_t{r});
    std::vector<paramspace::ParameterSpec::Entry> params = {
        {"width", ParamDomain::int_range(5, 100)},
        {"wrap_around", ParamDomain::boolean()},
        {"board_moves", ParamDomain::boolean()},
        {"board_allowed_moves", ParamDomain::subset(moves, 0, moves.size())},
        {"board_rotates", ParamDomain::boolean()},
        {"board_allowed_rotations", ParamDomain::subset(rotations, 0, rotations.size())},
        {"particle_moves", ParamDomain::boolean()},
        {"particle_allowed_moves", ParamDomain::subset(moves, 0, moves.size())},
        {"particle_rotates", ParamDomain::boolean()},
        {"particle_allowed_rotations", ParamDomain::subset(rotations, 0, rotations.size())},
        {"number_of_board_rotation_actions", ParamDomain::int_range(0, 15)},
        {"number_of_particle_rotation_actions", ParamDomain::int_range(0, 15)},
        {"number_of_board_movement_actions", ParamDomain::int_range(0, 15)},
        {"number_of_particle_movement_actions", ParamDomain::int_range(0, 15)},
    };
    std::vector<CrossConstraint> constraints;
    const std::array<std::array<const char*, 3>, 4> couplings = {{
        {"board_moves", "board_allowed_moves", "number_of_board_movement_actions"},
        {"board_rotates", "board_allowed_rotations", "number_of_board_rotation_actions"},
        {"particle_moves", "particle_allowed_moves", "number_of_particle_movement_actions"},
        {"particle_rotates", "particle_allowed_rotations", "number_of_particle_rotation_actions"},
    }};
    for (const auto& [flag, set, count] : couplings) {
      constraints.push_back(CrossConstraint::implies_nonempty(flag, set));
      constraints.push_back(CrossConstraint::implies_zero(flag, set));
      constraints.push_back(CrossConstraint::implies_zero(flag, count));
    }
    return paramspace::ParameterSpec("spatial", std::move(params), std::move(constraints));
  }();
  return spec;
}

namespace {

std::vector<Move> moves_from(const paramspace::LabelList& labels) {
  std::vector<Move> out;
  for (const auto& l : labels) {
    const auto name = paramspace::label_to_string(l);
    const auto m = parse_move(name);
    if (!m) throw InvalidArgument("unknown move '" + name + "'");
    out.push_back(*m);
  }
  return out;
}

std::vector<int> rotations_from(const paramspace::LabelList& labels) {
  std::vector<int> out;
  for (const auto& l : labels) {
    const auto* v = std::get_if<std::int64_t>(&l);
    if (!v || std::find(kRotations.begin(), kRotations.end(), *v) == kRotations.end()) {
      throw InvalidArgument("unknown rotation '" + paramspace::label_to_string(l) + "'");
    }
    out.push_back(static_cast<int>(*v));
  }
  return out;
}

paramspace::LabelList labels_of(const std::vector<Move>& moves) {
  paramspace::LabelList out;
  for (auto m : moves) out.emplace_back(std::string(to_string(m)));
  return out;
}

paramspace::LabelList labels_of(const std::vector<int>& rotations) {
  paramspace::LabelList out;
  for (int r : rotations) out.emplace_back(std::int64_t{r});
  return out;
}

}  // namespace

SpatialParams params_from_config(const paramspace::ParamConfig& c) {
  using paramspace::get_bool;
  using paramspace::get_int;
  using paramspace::get_list;
  SpatialParams p;
  p.width = get_int(c, "width");
  p.wrap_around = get_bool(c, "wrap_around");
  p.board_moves = get_bool(c, "board_moves");
  p.board_allowed_moves = moves_from(get_list(c, "board_allowed_moves"));
  p.board_rotates = get_bool(c, "board_rotates");
  p.board_allowed_rotations = rotations_from(get_list(c, "board_allowed_rotations"));
  p.particle_moves = get_bool(c, "particle_moves");
  p.particle_allowed_moves = moves_from(get_list(c, "particle_allowed_moves"));
  p.particle_rotates = get_bool(c, "particle_rotates");
  p.particle_allowed_rotations = rotations_from(get_list(c, "particle_allowed_rotations"));
  p.board_rotation_actions = get_int(c, "number_of_board_rotation_actions");
  p.particle_rotation_actions = get_int(c, "number_of_particle_rotation_actions");
  p.board_movement_actions = get_int(c, "number_of_board_movement_actions");
  p.particle_movement_actions = get_int(c, "number_of_particle_movement_actions");
  return p;
}

paramspace::ParamConfig params_to_config(const SpatialParams& p) {
  return {
      {"width", p.width},
      {"wrap_around", p.wrap_around},
      {"board_moves", p.board_moves},
      {"board_allowed_moves", labels_of(p.board_allowed_moves)},
      {"board_rotates", p.board_rotates},
      {"board_allowed_rotations", labels_of(p.board_allowed_rotations)},
      {"particle_moves", p.particle_moves},
      {"particle_allowed_moves", labels_of(p.particle_allowed_moves)},
      {"particle_rotates", p.particle_rotates},
      {"particle_allowed_rotations", labels_of(p.particle_allowed_rotations)},
      {"number_of_board_rotation_actions", p.board_rotation_actions},
      {"number_of_particle_rotation_actions", p.particle_rotation_actions},
      {"number_of_board_movement_actions", p.board_movement_actions},
      {"number_of_particle_movement_actions", p.particle_movement_actions},
  };
}

// Problems ---------------------------------------------------------------------

std::string_view to_string(QueryType type) {
  switch (type) {
    case QueryType::kAbsoluteLocation: return "absolute-location";
    case QueryType::kTileNumber: return "tile-number";
    case QueryType::kOrientation: return "orientation";
    case QueryType::kRelativeLocation: return "relative-location";
  }
  return "?";
}

std::optional<QueryType> parse_query_type(std::string_view name) {
  for (auto t : {QueryType::kAbsoluteLocation, QueryType::kTileNumber, QueryType::kOrientation,
                 QueryType::kRelativeLocation}) {
    if (to_string(t) == name) return t;
  }
  return std::nullopt;
}

std::string_view to_string(ValueKind kind) {
  switch (kind) {
    case ValueKind::kFloat: return "float";
    case ValueKind::kInteger: return "integer";
    case ValueKind::kOrientation: return "orientation";
  }
  return "?";
}

std::vector<SchemaField> answer_schema(const Query& q) {
  const auto prefix = entity_prefix(q.subject);
  const auto name = entity_name(q.subject);
  switch (q.type) {
    case QueryType::kAbsoluteLocation:
      return {{prefix + "_x", ValueKind::kFloat,
               fmt::format("The x-coordinate of {} after all the actions.", name)},
              {prefix + "_y", ValueKind::kFloat,
               fmt::format("The y-coordinate of {} after all the actions.", name)}};
    case QueryType::kTileNumber:
      return {{prefix + "_tile", ValueKind::kInteger,
               fmt::format("The number of the tile {} is on after all the actions.", name)}};
    case QueryType::kOrientation:
      return {{prefix + "_orientation", ValueKind::kOrientation,
               fmt::format("The orientation of {} after all the actions, one of NORTH, EAST, "
                           "SOUTH, WEST.",
                           name)}};
    case QueryType::kRelativeLocation: {
      const auto ref = entity_name(q.reference);
      const auto key = fmt::format("{}_relative_to_{}", prefix, entity_prefix(q.reference));
      return {{key + "_x", ValueKind::kFloat,
               fmt::format("The x-coordinate of {} minus the x-coordinate of {} after all the "
                           "actions.",
                           name, ref)},
              {key + "_y", ValueKind::kFloat,
               fmt::format("The y-coordinate of {} minus the y-coordinate of {} after all the "
                           "actions.",
                           name, ref)}};
    }
  }
  return {};
}

SpatialProblem generate_problem(const SpatialParams& params, std::uint64_t seed) {
  if (params.width < 2) throw InvalidArgument("board width must be at least 2");
  Rng rng(seed);
  SpatialProblem problem;
  problem.params = params;
  problem.initial.board = BoardState{params.width, {0.0, 0.0}, Orientation::kNorth,
                                     params.wrap_around};

  const auto tiles = static_cast<std::size_t>(params.width * params.width);
  const std::size_t first = rng.index(tiles);
  std::size_t second = rng.index(tiles - 1);
  if (second >= first) ++second;
  for (const auto& [id, tile] : {std::pair{"P1", first}, std::pair{"P2", second}}) {
    const auto col = static_cast<std::int64_t>(tile) % params.width;
    const auto row = static_cast<std::int64_t>(tile) / params.width;
    problem.initial.particles.push_back(
        {id, centroid(problem.initial.board, col, row), pick(rng, kOrientations)});
  }

  const std::array<std::string, 2> particle_ids = {"P1", "P2"};
  auto require = [](bool nonempty, const char* what) {
    if (!nonempty) throw InvalidArgument(std::string("actions requested with an empty ") + what);
  };
  auto& actions = problem.actions;
  for (std::int64_t i = 0; i < params.board_rotation_actions; ++i) {
    require(!params.board_allowed_rotations.empty(), "board_allowed_rotations");
    actions.push_back({ActionKind::kBoardRotate, std::string(kBoardId),
                       pick(rng, params.board_allowed_rotations), Move::kForward});
  }
  for (std::int64_t i = 0; i < params.particle_rotation_actions; ++i) {
    require(!params.particle_allowed_rotations.empty(), "particle_allowed_rotations");
    const auto rot = pick(rng, params.particle_allowed_rotations);
    actions.push_back({ActionKind::kParticleRotate, pick(rng, particle_ids), rot, Move::kForward});
  }
  for (std::int64_t i = 0; i < params.board_movement_actions; ++i) {
    require(!params.board_allowed_moves.empty(), "board_allowed_moves");
    actions.push_back({ActionKind::kBoardMove, std::string(kBoardId), 0,
                       pick(rng, params.board_allowed_moves)});
  }
  for (std::int64_t i = 0; i < params.particle_movement_actions; ++i) {
    require(!params.particle_allowed_moves.empty(), "particle_allowed_moves");
    const auto move = pick(rng, params.particle_allowed_moves);
    actions.push_back({ActionKind::kParticleMove, pick(rng, particle_ids), 0, move});
  }
  rng.shuffle(std::span<SpatialAction>(actions));

  const std::array<std::string, 3> entities = {std::string(kBoardId), "P1", "P2"};
  Query& q = problem.query;
  q.type = pick(rng, std::array{QueryType::kAbsoluteLocation, QueryType::kTileNumber,
                                QueryType::kOrientation, QueryType::kRelativeLocation});
  switch (q.type) {
    case QueryType::kAbsoluteLocation:
      q.subject = pick(rng, entities);
      break;
    case QueryType::kTileNumber:
    case QueryType::kOrientation:
      q.subject = pick(rng, particle_ids);
      break;
    case QueryType::kRelativeLocation: {
      const std::size_t s = rng.index(3);
      std::size_t r = rng.index(2);
      if (r >= s) ++r;
      q.subject = entities[s];
      q.reference = entities[r];
      break;
    }
  }
  problem.schema = answer_schema(q);
  problem.ground_truth = compute_ground_truth(problem);
  problem.rendered_prompt = render_prompt(problem);
  return problem;
}

State final_state(const SpatialProblem& problem) {
  State s = problem.initial;
  for (const auto& a : problem.actions) s = apply_action(s, a);
  return s;
}

nlohmann::json compute_ground_truth(const SpatialProblem& problem) {
  const State s = final_state(problem);
  const auto& q = problem.query;
  const auto schema = answer_schema(q);
  nlohmann::json out = nlohmann::json::object();
  switch (q.type) {
    case QueryType::kAbsoluteLocation: {
      const Vec2 p = location_of(s, q.subject);
      out[schema[0].key] = p.x;
      out[schema[1].key] = p.y;
      break;
    }
    case QueryType::kTileNumber:
      out[schema[0].key] = tile_of(s.board, s.particle(q.subject).position);
      break;
    case QueryType::kOrientation:
      out[schema[0].key] = std::string(to_string(s.particle(q.subject).orientation));
      break;
    case QueryType::kRelativeLocation: {
      const Vec2 a = location_of(s, q.subject);
      const Vec2 b = location_of(s, q.reference);
      out[schema[0].key] = a.x - b.x;
      out[schema[1].key] = a.y - b.y;
      break;
    }
  }
  return out;
}

bool verify_answer(const SpatialProblem& problem, std::string_view response_text) {
  const auto answer = extract_last_json_object(response_text);
  if (!answer) return false;
  for (const auto& field : problem.schema) {
    const auto it = answer->find(field.key);
    if (it == answer->end()) return false;
    const auto& truth = problem.ground_truth.at(field.key);
    switch (field.kind) {
      case ValueKind::kFloat:
        if (!it->is_number()) return false;
        if (std::fabs(it->get<double>() - truth.get<double>()) > 1e-6) return false;
        break;
      case ValueKind::kInteger: {
        if (it->is_number_integer()) {
          if (it->get<std::int64_t>() != truth.get<std::int64_t>()) return false;
        } else if (it->is_number_float()) {
          if (it->get<double>() != static_cast<double>(truth.get<std::int64_t>())) return false;
        } else {
          return false;
        }
        break;
      }
      case ValueKind::kOrientation: {
        if (!it->is_string()) return false;
        const auto o = parse_orientation(it->get<std::string>());
        if (!o || to_string(*o) != truth.get<std::string>()) return false;
        break;
      }
    }
  }
  return true;
}

// JSON -------------------------------------------------------------------------

namespace {

nlohmann::json vec_json(Vec2 v) { return nlohmann::json::array({v.x, v.y}); }

Vec2 vec_from(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2) throw InvalidArgument("expected [x, y]: " + j.dump());
  return {j.at(0).get<double>(), j.at(1).get<double>()};
}

Orientation orientation_from(const nlohmann::json& j) {
  const auto o = parse_orientation(j.get<std::string>());
  if (!o) throw InvalidArgument("unknown orientation " + j.dump());
  return *o;
}

}  // namespace

nlohmann::json state_to_json(const State& s) {
  nlohmann::json particles = nlohmann::json::array();
  for (const auto& p : s.particles) {
    particles.push_back({{"id", p.id},
                         {"position", vec_json(p.position)},
                         {"orientation", std::string(to_string(p.orientation))}});
  }
  return {{"board",
           {{"width", s.board.width},
            {"center", vec_json(s.board.center)},
            {"orientation", std::string(to_string(s.board.orientation))},
            {"wrap_around", s.board.wrap_around}}},
          {"particles", std::move(particles)}};
}

State state_from_json(const nlohmann::json& j) {
  State s;
  const auto& b = j.at("board");
  s.board.width = b.at("width").get<std::int64_t>();
  s.board.center = vec_from(b.at("center"));
  s.board.orientation = orientation_from(b.at("orientation"));
  s.board.wrap_around = b.at("wrap_around").get<bool>();
  for (const auto& p : j.at("particles")) {
    s.particles.push_back({p.at("id").get<std::string>(), vec_from(p.at("position")),
                           orientation_from(p.at("orientation"))});
  }
  return s;
}

nlohmann::json action_to_json(const SpatialAction& a) {
  nlohmann::json j = {{"kind", std::string(to_string(a.kind))}, {"subject", a.subject}};
  if (a.kind == ActionKind::kBoardRotate || a.kind == ActionKind::kParticleRotate) {
    j["amount"] = a.rotation;
  } else {
    j["amount"] = std::string(to_string(a.move));
  }
  return j;
}

SpatialAction action_from_json(const nlohmann::json& j) {
  SpatialAction a;
  const auto kind = parse_action_kind(j.at("kind").get<std::string>());
  if (!kind) throw InvalidArgument("unknown action kind " + j.at("kind").dump());
  a.kind = *kind;
  a.subject = j.at("subject").get<std::string>();
  if (a.kind == ActionKind::kBoardRotate || a.kind == ActionKind::kParticleRotate) {
    a.rotation = j.at("amount").get<int>();
  } else {
    const auto m = parse_move(j.at("amount").get<std::string>());
    if (!m) throw InvalidArgument("unknown move " + j.at("amount").dump());
    a.move = *m;
  }
  return a;
}

nlohmann::json problem_to_json(const SpatialProblem& problem) {
  nlohmann::json actions = nlohmann::json::array();
  for (const auto& a : problem.actions) actions.push_back(action_to_json(a));
  nlohmann::json query = {{"type", std::string(to_string(problem.query.type))},
                          {"subject", problem.query.subject}};
  if (problem.query.type == QueryType::kRelativeLocation) {
    query["reference"] = problem.query.reference;
  }
  nlohmann::json schema = nlohmann::json::object();
  for (const auto& f : problem.schema) schema[f.key] = std::string(to_string(f.kind));
  return {{"params", paramspace::config_to_json(params_to_config(problem.params))},
          {"initial_state", state_to_json(problem.initial)},
          {"actions", std::move(actions)},
          {"query", std::move(query)},
          {"answer_schema", std::move(schema)},
          {"ground_truth", problem.ground_truth},
          {"prompt", problem.rendered_prompt}};
}

SpatialProblem problem_from_json(const nlohmann::json& j) {
  try {
    SpatialProblem p;
    const auto parsed = paramspace::config_from_json(parameter_spec(), j.at("params"));
    if (!parsed.issues.empty()) throw InvalidArgument(paramspace::describe(parsed.issues.front()));
    p.params = params_from_config(parsed.config);
    p.initial = state_from_json(j.at("initial_state"));
    for (const auto& a : j.at("actions")) p.actions.push_back(action_from_json(a));
    const auto& q = j.at("query");
    const auto type = parse_query_type(q.at("type").get<std::string>());
    if (!type) throw InvalidArgument("unknown query type " + q.at("type").dump());
    p.query = {*type, q.at("subject").get<std::string>(), q.value("reference", std::string{})};
    p.schema = answer_schema(p.query);
    p.ground_truth = compute_ground_truth(p);
    p.rendered_prompt = j.contains("prompt") ? j.at("prompt").get<std::string>() : render_prompt(p);
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed spatial problem: ") + e.what());
  }
}

std::string format_real(double v) {
  if (v == 0.0) v = 0.0;  // drop negative zero
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, res.ptr);
  if (std::isfinite(v) && s.find_first_of(".eE") == std::string::npos) s += ".0";
  return s;
}

}  // namespace difftune::spatial
