#include <fmt/format.h>

#include "difftune/spatial.hpp"

namespace difftune::spatial {

namespace {

std::string moves_section(const std::vector<Move>& moves, std::string_view who,
                          std::string_view subject) {
  std::string out = "## Allowed moves\n\n";
  if (moves.empty()) {
    return out + fmt::format("No moves are allowed for {}.\n\n", subject);
  }
  out += fmt::format("The following moves are allowed for {}:\n", subject);
  for (auto m : moves) {
    switch (m) {
      case Move::kForward:
        out += fmt::format("FORWARD - {} moves forward 1 unit.\n", who);
        break;
      case Move::kBackward:
        out += fmt::format("BACKWARD - {} moves backwards 1 unit. Orientation remains the same.\n",
                           who);
        break;
      case Move::kLeft:
        out += fmt::format("LEFT - {} sidesteps 1 unit to the left. Orientation remains the same.\n",
                           who);
        break;
      case Move::kRight:
        out += fmt::format(
            "RIGHT - {} sidesteps 1 unit to the right. Orientation remains the same.\n", who);
        break;
    }
  }
  return out + "\n";
}

std::string rotations_section(const std::vector<int>& rotations, std::string_view who,
                              std::string_view subject) {
  std::string out = "## Allowed rotations\n\n";
  if (rotations.empty()) {
    return out + fmt::format("No rotations are allowed for {}.\n\n", subject);
  }
  out += fmt::format("The following rotations are allowed for {}:\n", subject);
  for (int r : rotations) out += fmt::format("{} - {} rotates {} degrees.\n", r, who, r);
  return out + "\n";
}

std::string point(Vec2 p) { return fmt::format("({}, {})", format_real(p.x), format_real(p.y)); }

std::string action_text(const SpatialAction& a) {
  switch (a.kind) {
    case ActionKind::kBoardRotate:
      return fmt::format("board {} is rotated by {} degrees", a.subject, a.rotation);
    case ActionKind::kParticleRotate:
      return fmt::format("particle {} is rotated by {} degrees", a.subject, a.rotation);
    case ActionKind::kBoardMove:
      return fmt::format("move board {} {} by 1 units", a.subject, to_string(a.move));
    case ActionKind::kParticleMove:
      return fmt::format("move particle {} {} by 1 units", a.subject, to_string(a.move));
  }
  return {};
}

std::string entity_phrase(std::string_view id) {
  return fmt::format("{} {}", id == kBoardId ? "board" : "particle", id);
}

std::string question_text(const Query& q) {
  switch (q.type) {
    case QueryType::kAbsoluteLocation:
      return fmt::format("What is the location of {} after all the actions?",
                         entity_phrase(q.subject));
    case QueryType::kTileNumber:
      return fmt::format("What is the number of the tile {} is on after all the actions?",
                         entity_phrase(q.subject));
    case QueryType::kOrientation:
      return fmt::format("What is the orientation of {} after all the actions?",
                         entity_phrase(q.subject));
    case QueryType::kRelativeLocation:
      return fmt::format(
          "What is the location of {} relative to {} after all the actions? Give the "
          "displacement in the x and y directions of the (x, y) co-ordinate system.",
          entity_phrase(q.subject), entity_phrase(q.reference));
  }
  return {};
}

std::string_view type_name(ValueKind kind) {
  switch (kind) {
    case ValueKind::kFloat: return "Float";
    case ValueKind::kInteger: return "Integer";
    case ValueKind::kOrientation: return "String";
  }
  return "?";
}

constexpr std::string_view kSetup = R"(Following is the description of the spatial reasoning environment. Go through it carefully and then answer the question in the requested format.

# Environment

## Setup

All locations are pairs of real numbers (x, y).
North corresponds to increasing y, and South corresponds to decreasing y. East corresponds to increasing x, and West corresponds to decreasing x. Orientation is a direction, and can be one of the following: North, East, South, or West. Orientation is also measured in degrees, and can be one of the following: 0, 90, 180, 270.
Where 0 means East, 90 means North, 180 means West, and 270 means South.

A board's rotation is defined as the rotation of the board around its center.
When a board rotates, the orientation of the board changes, and the tiles and particles on the board also rotate along with it.
A particle's rotation changes the orientation of the particle, but does not change the location of the particle.
As a general rule, any entity's rotation can change the orientation of the entity, but does not change the location of the entity.

A board's location is defined as the location of its center.
A board's movement changes the location of the board, and the tiles and particles on the board also move along with it.
For example, if a board moves forward 1 unit, the center of the board and the tiles and particles on the board all move 1 unit along the orientation of the board.
A particle's movement changes the location of the particle
For example, if a particle moves forward 1 unit, the location of the particle changes by 1 unit along the orientation of the particle.

If the movement of particles results in the particle moving beyond the boundary of the board, then the particle will either wrap around the boundary of the board or remain at the current tile. It depends on the board's wrap around settings, which are described in the description of the board.
As a general rule, any entity's movement can change the location of the entity, but does not change the orientation of the entity.
The orientation of an entity can be thought of as the direction in which the entity is facing. This determines the meaning of forward, backward, left, right, etc., for the entity.

## Entities

The environment contains the following entities:

)";

constexpr std::string_view kSides = R"(The board has four sides: SIDE-1, SIDE-2, SIDE-3, SIDE-4
The side from the south west corner to south east corner is the bottom side of the board. It is called SIDE-1
The side from the south east corner to north east corner is the right side of the board. It is called SIDE-2
The side from the north east corner to north west corner is the top side of the board. It is called SIDE-3
The side from the north west corner to south west corner is the left side of the board. It is called SIDE-4

)";

constexpr std::string_view kWrap = R"(When a particle is on a tile, it means its location is the tile's centroid.
The SIDE-1 of the board can be crossed when approaching from the SIDE-3, and the particle(s) will move to the opposite tile on the SIDE-3.
The SIDE-2 of the board can be crossed when approaching from the SIDE-4, and the particle(s) will move to the opposite tile on the SIDE-4.
The SIDE-3 of the board can be crossed when approaching from the SIDE-1, and the particle(s) will move to the opposite tile on the SIDE-1.
The SIDE-4 of the board can be crossed when approaching from the SIDE-2, and the particle(s) will move to the opposite tile on the SIDE-2.

)";

constexpr std::string_view kNoWrap = R"(When a particle is on a tile, it means its location is the tile's centroid.
None of the sides SIDE-1, SIDE-2, SIDE-3, SIDE-4 can be crossed. A particle whose move would take it beyond a side remains at its current tile.

)";

}  // namespace

std::string render_prompt(const SpatialProblem& problem) {
  const auto& board = problem.initial.board;
  const auto& params = problem.params;
  const std::string width = format_real(static_cast<double>(board.width));
  std::string out(kSetup);

  out += fmt::format("# Board {}\n\n## Setup\n", kBoardId);
  out += fmt::format("A board is {} units wide and {} units tall, and contains {} particle(s).\n",
                     width, width, problem.initial.particles.size());
  out += fmt::format("It is centered at {}.\n", point(board.center));
  out += fmt::format("Its orientation is defined as the center's orientation, which is {}.\n\n",
                     to_string(board.orientation));
  out += fmt::format("Initially, the board is oriented {}.\n\n\n", to_string(board.orientation));
  out += kSides;
  out += "## Boundaries\n\n";
  out += "In the event the particle move results in the particle moving beyond the boundary of "
         "the board, the resulting location is decided as follows:\n\n";
  out += board.wrap_around ? kWrap : kNoWrap;

  out += "## Tiles on the board\n\n";
  out += "The board is divided into square tiles of size 1 units by 1 units.\n";
  out += "Tiles are numbered from 1 to (width * height), starting from the bottom left corner in "
         "a zigzag pattern. Going from left to right, then right to left, and so on.\n";
  out += "For example, for a 3x3 board, the tiles are numbered as follows:\n";
  for (const auto& row : tile_layout(3)) out += fmt::format("{}\n", fmt::join(row, " "));
  out += "\n";

  out += moves_section(params.board_moves ? params.board_allowed_moves : std::vector<Move>{},
                       "board", "the board");
  out += rotations_section(
      params.board_rotates ? params.board_allowed_rotations : std::vector<int>{}, "board",
      "the board");

  for (const auto& p : problem.initial.particles) {
    out += fmt::format("# Particle {}\n\n## Initial State\n\n", p.id);
    out += fmt::format("It is located at {}, and is facing {} ({} degrees).\n", point(p.position),
                       to_string(p.orientation), degrees_of(p.orientation));
    out += fmt::format("It is on tile {}.\n", tile_of(board, p.position));
    out += fmt::format("It is on board {}.\n\n", kBoardId);
    out += moves_section(
        params.particle_moves ? params.particle_allowed_moves : std::vector<Move>{}, "particle",
        "this particle");
    out += rotations_section(
        params.particle_rotates ? params.particle_allowed_rotations : std::vector<int>{},
        "particle", "this particle");
  }

  out += "# Actions\n\n";
  const auto& actions = problem.actions;
  if (actions.empty()) {
    out += "There are no actions.\n\n";
  } else {
    out += "The actions are the following:\n";
    for (std::size_t i = 0; i < actions.size(); ++i) {
      const char* lead = i == 0 ? "First" : (i + 1 == actions.size() ? "Finally" : "Then");
      if (i > 0) out += " ";
      out += fmt::format("{}, {}.", lead, action_text(actions[i]));
    }
    out += "\n\n";
  }

  out += "# Question\n\n";
  out += question_text(problem.query) + "\n\n";
  out += "# Response format - JSON schema\n";
  out += "You must get the final answer and convert it to the following JSON data structure. "
         "Follow the schema exactly.\n";
  for (const auto& f : problem.schema) {
    out += fmt::format("\nKey: `{}`\n\nType: {},\n\nDescription: {}\n", f.key, type_name(f.kind),
                       f.description);
  }
  return out;
}

}  // namespace difftune::spatial
