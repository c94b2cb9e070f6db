#include "difftune/json_extract.hpp"

namespace difftune {

namespace {

// End index (inclusive) of the brace group opening at `open`, honoring JSON
// string escapes; npos when unbalanced.
std::size_t matching_brace(std::string_view text, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = open; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i;
    }
  }
  return std::string_view::npos;
}

}  // namespace

std::optional<nlohmann::json> extract_last_json_object(std::string_view text) {
  std::optional<nlohmann::json> last;
  std::size_t i = text.find('{');
  while (i != std::string_view::npos) {
    const auto close = matching_brace(text, i);
    if (close != std::string_view::npos) {
      auto parsed = nlohmann::json::parse(text.substr(i, close - i + 1), nullptr, false);
      if (!parsed.is_discarded() && parsed.is_object()) {
        last = std::move(parsed);
        i = text.find('{', close + 1);
        continue;
      }
    }
    i = text.find('{', i + 1);
  }
  return last;
}

}  // namespace difftune
