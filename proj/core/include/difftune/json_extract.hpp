#pragma once

#include <optional>
#include <string_view>

#include <nlohmann/json.hpp>

namespace difftune {

/// The last top-level `{...}` span in free text that parses as a JSON object.
/// Handles prose around the object and fenced code blocks.
std::optional<nlohmann::json> extract_last_json_object(std::string_view text);

}  // namespace difftune
