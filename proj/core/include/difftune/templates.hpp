#pragma once

#include <functional>
#include <map>
#include <string>
#include <string_view>

namespace difftune::templates {

using Values = std::map<std::string, std::string, std::less<>>;

/// Built-in template text by name ("arithmetic_designer", "spatial_designer",
/// "arithmetic_question"). Throws InvalidArgument for other names.
std::string_view builtin(std::string_view name);

/// A built-in name, or else a path to a UTF-8 text file.
std::string load(std::string_view name_or_path);

/// Replaces every {key} whose key is in `values`. Other brace groups (JSON
/// examples inside prompts) are left untouched.
std::string render(std::string_view text, const Values& values);

bool has_placeholder(std::string_view text, std::string_view key);

}  // namespace difftune::templates
