#include "difftune/templates.hpp"

#include <fstream>
#include <sstream>

#include "difftune/embedded_templates.hpp"
#include "difftune/errors.hpp"

namespace difftune::templates {

std::string_view builtin(std::string_view name) {
  if (name == "arithmetic_designer") return embedded::arithmetic_designer;
  if (name == "spatial_designer") return embedded::spatial_designer;
  if (name == "arithmetic_question") return embedded::arithmetic_question;
  throw InvalidArgument("unknown built-in template '" + std::string(name) + "'");
}

std::string load(std::string_view name_or_path) {
  if (name_or_path == "arithmetic_designer" || name_or_path == "spatial_designer" ||
      name_or_path == "arithmetic_question") {
    return std::string(builtin(name_or_path));
  }
  std::ifstream in{std::string(name_or_path), std::ios::binary};
  if (!in) throw InvalidArgument("cannot read template '" + std::string(name_or_path) + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string render(std::string_view text, const Values& values) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '{') {
      const auto close = text.find('}', i + 1);
      if (close != std::string_view::npos) {
        const auto key = text.substr(i + 1, close - i - 1);
        if (const auto it = values.find(key); it != values.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out += text[i++];
  }
  return out;
}

bool has_placeholder(std::string_view text, std::string_view key) {
  return text.find("{" + std::string(key) + "}") != std::string_view::npos;
}

}  // namespace difftune::templates
