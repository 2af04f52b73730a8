#include "daywatch/numformat.hpp"

#include <charconv>
#include <cstdlib>
#include <stdexcept>

namespace daywatch {

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) throw std::runtime_error("double formatting failed");
  return std::string(buf, ptr);
}

double parse_double(std::string_view text) {
  if (text.empty()) throw std::invalid_argument("empty number");
  std::string owned(text);  // strtod needs a terminator
  const char* begin = owned.c_str();
  char* end = nullptr;
  double value = std::strtod(begin, &end);
  if (end != begin + owned.size()) {
    throw std::invalid_argument("not a number: \"" + owned + "\"");
  }
  return value;
}

}  // namespace daywatch
