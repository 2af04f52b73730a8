// Locale-independent double formatting with shortest round-trip output.

#pragma once

#include <string>
#include <string_view>

namespace daywatch {

// Shortest representation that parses back to the same bits; infinities
// come out as "inf"/"-inf".
std::string format_double(double value);

// Strict parse of a full string (accepts "inf"/"-inf"/"nan" spellings).
// Throws std::invalid_argument on trailing garbage or empty input.
double parse_double(std::string_view text);

}  // namespace daywatch
