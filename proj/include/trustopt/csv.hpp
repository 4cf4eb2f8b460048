#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace trustopt {

/// 17 significant digits, enough for an exact round trip of any double.
std::string format_double(double v);

/// Shortest decimal form that parses back to the same double.
std::string format_shortest(double v);

/// Strict parse of a full field; throws std::invalid_argument.
double parse_double(std::string_view field);
long parse_long(std::string_view field);

std::vector<std::string> split(std::string_view line, char sep);
std::string_view trim(std::string_view s);

}  // namespace trustopt
