#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace survivalkit::csv {

/// Splits one line on commas. No quoting: none of our schemas need it.
std::vector<std::string> split(std::string_view line);

/// Reads one line, stripping a trailing '\r'. Returns false at EOF.
bool read_line(std::istream& in, std::string& line);

/// Strict full-field parse; throws Error("bad number ...") otherwise.
double parse_double(std::string_view field);
long long parse_int(std::string_view field);

}  // namespace survivalkit::csv
