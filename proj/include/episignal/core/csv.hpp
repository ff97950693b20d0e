#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace episignal::csv {

/// Splits one CSV record. Handles double-quoted fields with "" escapes; no embedded newlines.
std::vector<std::string> split_line(std::string_view line);

/// Quotes a field only when it contains a comma, quote, or leading/trailing space.
std::string escape(std::string_view field);

void write_row(std::ostream& os, const std::vector<std::string>& fields);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace episignal::csv
