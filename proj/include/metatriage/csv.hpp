#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace metatriage::csv {

/// Splits one CSV line (RFC 4180 quoting, no embedded newlines).
/// Returns false on an unterminated quote.
bool split_line(std::string_view line, std::vector<std::string>& fields);

/// Quotes a field when it contains a comma, quote or newline.
std::string escape(std::string_view field);

/// Fixed-precision decimal rendering used by every CSV/Markdown writer.
std::string format_number(double value, int precision = 6);

}  // namespace metatriage::csv
