#pragma once

#include <string>
#include <string_view>

namespace dataprov {

// Shortest decimal text that parses back to the identical double.
// Infinities print as "inf" / "-inf", NaN as "nan".
std::string format_double(double value);

// Strict parse of a whole field; accepts the spellings format_double emits.
double parse_double(std::string_view text);

long long parse_integer(std::string_view text);

}  // namespace dataprov
