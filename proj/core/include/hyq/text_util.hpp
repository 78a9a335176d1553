#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace hyq {

std::vector<std::string> split_csv_line(std::string_view line);
std::string quote_csv(std::string_view field);

// Shortest representation that parses back to the identical double.
std::string format_double(double v);
std::string format_float(float v);

double parse_double(std::string_view s);       // throws ParseError
float parse_float(std::string_view s);         // throws ParseError
std::uint64_t parse_u64(std::string_view s);   // throws ParseError
std::string_view trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

}  // namespace hyq
