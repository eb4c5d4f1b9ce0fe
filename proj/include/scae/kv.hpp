#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace scae {

// `key=value` text: one pair per line, '#' starts a comment line, surrounding whitespace
// is trimmed. Duplicate keys are rejected.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(std::string_view text);
// Sorted keys, LF line endings, trailing newline.
std::string format_key_values(const KeyValues& kv);

std::vector<std::string> split(std::string_view text, char sep);
std::string_view trim(std::string_view text);

long parse_int(std::string_view text, std::string_view key);
double parse_double(std::string_view text, std::string_view key);
bool parse_bool(std::string_view text, std::string_view key);

// Shortest round-trippable decimal rendering of a double.
std::string format_double(double v);

}  // namespace scae
