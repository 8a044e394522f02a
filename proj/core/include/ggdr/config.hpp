#pragma once

#include <filesystem>
#include <istream>
#include <map>
#include <string>

namespace ggdr {

/// Flat `key = value` text. `#` starts a comment; blank lines are ignored.
using KeyValues = std::map<std::string, std::string>;

/// Throws ConfigError (with the line number) on malformed or duplicate keys.
KeyValues parse_key_values(std::istream& in);
KeyValues read_key_values(const std::filesystem::path& path);

bool parse_bool(const std::string& key, const std::string& value);
double parse_double(const std::string& key, const std::string& value);
long long parse_int(const std::string& key, const std::string& value);
unsigned long long parse_uint(const std::string& key, const std::string& value);

}  // namespace ggdr
