#pragma once

#include <string>

namespace ggdr::log {

void debug(const std::string& message);
void info(const std::string& message);
void warn(const std::string& message);

/// Minimum level printed: "debug", "info", "warn" or "off".
void set_level(const std::string& level);

}  // namespace ggdr::log
