#include "ggdr/log.hpp"

#include <spdlog/spdlog.h>

#include <stdexcept>

namespace ggdr::log {

void debug(const std::string& message) { spdlog::debug(message); }
void info(const std::string& message) { spdlog::info(message); }
void warn(const std::string& message) { spdlog::warn(message); }

void set_level(const std::string& level) {
  const auto parsed = spdlog::level::from_str(level);
  if (parsed == spdlog::level::off && level != "off") {
    throw std::invalid_argument("unknown log level '" + level + "'");
  }
  spdlog::set_level(parsed);
}

}  // namespace ggdr::log
