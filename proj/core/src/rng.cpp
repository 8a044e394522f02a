#include "ggdr/rng.hpp"

#include <sstream>

#include "ggdr/errors.hpp"

namespace ggdr {

std::string serialize_engine(const std::mt19937_64& eng) {
  std::ostringstream os;
  os << eng;
  return os.str();
}

void deserialize_engine(std::mt19937_64& eng, const std::string& text) {
  std::istringstream is(text);
  is >> eng;
  if (is.fail()) throw CheckpointError("malformed random engine state");
}

}  // namespace ggdr
