#include "dueb/rng.hpp"

#include <sstream>
#include <stdexcept>

namespace dueb {

std::string save_rng(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

Rng load_rng(const std::string& state) {
  std::istringstream is(state);
  Rng rng;
  is >> rng;
  if (!is) throw std::runtime_error("load_rng: malformed engine state");
  return rng;
}

}  // namespace dueb
