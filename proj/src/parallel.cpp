#include "survivalkit/parallel.hpp"

#include <cstdlib>
#include <string>

namespace survivalkit {

std::size_t default_thread_count() {
  if (const char* env = std::getenv("SURVIVALKIT_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (...) {
      // fall through to hardware concurrency
    }
  }
  const auto hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

}  // namespace survivalkit
