#pragma once

// Process-wide worker thread count. 1 means fully deterministic execution;
// modules with parallel sections consult this.

#include <algorithm>
#include <cstdlib>
#include <string>

namespace waveflow {

inline int& global_threads() {
  static int n = 1;
  return n;
}

// WAVEFLOW_THREADS env var, overridden by an explicit --threads flag.
inline int threads_from_env(int fallback = 1) {
  const char* env = std::getenv("WAVEFLOW_THREADS");
  if (!env) return fallback;
  int n = std::atoi(env);
  return std::max(1, n);
}

}  // namespace waveflow
