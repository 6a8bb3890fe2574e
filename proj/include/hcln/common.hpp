#pragma once

#include <cstdint>
#include <cstdlib>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace hcln {

using Index = std::ptrdiff_t;

// Error hierarchy. The CLI maps these onto exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A caller broke a documented precondition (shape mismatch, bad token id, ...).
struct ContractViolation : Error {
  using Error::Error;
};

// Requested expansion strategy cannot apply to this tensor; caller decides fallback.
struct StrategyInapplicable : Error {
  using Error::Error;
};

// Iterative solver hit its sweep cap; carries the best estimate so far.
struct ConvergenceError : Error {
  std::vector<double> best_estimate;
  ConvergenceError(const std::string& msg, std::vector<double> best)
      : Error(msg), best_estimate(std::move(best)) {}
};

struct IoError : Error {
  using Error::Error;
};

// Checkpoint file problems, each its own class so callers can distinguish.
struct FormatError : Error {
  using Error::Error;
};
struct TruncationError : Error {
  using Error::Error;
};
struct ShapeError : Error {
  using Error::Error;
};

// Training loss went non-finite; carries the last checkpoint path if any.
struct DivergenceError : Error {
  std::string last_checkpoint;
  DivergenceError(const std::string& msg, std::string ckpt)
      : Error(msg), last_checkpoint(std::move(ckpt)) {}
};

#define HCLN_CHECK(cond, msg)                      \
  do {                                             \
    if (!(cond)) {                                 \
      std::ostringstream hcln_oss__;               \
      hcln_oss__ << msg;                           \
      throw ::hcln::ContractViolation(hcln_oss__.str()); \
    }                                              \
  } while (0)

// Kernel parallelism cap. HCLN_THREADS env overrides; parallelism is only
// ever across independent output rows, so results do not depend on it.
inline int max_threads() {
  static const int cached = [] {
    if (const char* env = std::getenv("HCLN_THREADS")) {
      int v = std::atoi(env);
      if (v >= 1) return v;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
  }();
  return cached;
}

// Runs fn(begin, end) over a partition of [0, n). Each index is handled by
// exactly one invocation, so outputs are independent of the thread count.
template <class Fn>
void parallel_for(Index n, Index grain, Fn&& fn) {
  int nt = max_threads();
  if (nt <= 1 || n < 2 * grain) {
    fn(Index{0}, n);
    return;
  }
  Index chunks = std::min<Index>(nt, (n + grain - 1) / grain);
  Index per = (n + chunks - 1) / chunks;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(chunks));
  for (Index c = 0; c < chunks; ++c) {
    Index lo = c * per;
    Index hi = std::min(n, lo + per);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] { fn(lo, hi); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace hcln
