#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace decokan {

using Dim = std::int64_t;

/// Base class for all library errors.
struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Tensor rank/dimension mismatches (matmul shapes, patching, channel counts).
struct shape_error : error {
  using error::error;
};

/// Invalid numeric content (NaN/Inf rejected in checked mode, bad parameters).
struct value_error : error {
  using error::error;
};

/// API contract violations (non-scalar loss, index out of range, state misuse).
struct contract_error : error {
  using error::error;
};

/// Configuration problems (unknown keys, split oversubscription, mismatches).
struct config_error : error {
  using error::error;
};

/// File-level problems (unreadable CSV, corrupt or truncated checkpoint).
struct io_error : error {
  using error::error;
};

/// When enabled, every tensor op scans its output for NaN/Inf and throws
/// value_error on the first hit. On by default; training keeps it on.
void set_checked_mode(bool on);
bool checked_mode();

/// Worker threads for read-only parallel loops (evaluation, per-edge fits).
/// Capped by the DECOKAN_THREADS environment variable; never affects results:
/// callers write to disjoint slots and reduce in index order.
int worker_threads();

/// Runs fn(i) for i in [0, n). Parallel when worker_threads() > 1. fn must
/// only write to per-index state.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn);

}  // namespace decokan
