#pragma once

#include <cstddef>
#include <functional>

namespace stylevec {

/// Worker count used by per-key loops. Results never depend on it: every
/// task writes only its own output slot.
void set_thread_count(unsigned n) noexcept;
unsigned thread_count() noexcept;

/// Runs fn(i) for i in [0, n). The first exception thrown (lowest index) is
/// rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

} // namespace stylevec
