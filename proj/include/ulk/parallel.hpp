#pragma once

#include <cstdint>
#include <functional>

namespace ulk {

/// Worker count used by parallel_for. Defaults to ULK_THREADS when set, else 1.
int worker_count();

/// Overrides the worker count for the current process; values < 1 reset to the default.
void set_worker_count(int workers);

/// Runs body(i) for i in [0, n) over a static partition of the range.
/// Each index is handled by exactly one worker, so results do not depend on
/// the worker count as long as body(i) only writes state owned by i.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& body);

}  // namespace ulk
