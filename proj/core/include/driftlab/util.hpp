#pragma once

#include <functional>

namespace driftlab {

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Worker w owns the
/// contiguous index range [w*n/W, (w+1)*n/W) and runs it in order, so any
/// per-worker accumulation is reproducible for a fixed thread count.
void parallel_for(int n, int threads, const std::function<void(int index, int worker)>& fn);

/// Number of workers parallel_for will actually use.
int effective_workers(int n, int threads);

}  // namespace driftlab
