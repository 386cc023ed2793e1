#pragma once

#include <cstddef>
#include <functional>

namespace invtrans {

// Worker count resolution: an explicit request wins, then the
// INVTRANS_WORKERS environment variable, then hardware concurrency.
int resolve_workers(int requested);

// Runs fn(i, worker_id) for every i in [0, n). Work items are handed out
// dynamically, so callers must write results into preallocated slots indexed
// by i; outputs then do not depend on scheduling. The first exception thrown
// by any item is rethrown after all workers finish.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace invtrans
