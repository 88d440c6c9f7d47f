#pragma once

#include <cstddef>
#include <functional>

namespace hemocnn {

// Worker count: HEMOCNN_THREADS when set (values < 1 ignored), otherwise
// hardware concurrency.
std::size_t worker_count();

// Runs fn(begin, end) over disjoint chunks of [0, n). Results must not depend
// on the chunking: callers only parallelize loops whose iterations are
// independent, so output is bitwise identical for any worker count.
void parallel_for(std::size_t n, std::size_t min_per_worker,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace hemocnn
