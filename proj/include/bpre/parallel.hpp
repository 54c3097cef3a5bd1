#pragma once

#include <cstddef>
#include <functional>

namespace bpre {

/// Runs fn(0) .. fn(count - 1) on `workers` threads. Work items must be
/// independent; results are written by index, so output never depends on the
/// worker count. If any item throws, the exception of the lowest failing index
/// is rethrown after all workers stop.
void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace bpre
