#pragma once

#include <cstddef>
#include <functional>

namespace metatriage {

/// Upper bound on worker threads used by parallel_for. Defaults to 1.
void set_max_threads(std::size_t n);
std::size_t max_threads();

/// Runs body(i) for i in [0, n). Each index is processed exactly once; callers
/// write results into slot i so the outcome never depends on scheduling.
/// The first exception thrown by a body is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace metatriage
