#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

namespace glyco {

/// Worker cap from GLYCO_THREADS (default 1).
int thread_count();

/// Runs fn(i) for i in [0, n) on up to thread_count() threads. Work is split
/// into contiguous blocks; callers write results by index so the outcome does
/// not depend on the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

/// Stateless seed derivation (splitmix64 finalizer over base ^ stream).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace glyco
