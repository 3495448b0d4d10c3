#include "gpfq/parallel.hpp"

#include <atomic>

namespace gpfq::parallel {
namespace {
std::atomic<unsigned> g_threads{1};
}

unsigned thread_count() noexcept { return g_threads.load(); }
void set_thread_count(unsigned n) noexcept { g_threads.store(n == 0 ? 1 : n); }

}  // namespace gpfq::parallel
