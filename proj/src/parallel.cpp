#include "nlhomog/parallel.hpp"

#include <atomic>

namespace nlhomog {

namespace {
std::atomic<unsigned> g_workers{0};
}

void set_worker_threads(unsigned count) { g_workers.store(count); }

unsigned worker_threads() {
    unsigned w = g_workers.load();
    if (w == 0) w = std::max(1u, std::thread::hardware_concurrency());
    return w;
}

} // namespace nlhomog
