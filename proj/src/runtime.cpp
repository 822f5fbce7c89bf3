#include "hwau/runtime.hpp"

#include <cstdlib>
#include <thread>

namespace hwau::runtime {

namespace {
int g_threads = -1;  // -1 = not yet resolved
}

int threads() {
    if (g_threads > 0) return g_threads;
    if (const char* env = std::getenv("HWAU_NUM_THREADS")) {
        int n = std::atoi(env);
        if (n > 0) {
            g_threads = n;
            return g_threads;
        }
    }
    unsigned hw = std::thread::hardware_concurrency();
    g_threads = hw > 0 ? int(hw) : 1;
    return g_threads;
}

void set_threads(int n) { g_threads = n > 0 ? n : -1; }

}  // namespace hwau::runtime
