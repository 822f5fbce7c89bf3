#pragma once

namespace hwau::runtime {

// Worker thread count for op-internal parallel loops. 0 = hardware default.
// Resolution order: explicit set_threads() > HWAU_NUM_THREADS env > hardware.
// Parallel loops assign each output element to exactly one thread, so results
// are bitwise identical for any thread count.
int threads();
void set_threads(int n);

}  // namespace hwau::runtime
