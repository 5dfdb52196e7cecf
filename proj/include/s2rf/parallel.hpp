#pragma once

namespace s2rf {

/// Applies S2RF_THREADS (if set) to the OpenMP runtime. Returns the thread count in effect.
int configure_threads();
int thread_count();

}  // namespace s2rf
