#include "s2rf/parallel.hpp"

#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "s2rf/common.hpp"

namespace s2rf {

int configure_threads() {
    if (const char* env = std::getenv("S2RF_THREADS"); env && *env) {
        int n = 0;
        try {
            n = std::stoi(env);
        } catch (const std::exception&) {
            throw ContractViolation(std::string("S2RF_THREADS is not an integer: ") + env);
        }
        require(n >= 1, "S2RF_THREADS must be at least 1");
#ifdef _OPENMP
        omp_set_num_threads(n);
#endif
    }
    return thread_count();
}

int thread_count() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

}  // namespace s2rf
