#include "fedpsi/parallel.hpp"

#include <atomic>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fedpsi {

namespace {
std::atomic<ExecMode> g_mode{ExecMode::OpenMp};
}

ExecMode execution_mode() { return g_mode.load(std::memory_order_relaxed); }

void set_execution_mode(ExecMode mode) { g_mode.store(mode, std::memory_order_relaxed); }

int backend_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

namespace detail {

void run_parallel(std::size_t n, void (*invoke)(void*, std::size_t), void* ctx) {
#ifdef _OPENMP
    if (execution_mode() == ExecMode::OpenMp && n > 1 && !omp_in_parallel()) {
        #pragma omp parallel for schedule(dynamic)
        for (long long i = 0; i < static_cast<long long>(n); ++i) {
            invoke(ctx, static_cast<std::size_t>(i));
        }
        return;
    }
#endif
    for (std::size_t i = 0; i < n; ++i) invoke(ctx, i);
}

} // namespace detail
} // namespace fedpsi
