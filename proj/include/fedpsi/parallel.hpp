#pragma once

#include <cstddef>
#include <exception>
#include <memory>
#include <type_traits>
#include <vector>

namespace fedpsi {

// Execution backend for the data-parallel kernels (per-round client training,
// cluster-count sweeps, silhouette rows, harness cells). The serial mode is
// the reference implementation; both modes must produce bit-identical results
// because every loop body writes only to its own slot and all reductions run
// after the loop in index order.
enum class ExecMode { Serial, OpenMp };

ExecMode execution_mode();
void set_execution_mode(ExecMode mode);

// Threads the OpenMP backend would use (1 when compiled without OpenMP).
int backend_threads();

namespace detail {
void run_parallel(std::size_t n, void (*invoke)(void*, std::size_t), void* ctx);
}

// Runs body(i) for i in [0, n). Exceptions are captured per index and the
// lowest-index one is rethrown, so error reporting is deterministic too.
template <class F>
void parallel_for(std::size_t n, F&& body) {
    if (n == 0) return;
    using Body = std::remove_reference_t<F>;
    struct Ctx {
        Body* body;
        std::vector<std::exception_ptr> errors;
    } ctx{std::addressof(body), std::vector<std::exception_ptr>(n)};
    detail::run_parallel(
        n,
        [](void* raw, std::size_t i) {
            auto* c = static_cast<Ctx*>(raw);
            try {
                (*c->body)(i);
            } catch (...) {
                c->errors[i] = std::current_exception();
            }
        },
        &ctx);
    for (const auto& err : ctx.errors) {
        if (err) std::rethrow_exception(err);
    }
}

} // namespace fedpsi
