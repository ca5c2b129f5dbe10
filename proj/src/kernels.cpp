#include "pxrl/kernels.hpp"

#include <atomic>

namespace pxrl::kernels {

namespace {
std::atomic<Backend> g_backend{
#ifdef _OPENMP
    Backend::kParallel
#else
    Backend::kSerial
#endif
};
}  // namespace

Backend backend() { return g_backend.load(std::memory_order_relaxed); }
void set_backend(Backend b) { g_backend.store(b, std::memory_order_relaxed); }

}  // namespace pxrl::kernels
