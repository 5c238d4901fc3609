#pragma once

#include <complex>
#include <fftw3.h>
#include <map>
#include <mutex>
#include <span>
#include <stdexcept>
#include <tuple>
#include <vector>

namespace conescat::fft {

using cplx = std::complex<double>;

enum class Sign : int { Forward = FFTW_FORWARD, Backward = FFTW_BACKWARD };

namespace detail {

// FFTW planning is not thread-safe; execution with new-array calls is.
// Plans are made in place with FFTW_ESTIMATE so results do not depend on timing.
class PlanCache {
public:
    static PlanCache& instance()
    {
        static PlanCache cache;
        return cache;
    }

    fftw_plan get(int dim, int n, Sign sign)
    {
        std::lock_guard lock(mu_);
        const auto key = std::make_tuple(dim, n, static_cast<int>(sign));
        if (auto it = plans_.find(key); it != plans_.end()) return it->second;
        std::size_t total = 1;
        int dims[3];
        for (int a = 0; a < dim; ++a) {
            dims[a] = n;
            total *= static_cast<std::size_t>(n);
        }
        std::vector<cplx> scratch(total);
        auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
        fftw_plan p = fftw_plan_dft(dim, dims, buf, buf, static_cast<int>(sign), FFTW_ESTIMATE | FFTW_UNALIGNED);
        if (!p) throw std::runtime_error("fft: planning failed");
        plans_.emplace(key, p);
        return p;
    }

    PlanCache(const PlanCache&) = delete;
    PlanCache& operator=(const PlanCache&) = delete;

    ~PlanCache()
    {
        for (auto& [k, p] : plans_) fftw_destroy_plan(p);
    }

private:
    PlanCache() = default;
    std::mutex mu_;
    std::map<std::tuple<int, int, int>, fftw_plan> plans_;
};

} // namespace detail

// Unnormalized in-place DFT over a dim-dimensional cube of side n (row-major).
inline void transform(std::span<cplx> data, int dim, int n, Sign sign)
{
    std::size_t total = 1;
    for (int a = 0; a < dim; ++a) total *= static_cast<std::size_t>(n);
    if (data.size() != total) throw std::invalid_argument("fft: buffer size does not match n^dim");
    fftw_plan p = detail::PlanCache::instance().get(dim, n, sign);
    auto* buf = reinterpret_cast<fftw_complex*>(data.data());
    fftw_execute_dft(p, buf, buf);
}

inline const char* backend_version() { return fftw_version; }

} // namespace conescat::fft
