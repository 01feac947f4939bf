#pragma once

// Thin RAII layer over FFTW for real periodic convolutions in one or two dimensions.

#include <fftw3.h>

#include <algorithm>
#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "pnlt/error.hpp"

namespace pnlt::fft {

namespace detail {
inline std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

struct PlanDeleter {
    void operator()(fftw_plan_s* p) const {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(p);
    }
};
using Plan = std::unique_ptr<fftw_plan_s, PlanDeleter>;

template <class T>
struct FftwFree {
    void operator()(T* p) const { fftw_free(p); }
};
template <class T>
using Buffer = std::unique_ptr<T[], FftwFree<T>>;

template <class T>
Buffer<T> allocate(std::size_t n) {
    auto* p = static_cast<T*>(fftw_malloc(sizeof(T) * n));
    if (!p) throw Error("fftw_malloc failed");
    return Buffer<T>(p);
}
} // namespace detail

using Spectrum = std::vector<std::complex<double>>;

/// Periodic grid shape (one or two axes, last axis fastest).
struct Shape {
    std::vector<int> dims;

    std::size_t real_size() const {
        std::size_t s = 1;
        for (int d : dims) s *= static_cast<std::size_t>(d);
        return s;
    }
    std::size_t complex_size() const {
        std::size_t s = 1;
        for (std::size_t i = 0; i + 1 < dims.size(); ++i) s *= static_cast<std::size_t>(dims[i]);
        return s * static_cast<std::size_t>(dims.back() / 2 + 1);
    }
};

inline Spectrum forward(const Shape& shape, std::span<const double> in) {
    const std::size_t nr = shape.real_size(), nc = shape.complex_size();
    if (in.size() != nr) throw DomainError("fft: input size does not match shape");
    auto rbuf = detail::allocate<double>(nr);
    auto cbuf = detail::allocate<fftw_complex>(nc);
    detail::Plan plan;
    {
        std::lock_guard lock(detail::planner_mutex());
        plan.reset(fftw_plan_dft_r2c(static_cast<int>(shape.dims.size()), shape.dims.data(), rbuf.get(), cbuf.get(),
                                     FFTW_ESTIMATE));
    }
    std::copy(in.begin(), in.end(), rbuf.get());
    fftw_execute(plan.get());
    Spectrum out(nc);
    for (std::size_t i = 0; i < nc; ++i) out[i] = {cbuf[i][0], cbuf[i][1]};
    return out;
}

/// Inverse transform, normalized so inverse(forward(x)) == x.
inline std::vector<double> inverse(const Shape& shape, const Spectrum& in) {
    const std::size_t nr = shape.real_size(), nc = shape.complex_size();
    if (in.size() != nc) throw DomainError("fft: spectrum size does not match shape");
    auto rbuf = detail::allocate<double>(nr);
    auto cbuf = detail::allocate<fftw_complex>(nc);
    detail::Plan plan;
    {
        std::lock_guard lock(detail::planner_mutex());
        plan.reset(fftw_plan_dft_c2r(static_cast<int>(shape.dims.size()), shape.dims.data(), cbuf.get(), rbuf.get(),
                                     FFTW_ESTIMATE));
    }
    for (std::size_t i = 0; i < nc; ++i) {
        cbuf[i][0] = in[i].real();
        cbuf[i][1] = in[i].imag();
    }
    fftw_execute(plan.get());
    std::vector<double> out(nr);
    const double inv = 1.0 / static_cast<double>(nr);
    for (std::size_t i = 0; i < nr; ++i) out[i] = rbuf[i] * inv;
    return out;
}

} // namespace pnlt::fft
