#include "cjlab/spectral.hpp"

#include <fftw3.h>

#include <mutex>

namespace cjlab::spectral {

namespace {
std::mutex planner_mutex;

std::size_t total(std::span<const int> dims) {
    std::size_t n = 1;
    for (int d : dims) n *= static_cast<std::size_t>(d);
    return n;
}
}  // namespace

void fft(std::vector<cplx>& data, std::span<const int> dims, bool inverse) {
    auto* buf = reinterpret_cast<fftw_complex*>(data.data());
    fftw_plan plan;
    {
        std::lock_guard lk(planner_mutex);
        plan = fftw_plan_dft(static_cast<int>(dims.size()), dims.data(), buf, buf,
                             inverse ? FFTW_BACKWARD : FFTW_FORWARD, FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    std::lock_guard lk(planner_mutex);
    fftw_destroy_plan(plan);
}

std::vector<double> circular_convolve(std::span<const double> a, std::span<const double> b,
                                      std::span<const int> dims) {
    std::size_t n = total(dims);
    std::vector<cplx> fa(a.begin(), a.end()), fb(b.begin(), b.end());
    fft(fa, dims, false);
    fft(fb, dims, false);
    for (std::size_t i = 0; i < n; ++i) fa[i] *= fb[i];
    fft(fa, dims, true);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = fa[i].real() / static_cast<double>(n);
    return out;
}

std::vector<double> linear_convolve(std::span<const double> a, std::span<const double> b,
                                    std::span<const int> dims) {
    std::size_t d = dims.size();
    std::vector<int> pd(dims.begin(), dims.end());
    for (auto& x : pd) x *= 2;
    std::size_t np = total(pd);
    std::vector<double> pa(np, 0.0), pb(np, 0.0);
    std::vector<int> idx(d, 0);
    std::size_t n = total(dims);
    for (std::size_t f = 0; f < n; ++f) {
        std::size_t rem = f, pf = 0;
        for (std::size_t ax = d; ax-- > 0;) {
            idx[ax] = static_cast<int>(rem % dims[ax]);
            rem /= dims[ax];
        }
        for (std::size_t ax = 0; ax < d; ++ax) pf = pf * pd[ax] + idx[ax];
        pa[pf] = a[f];
        pb[pf] = b[f];
    }
    return circular_convolve(pa, pb, pd);
}

std::vector<double> fourier_multiply(std::span<const double> a, std::span<const int> dims,
                                     const std::function<double(std::span<const int>)>& mult) {
    std::size_t n = total(dims), d = dims.size();
    std::vector<cplx> fa(a.begin(), a.end());
    fft(fa, dims, false);
    std::vector<int> k(d);
    for (std::size_t f = 0; f < n; ++f) {
        std::size_t rem = f;
        for (std::size_t ax = d; ax-- > 0;) {
            int i = static_cast<int>(rem % dims[ax]);
            rem /= dims[ax];
            k[ax] = i <= dims[ax] / 2 ? i : i - dims[ax];
        }
        fa[f] *= mult(k);
    }
    fft(fa, dims, true);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = fa[i].real() / static_cast<double>(n);
    return out;
}

}  // namespace cjlab::spectral
