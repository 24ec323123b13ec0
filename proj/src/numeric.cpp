#include "cjlab/numeric.hpp"

#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

namespace cjlab {

double ordered_sum(std::span<const double> xs) {
    Accumulator acc;
    for (double x : xs) acc.add(x);
    return acc.value();
}

double unit_ball_volume(int d) {
    return std::pow(std::numbers::pi, d / 2.0) / std::tgamma(d / 2.0 + 1.0);
}

int thread_count() {
    if (const char* env = std::getenv("CJLAB_THREADS")) {
        int t = std::atoi(env);
        if (t > 0) return t;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

void parallel_chunks(std::size_t chunks, const std::function<void(std::size_t)>& body) {
    std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(thread_count()), chunks);
    if (workers <= 1) {
        for (std::size_t c = 0; c < chunks; ++c) body(c);
        return;
    }
    std::exception_ptr err;
    std::mutex m;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t c = w; c < chunks; c += workers) {
                try {
                    body(c);
                } catch (...) {
                    std::lock_guard lk(m);
                    if (!err) err = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

double smooth_step(double t) {
    if (t <= 0) return 0.0;
    if (t >= 1) return 1.0;
    double a = std::exp(-1.0 / t), b = std::exp(-1.0 / (1.0 - t));
    return a / (a + b);
}

double fit_slope(std::span<const double> x, std::span<const double> y) {
    std::size_t n = x.size();
    if (n < 2) return 0.0;
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) { mx += x[i]; my += y[i]; }
    mx /= n; my /= n;
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxx > 0 ? sxy / sxx : 0.0;
}

}  // namespace cjlab
