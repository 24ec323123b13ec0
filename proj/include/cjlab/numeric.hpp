#pragma once
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <span>
#include <vector>

namespace cjlab {

// Neumaier compensated sum
class Accumulator {
public:
    void add(double x) {
        double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            comp_ += (sum_ - t) + x;
        else
            comp_ += (x - t) + sum_;
        sum_ = t;
    }
    Accumulator& operator+=(double x) { add(x); return *this; }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0, comp_ = 0.0;
};

double ordered_sum(std::span<const double> xs);

// volume of the unit ball in R^d
double unit_ball_volume(int d);

// number of worker threads: CJLAB_THREADS if set, else hardware concurrency
int thread_count();

// Runs body(c) for c in [0, chunks). Each chunk must write only its own output
// slot; the caller reduces in chunk order, so results do not depend on threads.
void parallel_chunks(std::size_t chunks, const std::function<void(std::size_t)>& body);

// iterate over a tensor index set {0..n-1}^dim, row major (first axis slowest)
inline bool next_index(std::vector<int>& idx, int n) {
    for (int a = static_cast<int>(idx.size()) - 1; a >= 0; --a) {
        if (++idx[a] < n) return true;
        idx[a] = 0;
    }
    return false;
}

inline double norm2(std::span<const double> x) {
    double s = 0;
    for (double v : x) s += v * v;
    return std::sqrt(s);
}

// smooth step from 0 (t<=0) to 1 (t>=1), C-infinity
double smooth_step(double t);

// radial cutoff: 1 for r <= inner, 0 for r >= outer, smooth in between
inline double radial_cutoff(double r, double inner, double outer) {
    return 1.0 - smooth_step((r - inner) / (outer - inner));
}

// least-squares slope of y against x
double fit_slope(std::span<const double> x, std::span<const double> y);

}  // namespace cjlab
