#pragma once
#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace cjlab {

// uniform tensor grid on [-L, L]^d with nodes x_k = -L + k h, h = 2L/N
struct Grid {
    int dim = 1;
    double half_extent = 1.0;
    int points_per_axis = 4;

    Grid() = default;
    Grid(int d, double L, int N);

    double spacing() const { return 2.0 * half_extent / points_per_axis; }
    double coord(int k) const { return (k - points_per_axis / 2) * spacing(); }
    std::size_t size() const;
    double cell_volume() const;
    void node(std::size_t flat, std::span<double> x) const;
    std::vector<int> unflatten(std::size_t flat) const;
    std::size_t flatten(std::span<const int> idx) const;
    bool operator==(const Grid& o) const;
};

using PointFn = std::function<double(std::span<const double>)>;

class SampledField {
public:
    SampledField() = default;
    SampledField(Grid g, std::vector<double> values, double support_radius);

    static SampledField zeros(const Grid& g, double support_radius = 0.0);
    // samples fn on the nodes, zeroing nodes with |x| > support_radius
    static SampledField sample(const Grid& g, const PointFn& fn, double support_radius);

    const Grid& grid() const { return grid_; }
    int dim() const { return grid_.dim; }
    double support_radius() const { return support_radius_; }
    const std::vector<double>& values() const { return values_; }
    double operator[](std::size_t i) const { return values_[i]; }

    // multilinear interpolation, 0 outside the box
    double at(std::span<const double> x) const;
    double at(double x) const { return at(std::span<const double>(&x, 1)); }

    SampledField scaled(double c) const;
    SampledField plus(const SampledField& o, double c = 1.0) const;

private:
    Grid grid_;
    std::vector<double> values_;
    double support_radius_ = 0.0;
};

// ExponentTuple: p_i in (1, inf], sum 1/p_i = 1
struct ExponentTuple {
    std::vector<double> p;
    explicit ExponentTuple(std::vector<double> exps);
};

SampledField dilate(const SampledField& f, double t);
// x -> f(t x) without the t^d factor
SampledField rescale_argument(const SampledField& f, double t);
SampledField translate(const SampledField& f, std::span<const double> a);
double lp_norm(const SampledField& f, double p);
double integral(const SampledField& f);
double segment_mean(const SampledField& a, std::span<const double> x, std::span<const double> y,
                    int s_nodes = 8);

enum class ConvMethod { Auto, Direct, Spectral };
SampledField convolve(const SampledField& f, const SampledField& g, ConvMethod m = ConvMethod::Auto);

// value at x of a field given on another grid, resampled: t^d src(t x)
SampledField resample(const SampledField& src, const Grid& target, double t = 1.0,
                      double support_radius = -1.0);

void write_csv(const SampledField& f, std::ostream& os);
SampledField read_csv(std::istream& is);
void write_binary(const SampledField& f, std::ostream& os);
SampledField read_binary(std::istream& is);

}  // namespace cjlab
