#include "cjlab/field.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

#include "cjlab/error.hpp"
#include "cjlab/numeric.hpp"
#include "cjlab/spectral.hpp"

namespace cjlab {

Grid::Grid(int d, double L, int N) : dim(d), half_extent(L), points_per_axis(N) {
    require(d >= 1, "grid dimension must be positive");
    require(std::isfinite(L) && L > 0, "grid half extent must be positive");
    require(N >= 4 && N % 2 == 0, "points per axis must be even and >= 4");
    double total = std::pow(static_cast<double>(N), d);
    require(total < 1e9, "grid too large");
}

std::size_t Grid::size() const {
    std::size_t n = 1;
    for (int a = 0; a < dim; ++a) n *= static_cast<std::size_t>(points_per_axis);
    return n;
}

double Grid::cell_volume() const { return std::pow(spacing(), dim); }

void Grid::node(std::size_t flat, std::span<double> x) const {
    for (int a = dim - 1; a >= 0; --a) {
        x[a] = coord(static_cast<int>(flat % points_per_axis));
        flat /= points_per_axis;
    }
}

std::vector<int> Grid::unflatten(std::size_t flat) const {
    std::vector<int> idx(dim);
    for (int a = dim - 1; a >= 0; --a) {
        idx[a] = static_cast<int>(flat % points_per_axis);
        flat /= points_per_axis;
    }
    return idx;
}

std::size_t Grid::flatten(std::span<const int> idx) const {
    std::size_t f = 0;
    for (int a = 0; a < dim; ++a) f = f * points_per_axis + idx[a];
    return f;
}

bool Grid::operator==(const Grid& o) const {
    return dim == o.dim && half_extent == o.half_extent && points_per_axis == o.points_per_axis;
}

SampledField::SampledField(Grid g, std::vector<double> values, double support_radius)
    : grid_(g), values_(std::move(values)), support_radius_(support_radius) {
    require(values_.size() == grid_.size(), "value count does not match grid");
    require(support_radius_ >= 0 && std::isfinite(support_radius_), "support radius must be finite and >= 0");
    std::vector<double> x(grid_.dim);
    for (std::size_t i = 0; i < values_.size(); ++i) {
        require(std::isfinite(values_[i]), "field values must be finite");
        if (values_[i] != 0.0 && support_radius_ < grid_.half_extent) {
            grid_.node(i, x);
            require(norm2(x) <= support_radius_ * (1 + 1e-12) + 1e-14,
                    "nonzero value outside declared support radius");
        }
    }
}

SampledField SampledField::zeros(const Grid& g, double support_radius) {
    return SampledField(g, std::vector<double>(g.size(), 0.0), support_radius);
}

SampledField SampledField::sample(const Grid& g, const PointFn& fn, double support_radius) {
    std::vector<double> v(g.size());
    std::vector<double> x(g.dim);
    for (std::size_t i = 0; i < v.size(); ++i) {
        g.node(i, x);
        v[i] = norm2(x) <= support_radius ? fn(x) : 0.0;
    }
    return SampledField(g, std::move(v), support_radius);
}

double SampledField::at(std::span<const double> x) const {
    const int d = grid_.dim, N = grid_.points_per_axis;
    const double h = grid_.spacing(), L = grid_.half_extent;
    int base[8];
    double frac[8];
    for (int a = 0; a < d; ++a) {
        double u = (x[a] + L) / h;
        if (!(u > -1.0 && u < N)) return 0.0;
        double fl = std::floor(u);
        base[a] = static_cast<int>(fl);
        frac[a] = u - fl;
    }
    double acc = 0.0;
    for (int corner = 0; corner < (1 << d); ++corner) {
        double w = 1.0;
        std::size_t flat = 0;
        bool inside = true;
        for (int a = 0; a < d; ++a) {
            int bit = (corner >> a) & 1;
            int k = base[a] + bit;
            w *= bit ? frac[a] : 1.0 - frac[a];
            if (k < 0 || k >= N) inside = false;
            flat = flat * N + (inside ? k : 0);
        }
        if (inside && w != 0.0) acc += w * values_[flat];
    }
    return acc;
}

SampledField SampledField::scaled(double c) const {
    std::vector<double> v(values_);
    for (auto& x : v) x *= c;
    return SampledField(grid_, std::move(v), support_radius_);
}

SampledField SampledField::plus(const SampledField& o, double c) const {
    require(grid_ == o.grid_, "fields on different grids");
    std::vector<double> v(values_);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += c * o.values_[i];
    return SampledField(grid_, std::move(v), std::max(support_radius_, o.support_radius_));
}

ExponentTuple::ExponentTuple(std::vector<double> exps) : p(std::move(exps)) {
    double s = 0;
    for (double q : p) {
        require(q > 1.0, "exponents must lie in (1, inf]");
        s += std::isinf(q) ? 0.0 : 1.0 / q;
    }
    require(std::abs(s - 1.0) <= 1e-12, "reciprocal exponents must sum to 1");
}

namespace {

SampledField map_nodes(const SampledField& f, const Grid& target, double radius,
                       const std::function<double(std::span<const double>)>& fn) {
    std::vector<double> v(target.size());
    std::vector<double> x(target.dim);
    for (std::size_t i = 0; i < v.size(); ++i) {
        target.node(i, x);
        v[i] = norm2(x) <= radius ? fn(x) : 0.0;
    }
    (void)f;
    return SampledField(target, std::move(v), radius);
}

void check_fits(const SampledField& f, double new_radius) {
    const double L = f.grid().half_extent;
    if (f.support_radius() <= L && new_radius > L * (1 + 1e-12))
        throw SupportOverflow("result support " + std::to_string(new_radius) +
                              " exceeds box half extent " + std::to_string(L));
}

}  // namespace

SampledField dilate(const SampledField& f, double t) {
    require(std::isfinite(t) && t > 0, "dilation factor must be positive and finite");
    if (t == 1.0) return f;
    double r = f.support_radius() / t;
    check_fits(f, r);
    const int d = f.dim();
    const double w = std::pow(t, d);
    std::vector<double> tx(d);
    return map_nodes(f, f.grid(), std::min(r, f.grid().half_extent * 2), [&](std::span<const double> x) {
        for (int a = 0; a < d; ++a) tx[a] = t * x[a];
        return w * f.at(tx);
    });
}

SampledField rescale_argument(const SampledField& f, double t) {
    require(std::isfinite(t) && t > 0, "scale factor must be positive and finite");
    return dilate(f, t).scaled(std::pow(t, -f.dim()));
}

SampledField resample(const SampledField& src, const Grid& target, double t, double support_radius) {
    require(src.dim() == target.dim, "dimension mismatch in resample");
    require(t > 0, "scale factor must be positive");
    double r = support_radius >= 0 ? support_radius : src.support_radius() / t;
    const int d = src.dim();
    const double w = std::pow(t, d);
    std::vector<double> tx(d);
    return map_nodes(src, target, r, [&](std::span<const double> x) {
        for (int a = 0; a < d; ++a) tx[a] = t * x[a];
        return w * src.at(tx);
    });
}

SampledField translate(const SampledField& f, std::span<const double> a) {
    const Grid& g = f.grid();
    require(static_cast<int>(a.size()) == g.dim, "shift dimension mismatch");
    double na = norm2(a);
    double r = f.support_radius() + na;
    if (r > g.half_extent * (1 + 1e-12))
        throw SupportOverflow("translated support escapes the box");
    if (na == 0.0) return f;
    const double h = g.spacing();
    std::vector<int> shift(g.dim);
    bool aligned = true;
    for (int i = 0; i < g.dim; ++i) {
        double s = a[i] / h;
        double rs = std::round(s);
        if (std::abs(s - rs) > 1e-9) aligned = false;
        shift[i] = static_cast<int>(rs);
    }
    std::vector<double> v(g.size(), 0.0);
    if (aligned) {
        const int N = g.points_per_axis;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (f[i] == 0.0) continue;
            auto idx = g.unflatten(i);
            bool ok = true;
            for (int ax = 0; ax < g.dim; ++ax) {
                idx[ax] += shift[ax];
                if (idx[ax] < 0 || idx[ax] >= N) ok = false;
            }
            if (ok) v[g.flatten(idx)] = f[i];
        }
        return SampledField(g, std::move(v), std::min(r, g.half_extent));
    }
    std::vector<double> x(g.dim);
    for (std::size_t i = 0; i < v.size(); ++i) {
        g.node(i, x);
        for (int ax = 0; ax < g.dim; ++ax) x[ax] -= a[ax];
        v[i] = f.at(x);
    }
    // interpolation can leak one cell past the nominal radius
    return SampledField(g, std::move(v), std::min(g.half_extent * 2, r + h * std::sqrt(g.dim)));
}

double lp_norm(const SampledField& f, double p) {
    require(p >= 1.0 || std::isinf(p), "p must be >= 1");
    if (std::isinf(p)) {
        double m = 0;
        for (double v : f.values()) m = std::max(m, std::abs(v));
        return m;
    }
    Accumulator acc;
    if (p == 1.0)
        for (double v : f.values()) acc.add(std::abs(v));
    else if (p == 2.0)
        for (double v : f.values()) acc.add(v * v);
    else
        for (double v : f.values()) acc.add(std::pow(std::abs(v), p));
    return std::pow(acc.value() * f.grid().cell_volume(), 1.0 / p);
}

double integral(const SampledField& f) {
    return ordered_sum(f.values()) * f.grid().cell_volume();
}

double segment_mean(const SampledField& a, std::span<const double> x, std::span<const double> y,
                    int s_nodes) {
    const Grid& g = a.grid();
    require(s_nodes >= 1, "segment nodes must be positive");
    require(static_cast<int>(x.size()) == g.dim && static_cast<int>(y.size()) == g.dim,
            "segment endpoint dimension mismatch");
    for (int i = 0; i < g.dim; ++i)
        require(std::abs(x[i]) <= g.half_extent && std::abs(y[i]) <= g.half_extent,
                "segment endpoints must lie in the grid box");
    std::vector<double> p(g.dim);
    double acc = 0;
    for (int k = 0; k < s_nodes; ++k) {
        double s = (k + 0.5) / s_nodes;
        for (int i = 0; i < g.dim; ++i) p[i] = s * x[i] + (1 - s) * y[i];
        acc += a.at(p);
    }
    return acc / s_nodes;
}

namespace {

SampledField convolve_direct(const SampledField& f, const SampledField& g, double radius) {
    const Grid& gr = f.grid();
    const int d = gr.dim, N = gr.points_per_axis, half = N / 2;
    std::vector<std::pair<std::vector<int>, double>> nz;
    for (std::size_t i = 0; i < gr.size(); ++i)
        if (f[i] != 0.0) nz.emplace_back(gr.unflatten(i), f[i]);
    std::vector<double> out(gr.size(), 0.0);
    std::vector<int> gi(d);
    for (std::size_t k = 0; k < gr.size(); ++k) {
        auto ki = gr.unflatten(k);
        Accumulator acc;
        for (const auto& [mi, fv] : nz) {
            bool ok = true;
            for (int a = 0; a < d; ++a) {
                gi[a] = ki[a] - mi[a] + half;
                if (gi[a] < 0 || gi[a] >= N) { ok = false; break; }
            }
            if (ok) acc.add(fv * g[gr.flatten(gi)]);
        }
        out[k] = acc.value() * gr.cell_volume();
    }
    return SampledField(gr, std::move(out), radius);
}

SampledField convolve_spectral(const SampledField& f, const SampledField& g, double radius) {
    const Grid& gr = f.grid();
    const int d = gr.dim, N = gr.points_per_axis, half = N / 2;
    std::vector<int> dims(d, N);
    auto full = spectral::linear_convolve(f.values(), g.values(), dims);
    auto nonneg = [](const SampledField& a) {
        for (double v : a.values()) if (v < 0) return false;
        return true;
    };
    // FFT roundoff can dip below zero; the exact result cannot
    const bool clip = nonneg(f) && nonneg(g);
    std::vector<double> out(gr.size());
    std::vector<double> x(d);
    for (std::size_t k = 0; k < gr.size(); ++k) {
        auto ki = gr.unflatten(k);
        std::size_t pf = 0;
        for (int a = 0; a < d; ++a) pf = pf * (2 * N) + (ki[a] + half);
        gr.node(k, x);
        out[k] = norm2(x) <= radius ? full[pf] * gr.cell_volume() : 0.0;
        if (clip && out[k] < 0) out[k] = 0.0;
    }
    return SampledField(gr, std::move(out), radius);
}

}  // namespace

SampledField convolve(const SampledField& f, const SampledField& g, ConvMethod m) {
    require(f.grid() == g.grid(), "convolution operands must share a grid");
    const Grid& gr = f.grid();
    double r = f.support_radius() + g.support_radius();
    if (r > gr.half_extent * (1 + 1e-12))
        throw SupportOverflow("convolution support exceeds the box");
    if (m == ConvMethod::Auto) {
        std::size_t nzf = 0;
        for (double v : f.values()) nzf += v != 0.0;
        m = static_cast<double>(nzf) * gr.size() < 4e6 ? ConvMethod::Direct : ConvMethod::Spectral;
    }
    return m == ConvMethod::Direct ? convolve_direct(f, g, r) : convolve_spectral(f, g, r);
}

void write_csv(const SampledField& f, std::ostream& os) {
    const Grid& g = f.grid();
    os.precision(17);
    os << "dim,extent,points_per_axis\n" << g.dim << ',' << g.half_extent << ',' << g.points_per_axis << '\n';
    for (double v : f.values()) os << v << '\n';
}

SampledField read_csv(std::istream& is) {
    std::string line;
    require(static_cast<bool>(std::getline(is, line)), "empty CSV field");
    if (line.rfind("dim", 0) == 0) require(static_cast<bool>(std::getline(is, line)), "missing CSV header values");
    std::istringstream hs(line);
    int d = 0, N = 0;
    double L = 0;
    char c1 = 0, c2 = 0;
    hs >> d >> c1 >> L >> c2 >> N;
    require(hs && c1 == ',' && c2 == ',', "malformed CSV header");
    Grid g(d, L, N);
    std::vector<double> v;
    v.reserve(g.size());
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        v.push_back(std::stod(line));
    }
    require(v.size() == g.size(), "CSV value count does not match header");
    double r = 0;
    std::vector<double> x(d);
    for (std::size_t i = 0; i < v.size(); ++i)
        if (v[i] != 0.0) { g.node(i, x); r = std::max(r, norm2(x)); }
    return SampledField(g, std::move(v), r);
}

void write_binary(const SampledField& f, std::ostream& os) {
    const Grid& g = f.grid();
    os.write("CJFB", 4);
    std::int32_t d = g.dim, N = g.points_per_axis;
    double L = g.half_extent, r = f.support_radius();
    os.write(reinterpret_cast<const char*>(&d), sizeof d);
    os.write(reinterpret_cast<const char*>(&L), sizeof L);
    os.write(reinterpret_cast<const char*>(&N), sizeof N);
    os.write(reinterpret_cast<const char*>(&r), sizeof r);
    os.write(reinterpret_cast<const char*>(f.values().data()),
             static_cast<std::streamsize>(f.values().size() * sizeof(double)));
}

SampledField read_binary(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    require(is && std::memcmp(magic, "CJFB", 4) == 0, "not a binary field file");
    std::int32_t d = 0, N = 0;
    double L = 0, r = 0;
    is.read(reinterpret_cast<char*>(&d), sizeof d);
    is.read(reinterpret_cast<char*>(&L), sizeof L);
    is.read(reinterpret_cast<char*>(&N), sizeof N);
    is.read(reinterpret_cast<char*>(&r), sizeof r);
    require(static_cast<bool>(is), "truncated binary field header");
    Grid g(d, L, N);
    std::vector<double> v(g.size());
    is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
    require(static_cast<bool>(is), "truncated binary field values");
    return SampledField(g, std::move(v), r);
}

}  // namespace cjlab
