#include "cjlab/kernelspace.hpp"

#include <cmath>
#include <memory>

#include "cjlab/error.hpp"
#include "cjlab/numeric.hpp"
#include "cjlab/spectral.hpp"

namespace cjlab {

namespace {

struct Axis {
    double lo;
    double step;
    int count;
    double node(int k) const { return lo + (k + 0.5) * step; }
};

// midpoint sum of F over the product of axes (first n axes are alpha, rest v)
double box_sum(const std::vector<Axis>& axes, int n,
               const std::function<double(std::span<const double>, std::span<const double>)>& F) {
    const int dim = static_cast<int>(axes.size());
    double w = 1;
    for (const auto& a : axes) {
        if (a.count <= 0) return 0.0;
        w *= a.step;
    }
    std::vector<int> idx(dim, 0);
    std::vector<double> p(dim);
    Accumulator acc;
    do {
        for (int a = 0; a < dim; ++a) p[a] = axes[a].node(idx[a]);
        std::span<const double> sp(p);
        double v = F(sp.subspan(0, n), sp.subspan(n));
        if (v != 0.0) acc.add(v);
    } while ([&] {
        for (int a = dim - 1; a >= 0; --a) {
            if (++idx[a] < axes[a].count) return true;
            idx[a] = 0;
        }
        return false;
    }());
    return acc.value() * w;
}

std::vector<Axis> kernel_axes(const KernelB& s) {
    std::vector<Axis> ax;
    for (int i = 0; i < s.n; ++i) ax.push_back({s.alpha_lo[i], s.alpha_step(i), s.alpha_res});
    for (int a = 0; a < s.d; ++a) ax.push_back({-s.v_box, s.v_step(), s.v_res});
    return ax;
}

// axis covering [lo - h, hi] with the same step, so a shift by +h stays covered
Axis extended(const Axis& a, double h) {
    double len = a.step * a.count + h;
    int cnt = static_cast<int>(std::ceil(len / a.step - 1e-9));
    return {a.lo - h, a.step, cnt};
}

}  // namespace

bool KernelB::inside(std::span<const double> alpha, std::span<const double> v) const {
    for (int i = 0; i < n; ++i)
        if (alpha[i] < alpha_lo[i] || alpha[i] > alpha_hi[i]) return false;
    for (int a = 0; a < d; ++a)
        if (std::abs(v[a]) > v_box) return false;
    return true;
}

KernelB make_kernel(int n, int d, KernelFn f, double alpha_lo, double alpha_hi, double v_box, std::string name) {
    require(n >= 0 && d >= 1, "kernel needs n >= 0 and d >= 1");
    require(alpha_lo < alpha_hi || n == 0, "alpha box must be nonempty");
    require(v_box > 0, "v box must be positive");
    KernelB s;
    s.n = n;
    s.d = d;
    s.eval = std::move(f);
    s.alpha_lo.assign(n, alpha_lo);
    s.alpha_hi.assign(n, alpha_hi);
    s.v_box = v_box;
    s.name = std::move(name);
    return s;
}

double integrate(const KernelB& s,
                 const std::function<double(std::span<const double>, std::span<const double>, double)>& F) {
    return box_sum(kernel_axes(s), s.n, [&](auto a, auto v) { return F(a, v, s(a, v)); });
}

double l1_norm(const KernelB& s) {
    return integrate(s, [](auto, auto, double val) { return std::abs(val); });
}

std::vector<std::pair<double, double>> v_integrals(const KernelB& s) {
    auto ax = kernel_axes(s);
    std::vector<Axis> va(ax.begin() + s.n, ax.end());
    std::vector<std::pair<double, double>> out;
    std::vector<int> idx(s.n, 0);
    std::vector<double> alpha(s.n);
    do {
        for (int i = 0; i < s.n; ++i) alpha[i] = s.alpha_node(i, idx[i]);
        Accumulator sum, mass;
        box_sum(va, 0, [&](auto, auto v) {
            double x = s(alpha, v);
            sum.add(x);
            mass.add(std::abs(x));
            return 0.0;
        });
        double w = std::pow(s.v_step(), s.d);
        out.emplace_back(sum.value() * w, mass.value() * w);
    } while (s.n > 0 && next_index(idx, s.alpha_res));
    return out;
}

void validate_kernel(const KernelB& s) {
    require(static_cast<int>(s.alpha_lo.size()) == s.n && static_cast<int>(s.alpha_hi.size()) == s.n,
            "alpha box dimension mismatch");
    require(static_cast<bool>(s.eval), "kernel closure missing");
    box_sum(kernel_axes(s), s.n, [&](auto a, auto v) {
        double x = s(a, v);
        if (!std::isfinite(x)) throw InvalidArgument("non-finite kernel sample in " + s.name);
        return 0.0;
    });
    if (s.cancels_in_v) {
        for (auto [integral, mass] : v_integrals(s))
            if (std::abs(integral) > 1e-6 * (mass + 1e-12))
                throw CancellationViolation(s.name + ": v-integral " + std::to_string(integral) +
                                            " at an alpha node with mass " + std::to_string(mass));
    }
}

KernelB scaled(const KernelB& s, double c) {
    KernelB out = s;
    auto f = s.eval;
    out.eval = [f, c](auto a, auto v) { return c * f(a, v); };
    return out;
}

KernelB dilate(const KernelB& s, double t) {
    require(t > 0 && std::isfinite(t), "dilation factor must be positive");
    KernelB out = s;
    auto f = s.eval;
    const int d = s.d;
    const double td = std::pow(t, d);
    out.eval = [f, t, td, d](auto a, auto v) {
        double tv[8];
        for (int k = 0; k < d; ++k) tv[k] = t * v[k];
        return td * f(a, std::span<const double>(tv, d));
    };
    out.v_box = s.v_box / t;
    out.name = s.name + "^(" + std::to_string(t) + ")";
    return out;
}

void NormReport::finalize() {
    Accumulator acc;
    for (const auto& [k, v] : components) acc.add(v);
    total = acc.value();
}

nlohmann::json NormReport::to_json() const {
    nlohmann::json j;
    j["kind"] = kind;
    j["components"] = components;
    j["extras"] = extras;
    j["epsilon"] = epsilon;
    j["total"] = total;
    j["discretization"] = discretization;
    return j;
}

NormReport besov_norm(const KernelB& s, double eps, const BesovOptions& opt) {
    require(eps >= 0 && eps <= 1, "eps must lie in [0, 1]");
    NormReport r;
    r.kind = "besov";
    r.epsilon = eps;
    auto ax = kernel_axes(s);

    std::vector<double> b1(std::max(s.n, 1), 0.0);
    if (s.n == 0) {
        b1[0] = l1_norm(s);
    } else {
        for (int i = 0; i < s.n; ++i)
            b1[i] = box_sum(ax, s.n, [&](auto a, auto v) { return std::pow(1 + std::abs(a[i]), eps) * std::abs(s(a, v)); });
    }
    r.components["B1"] = *std::max_element(b1.begin(), b1.end());
    r.components["B4"] = box_sum(ax, s.n, [&](auto a, auto v) {
        return std::pow(1 + norm2(v), eps) * std::abs(s(a, v));
    });

    std::vector<double> hs_alpha, hs_v;
    double b2 = 0, b3 = 0;
    std::vector<double> shifted;
    for (int m = 0; m <= opt.max_m; ++m) {
        const double h = std::ldexp(1.0, -m);
        for (int i = 0; i < s.n; ++i) {
            if (h < s.alpha_step(i) * (1 - 1e-12)) continue;
            if (i == 0) hs_alpha.push_back(h);
            auto e = ax;
            e[i] = extended(ax[i], h);
            double val = box_sum(e, s.n, [&](auto a, auto v) {
                shifted.assign(a.begin(), a.end());
                shifted[i] += h;
                return std::abs(s(shifted, v) - s(a, v));
            });
            b2 = std::max(b2, val / std::pow(h, eps));
        }
        if (h < s.v_step() * (1 - 1e-12)) continue;
        hs_v.push_back(h);
        for (int k = 0; k < s.d; ++k) {
            auto e = ax;
            e[s.n + k] = extended(ax[s.n + k], h);
            double val = box_sum(e, s.n, [&](auto a, auto v) {
                shifted.assign(v.begin(), v.end());
                shifted[k] += h;
                return std::abs(s(a, shifted) - s(a, v));
            });
            b3 = std::max(b3, val / std::pow(h, eps));
        }
    }
    r.components["B2"] = b2;
    r.components["B3"] = b3;
    r.finalize();
    r.discretization = {{"alpha_res", s.alpha_res},
                        {"v_res", s.v_res},
                        {"alpha_h", hs_alpha},
                        {"v_h", hs_v},
                        {"quadrature", "midpoint"},
                        {"kernel", s.name}};
    return r;
}

void validate_cz(const CZKernelSpec& k) {
    require(static_cast<bool>(k.kappa), "kappa closure missing");
    if (!k.homogeneity) return;
    const double deg = *k.homogeneity;
    std::vector<double> x(k.d), tx(k.d);
    for (int s = 0; s < 12; ++s) {
        for (int a = 0; a < k.d; ++a) x[a] = std::cos(1.3 * s + 0.7 * a) * (0.3 + 0.1 * s);
        for (double t : {0.5, 2.0, 3.0}) {
            for (int a = 0; a < k.d; ++a) tx[a] = t * x[a];
            double lhs = k.kappa(tx), rhs = std::pow(t, deg) * k.kappa(x);
            if (std::abs(lhs - rhs) > 1e-8 * std::max(1.0, std::abs(rhs)))
                throw InvalidArgument(k.name + " is not homogeneous of the declared degree");
        }
    }
}

double KernelK::operator()(std::span<const double> alpha, std::span<const double> x) const {
    for (int i = 0; i < n; ++i)
        if (alpha[i] < alpha_lo[i] || alpha[i] > alpha_hi[i]) return 0.0;
    double r = norm2(x);
    if (r > support || r <= singular_radius) return 0.0;
    return eval(alpha, x);
}

KernelK cj_kernel(const CZKernelSpec& kappa, int n) {
    KernelK K;
    K.n = n;
    K.d = kappa.d;
    auto f = kappa.kappa;
    K.eval = [f, n](std::span<const double> a, std::span<const double> x) {
        for (int i = 0; i < n; ++i)
            if (a[i] < 0 || a[i] > 1) return 0.0;
        return f(x);
    };
    K.alpha_lo.assign(n, 0.0);
    K.alpha_hi.assign(n, 1.0);
    K.support = kappa.support;
    K.singular_radius = kappa.singular_radius;
    K.name = "cj(" + kappa.name + ")";
    return K;
}

std::vector<CZKernelSpec> riesz_kernels(int d) {
    require(d >= 2, "Riesz-type kernels need d >= 2");
    std::vector<CZKernelSpec> out;
    auto base = [d](std::string name, std::function<double(std::span<const double>)> f) {
        CZKernelSpec k;
        k.d = d;
        k.kappa = std::move(f);
        k.homogeneity = -static_cast<double>(d);
        k.odd = false;
        k.name = std::move(name);
        return k;
    };
    for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j)
            out.push_back(base("kappa_" + std::to_string(i + 1) + std::to_string(j + 1),
                               [i, j, d](std::span<const double> x) {
                                   double r2 = 0;
                                   for (double v : x) r2 += v * v;
                                   return x[i] * x[j] / std::pow(r2, (d + 2) / 2.0);
                               }));
    for (int i = 0; i + 1 < d; ++i)
        out.push_back(base("kappa_" + std::to_string(i + 1), [i, d](std::span<const double> x) {
            double r2 = 0;
            for (double v : x) r2 += v * v;
            return (x[i] * x[i] - x[d - 1] * x[d - 1]) / std::pow(r2, (d + 2) / 2.0);
        }));
    return out;
}

CZKernelSpec bump_derivative_kappa(int d) {
    CZKernelSpec k;
    k.d = d;
    k.odd = true;
    k.support = 1.0;
    k.name = "bump_dx1";
    double c = bump_normalization(d);
    k.kappa = [c](std::span<const double> x) {
        double r2 = 0;
        for (double v : x) r2 += v * v;
        if (r2 >= 1) return 0.0;
        double q = 1 - r2;
        // -d/dx1 of c exp(-1/(1-|x|^2))
        return c * 2 * x[0] / (q * q) * std::exp(-1 / q);
    };
    return k;
}

KernelK as_closure(const KernelB& s) {
    KernelK K;
    K.n = s.n;
    K.d = s.d;
    K.eval = [s](auto a, auto x) { return s(a, x); };
    K.alpha_lo = s.alpha_lo;
    K.alpha_hi = s.alpha_hi;
    K.support = s.v_box * std::sqrt(static_cast<double>(s.d));
    K.alpha_res = s.alpha_res;
    K.name = s.name;
    return K;
}

KernelK dilate(const KernelK& K, double t) {
    require(t > 0 && std::isfinite(t), "dilation factor must be positive");
    KernelK out = K;
    auto f = K.eval;
    const int d = K.d;
    const double td = std::pow(t, d);
    out.eval = [f, t, td, d](auto a, auto x) {
        double tx[8];
        for (int k = 0; k < d; ++k) tx[k] = t * x[k];
        return td * f(a, std::span<const double>(tx, d));
    };
    out.support = K.support / t;
    out.singular_radius = K.singular_radius / t;
    out.name = K.name + "^(" + std::to_string(t) + ")";
    return out;
}

EtaSpec default_eta(int d) {
    EtaSpec e;
    double c = bump_normalization(d);
    e.fn = [c](std::span<const double> x) { return c * bump_profile(norm2(x)); };
    e.radius = 1.0;
    e.mass = 1.0;
    e.name = "bump";
    return e;
}

double eta_nondegeneracy(const EtaSpec& eta, int d) {
    Grid g(d, eta.radius * 1.01, d == 1 ? 512 : 96);
    auto s = SampledField::sample(g, eta.fn, eta.radius);
    const int dirs = d == 1 ? 2 : 16;
    double worst = INFINITY;
    std::vector<double> x(d), th(d);
    for (int q = 0; q < dirs; ++q) {
        if (d == 1) th[0] = q == 0 ? 1 : -1;
        else { th[0] = std::cos(2 * M_PI * q / dirs); th[1] = std::sin(2 * M_PI * q / dirs); for (int a = 2; a < d; ++a) th[a] = 0; }
        double best = 0;
        for (int k = -4; k <= 4; ++k) {
            double tau = std::ldexp(1.0, k);
            double re = 0, im = 0;
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (s[i] == 0) continue;
                g.node(i, x);
                double ph = 0;
                for (int a = 0; a < d; ++a) ph += x[a] * th[a] * tau;
                re += s[i] * std::cos(ph);
                im -= s[i] * std::sin(ph);
            }
            best = std::max(best, std::hypot(re, im) * g.cell_volume());
        }
        worst = std::min(worst, best);
    }
    return worst;
}

namespace {

std::vector<std::vector<double>> alpha_nodes(const KernelK& K, const std::vector<Axis>& axes) {
    std::vector<std::vector<double>> out;
    std::vector<int> idx(K.n, 0);
    do {
        std::vector<double> a(K.n);
        for (int i = 0; i < K.n; ++i) a[i] = axes[i].node(idx[i]);
        out.push_back(std::move(a));
    } while ([&] {
        for (int i = K.n - 1; i >= 0; --i) {
            if (++idx[i] < axes[i].count) return true;
            idx[i] = 0;
        }
        return false;
    }());
    return out;
}

std::vector<Axis> alpha_axes(const KernelK& K) {
    std::vector<Axis> ax;
    for (int i = 0; i < K.n; ++i) ax.push_back({K.alpha_lo[i], K.alpha_step(i), K.alpha_res});
    return ax;
}

double alpha_cell(const std::vector<Axis>& ax) {
    double w = 1;
    for (const auto& a : ax) w *= a.step;
    return w;
}

// polar nodes on the unit sphere with weights (d = 1: +-1, d = 2: uniform angles)
std::vector<std::pair<std::vector<double>, double>> sphere_nodes(int d, int angular) {
    std::vector<std::pair<std::vector<double>, double>> out;
    if (d == 1) {
        out.push_back({{1.0}, 1.0});
        out.push_back({{-1.0}, 1.0});
        return out;
    }
    require(d == 2, "polar quadrature implemented for d <= 2");
    for (int q = 0; q < angular; ++q) {
        double th = 2 * M_PI * (q + 0.5) / angular;
        out.push_back({{std::cos(th), std::sin(th)}, 2 * M_PI / angular});
    }
    return out;
}

}  // namespace

NormReport k_norm(const KernelK& K, double eps, const EtaSpec& eta, const KNormOptions& opt) {
    require(eps > 0 && eps <= 1, "eps must lie in (0, 1]");
    require(K.d <= 2, "k_norm implemented for d <= 2");
    const int d = K.d;
    require(std::isfinite(K.support), "k_norm needs a kernel with finite x-support");

    // x grid for the L2 seminorms: resolve eta^{(1/t)} for t = 2^-t_max and hold t = 2^t_max
    double h = opt.x_spacing > 0 ? opt.x_spacing : std::ldexp(1.0, -opt.t_max) / 4;
    double X = opt.x_half_extent > 0 ? opt.x_half_extent : K.support + std::ldexp(eta.radius, opt.t_max);
    {
        int lo = static_cast<int>(std::ceil(std::log2(4 * h) - 1e-12));
        int hi = static_cast<int>(std::floor(std::log2(std::max((X - K.support) / eta.radius, 1e-300)) + 1e-12));
        if (-opt.t_max < lo || opt.t_max > hi)
            throw ResolutionError("t range 2^[-" + std::to_string(opt.t_max) + "," + std::to_string(opt.t_max) +
                                  "] not resolvable; achievable t in 2^[" + std::to_string(lo) + "," +
                                  std::to_string(hi) + "]");
    }
    int N = 2 * static_cast<int>(std::ceil(X / h));
    if (std::pow(static_cast<double>(N), d) > (1 << 22))
        throw ResolutionError("x grid for the L2 seminorms exceeds the node budget");
    Grid g(d, X, N);

    auto ax = alpha_axes(K);
    const double dA = alpha_cell(ax);
    NormReport r;
    r.kind = "K";
    r.epsilon = eps;

    std::vector<SampledField> etas;
    std::vector<double> ts;
    for (int k = -opt.t_max; k <= opt.t_max; ++k) {
        double t = std::ldexp(1.0, k);
        ts.push_back(t);
        auto e = SampledField::sample(g, [&](std::span<const double> x) {
            double y[8];
            for (int a = 0; a < d; ++a) y[a] = x[a] / t;
            return eta.fn(std::span<const double>(y, d));
        }, eta.radius * t);
        etas.push_back(e.scaled(eta.mass / integral(e)));
    }
    auto l2_profile = [&](const std::function<double(std::span<const double>)>& fx, std::vector<double>& out) {
        auto kf = SampledField::sample(g, fx, K.support);
        out.resize(ts.size());
        if (lp_norm(kf, INFINITY) == 0.0) { std::fill(out.begin(), out.end(), 0.0); return; }
        for (std::size_t q = 0; q < ts.size(); ++q)
            out[q] = std::pow(ts[q], d / 2.0) * lp_norm(convolve(etas[q], kf, ConvMethod::Spectral), 2);
    };

    // K1
    auto nodes = alpha_nodes(K, ax);
    std::vector<std::vector<double>> prof(nodes.size());
    for (std::size_t a = 0; a < nodes.size(); ++a)
        l2_profile([&](std::span<const double> x) { return K(nodes[a], x); }, prof[a]);
    double k1 = 0;
    for (int i = 0; i < std::max(K.n, 1); ++i)
        for (std::size_t q = 0; q < ts.size(); ++q) {
            Accumulator acc;
            for (std::size_t a = 0; a < nodes.size(); ++a)
                acc.add((K.n ? std::pow(1 + std::abs(nodes[a][i]), eps) : 1.0) * prof[a][q]);
            k1 = std::max(k1, acc.value() * dA);
        }
    r.components["K1"] = k1;

    // K2 and K4 use alpha shifts h_a = 2^-m resolvable on the alpha grid
    std::vector<double> hs;
    for (int m = 0; m <= opt.h_max; ++m) {
        double ha = std::ldexp(1.0, -m);
        bool ok = K.n > 0;
        for (int i = 0; i < K.n; ++i) ok = ok && ha >= K.alpha_step(i) * (1 - 1e-12);
        if (ok) hs.push_back(ha);
    }
    double k2 = 0;
    std::vector<double> tmp;
    for (int i = 0; i < K.n; ++i)
        for (double ha : hs) {
            auto e = ax;
            e[i] = extended(ax[i], ha);
            auto en = alpha_nodes(K, e);
            std::vector<Accumulator> acc(ts.size());
            for (auto& a : en) {
                auto b = a;
                b[i] += ha;
                l2_profile([&](std::span<const double> x) { return K(b, x) - K(a, x); }, tmp);
                for (std::size_t q = 0; q < ts.size(); ++q) acc[q].add(tmp[q]);
            }
            double ce = alpha_cell(e);
            for (auto& a : acc) k2 = std::max(k2, a.value() * ce / std::pow(ha, eps));
        }
    r.components["K2"] = k2;

    // K3, K4: scale-free polar quadrature over 1 <= |z| <= 2
    auto sph = sphere_nodes(d, opt.angular_nodes);
    std::vector<double> Rs;
    for (int k = -opt.r_max; k <= opt.r_max; ++k) Rs.push_back(std::ldexp(1.0, k));
    auto annulus = [&](double R, const std::function<double(std::span<const double>)>& F) {
        Accumulator acc;
        std::vector<double> x(d);
        const double dr = 1.0 / opt.radial_nodes;
        for (int l = 0; l < opt.radial_nodes; ++l) {
            double rho = 1 + (l + 0.5) * dr;
            double jac = std::pow(rho, d - 1) * dr;
            for (const auto& [th, w] : sph) {
                for (int a = 0; a < d; ++a) x[a] = R * rho * th[a];
                acc.add(F(x) * jac * w);
            }
        }
        return acc.value() * std::pow(R, d);
    };
    double k3 = 0;
    for (double R : Rs) {
        std::vector<double> mass(nodes.size());
        for (std::size_t a = 0; a < nodes.size(); ++a)
            mass[a] = annulus(R, [&](auto x) { return std::abs(K(nodes[a], x)); });
        for (int i = 0; i < std::max(K.n, 1); ++i) {
            Accumulator acc;
            for (std::size_t a = 0; a < nodes.size(); ++a)
                acc.add((K.n ? std::pow(1 + std::abs(nodes[a][i]), eps) : 1.0) * mass[a]);
            k3 = std::max(k3, acc.value() * dA);
        }
    }
    r.components["K3"] = k3;
    double k4 = 0;
    for (int i = 0; i < K.n; ++i)
        for (double ha : hs) {
            auto e = ax;
            e[i] = extended(ax[i], ha);
            auto en = alpha_nodes(K, e);
            double ce = alpha_cell(e);
            for (double R : Rs) {
                Accumulator acc;
                for (auto& a : en) {
                    auto b = a;
                    b[i] += ha;
                    acc.add(annulus(R, [&](auto x) { return std::abs(K(b, x) - K(a, x)); }));
                }
                k4 = std::max(k4, acc.value() * ce / std::pow(ha, eps));
            }
        }
    r.components["K4"] = k4;

    // K5: |x| >= R|y|, log-radius quadrature, y on dyadic spheres
    double k5 = 0;
    const int ydirs = d == 1 ? 2 : 8;
    std::vector<double> y(d), x(d), xy(d);
    const int per_octave = std::max(8, opt.radial_nodes / 4);
    for (int m = -2; m <= opt.y_levels; ++m) {
        double ry = std::ldexp(1.0, -m);
        for (int q = 0; q < ydirs; ++q) {
            if (d == 1) y[0] = q == 0 ? ry : -ry;
            else { y[0] = ry * std::cos(2 * M_PI * q / ydirs); y[1] = ry * std::sin(2 * M_PI * q / ydirs); }
            for (int kR = 1; kR <= opt.r5_max; ++kR) {
                double R = std::ldexp(1.0, kR);
                double r0 = R * ry, r1 = K.support + ry;
                if (r0 >= r1) continue;
                double u0 = std::log(r0), u1 = std::log(r1);
                int nu = std::max(per_octave, static_cast<int>(std::ceil(per_octave * (u1 - u0) / std::log(2.0))));
                double du = (u1 - u0) / nu;
                Accumulator acc;
                for (const auto& a : nodes)
                    for (int l = 0; l < nu; ++l) {
                        double rho = std::exp(u0 + (l + 0.5) * du);
                        double jac = std::pow(rho, d) * du;
                        for (const auto& [th, w] : sph) {
                            for (int c = 0; c < d; ++c) { x[c] = rho * th[c]; xy[c] = x[c] - y[c]; }
                            acc.add(std::abs(K(a, xy) - K(a, x)) * jac * w);
                        }
                    }
                k5 = std::max(k5, std::pow(R, eps) * acc.value() * dA);
            }
        }
    }
    r.components["K5"] = k5;
    r.finalize();
    r.discretization = {{"t_set_log2", {-opt.t_max, opt.t_max}},
                        {"R_set_log2", {-opt.r_max, opt.r_max}},
                        {"alpha_h", hs},
                        {"y_levels_log2", {-2, opt.y_levels}},
                        {"R5_set_log2", {1, opt.r5_max}},
                        {"x_grid", {{"half_extent", X}, {"points_per_axis", N}}},
                        {"alpha_res", K.alpha_res},
                        {"radial_nodes", opt.radial_nodes},
                        {"angular_nodes", opt.angular_nodes},
                        {"eta", eta.name},
                        {"sup_note", "dyadic-range values; not certified upper bounds"}};
    return r;
}

DyadicKernel decompose_kernel(const KernelK& K, const MollifierSpec& m, int j_min, int j_max,
                              const DecomposeOptions& opt) {
    require(j_min <= j_max, "empty scale range");
    require(std::isfinite(K.support), "decomposition needs a finite x-support");
    require(m.dim == K.d, "mollifier dimension mismatch");
    const int d = K.d;
    const double hK = opt.native_spacing > 0 ? opt.native_spacing : K.support / 64;
    auto ax = alpha_axes(K);
    auto nodes = alpha_nodes(K, ax);
    DyadicKernel out;
    out.j_min = j_min;
    out.j_max = j_max;
    for (int j = j_min; j <= j_max; ++j) {
        const double X = K.support + std::ldexp(2 * m.radius, -j);
        const double target = std::min(hK, std::ldexp(1.0, -j) / 8);
        const int N = 2 * static_cast<int>(std::ceil(X / target));
        if (std::pow(static_cast<double>(N), d) > static_cast<double>(opt.max_nodes))
            throw ResolutionError("scale 2^" + std::to_string(j) + " needs " + std::to_string(N) +
                                  " points per axis; exceeds the node budget");
        Grid g(d, X, N);
        auto psi = mollifier_kernel(m, g, j).plus(mollifier_kernel(m, g, j - 1), -1.0);
        auto Q = std::make_shared<std::vector<SampledField>>();
        for (const auto& a : nodes) {
            auto kf = SampledField::sample(g, [&](std::span<const double> x) { return K(a, x); }, K.support);
            Q->push_back(convolve(kf, psi));
        }
        const double s = std::ldexp(1.0, -j);
        const double w = std::pow(s, d);
        KernelB piece;
        piece.n = K.n;
        piece.d = d;
        piece.alpha_lo = K.alpha_lo;
        piece.alpha_hi = K.alpha_hi;
        piece.alpha_res = K.alpha_res;
        piece.v_box = X / s;
        piece.v_res = N;
        piece.cancels_in_v = true;
        piece.name = "sigma_" + std::to_string(j) + "[" + K.name + "]";
        const int n = K.n, res = K.alpha_res;
        std::vector<double> lo = K.alpha_lo, step(n);
        for (int i = 0; i < n; ++i) step[i] = K.alpha_step(i);
        piece.eval = [Q, s, w, d, n, res, lo, step](std::span<const double> a, std::span<const double> v) {
            std::size_t flat = 0;
            for (int i = 0; i < n; ++i) {
                int k = static_cast<int>(std::floor((a[i] - lo[i]) / step[i]));
                k = std::clamp(k, 0, res - 1);
                flat = flat * res + k;
            }
            double x[8];
            for (int c = 0; c < d; ++c) x[c] = s * v[c];
            return w * (*Q)[flat].at(std::span<const double>(x, d));
        };
        validate_kernel(piece);
        out.pieces.emplace_back(j, std::move(piece));
    }
    return out;
}

namespace {
// (int |a - b|, int |b|) over alpha nodes x annulus
std::pair<double, double> annulus_quad(const KernelK& a, const KernelK* b, double r_in, double r_out,
                                       int radial_nodes, int angular_nodes) {
    const int d = a.d;
    auto ax = alpha_axes(a);
    auto nodes = alpha_nodes(a, ax);
    auto sph = sphere_nodes(d, angular_nodes);
    const double dr = (r_out - r_in) / radial_nodes;
    Accumulator num, den;
    std::vector<double> x(d);
    for (const auto& al : nodes)
        for (int l = 0; l < radial_nodes; ++l) {
            double rho = r_in + (l + 0.5) * dr;
            double jac = std::pow(rho, d - 1) * dr;
            for (const auto& [th, w] : sph) {
                for (int c = 0; c < d; ++c) x[c] = rho * th[c];
                double va = a(al, x), vb = b ? (*b)(al, x) : 0.0;
                num.add(std::abs(va - vb) * jac * w);
                den.add(std::abs(vb) * jac * w);
            }
        }
    double cell = alpha_cell(ax);
    return {num.value() * cell, den.value() * cell};
}
}  // namespace

Reconstruction reconstruct(const DyadicKernel& dk, double r_in, double r_out) {
    require(!dk.pieces.empty(), "empty dyadic kernel");
    require(0 < r_in && r_in < r_out, "annulus radii must satisfy 0 < r_in < r_out");
    // piece j lives at |x| ~ 2^-j; allow two octaves either side of the range
    if (r_in < std::ldexp(1.0, -dk.j_max - 2) * (1 - 1e-12) || r_out > std::ldexp(1.0, 2 - dk.j_min) * (1 + 1e-12))
        throw ResolutionError("annulus outside the resolvable radii 2^[" + std::to_string(-dk.j_max - 2) + "," +
                              std::to_string(2 - dk.j_min) + "]");
    const auto& first = dk.pieces.front().second;
    Reconstruction rec;
    KernelK& K = rec.kernel;
    K.n = first.n;
    K.d = first.d;
    K.alpha_lo = first.alpha_lo;
    K.alpha_hi = first.alpha_hi;
    K.alpha_res = first.alpha_res;
    K.name = "reconstruction";
    double sup = 0;
    for (const auto& [j, p] : dk.pieces) sup = std::max(sup, p.v_box * std::sqrt(static_cast<double>(p.d)) / std::ldexp(1.0, j));
    K.support = sup;
    auto pieces = dk.pieces;
    auto sum_of = [](std::vector<std::pair<int, KernelB>> ps) {
        return [ps](std::span<const double> a, std::span<const double> x) {
            Accumulator acc;
            for (const auto& [j, p] : ps) {
                const double s = std::ldexp(1.0, j);
                double v[8];
                for (int c = 0; c < p.d; ++c) v[c] = s * x[c];
                acc.add(std::pow(s, p.d) * p(a, std::span<const double>(v, p.d)));
            }
            return acc.value();
        };
    };
    K.eval = sum_of(pieces);
    KernelK edge = K;
    std::vector<std::pair<int, KernelB>> edges{dk.pieces.front()};
    if (dk.pieces.size() > 1) edges.push_back(dk.pieces.back());
    edge.eval = sum_of(edges);
    rec.tail_proxy = annulus_quad(edge, nullptr, r_in, r_out, 128, 32).first;
    return rec;
}

double annulus_residual(const KernelK& a, const KernelK& b, double r_in, double r_out, int radial_nodes,
                        int angular_nodes) {
    auto [num, den] = annulus_quad(a, &b, r_in, r_out, radial_nodes, angular_nodes);
    if (den == 0.0) return num == 0.0 ? 0.0 : INFINITY;
    return num / den;
}

std::vector<std::pair<int, KernelB>> dyadic_split(const KernelB& s, double eps, int depth) {
    require(eps > 0 && eps <= 1, "eps must lie in (0, 1]");
    require(depth >= 0, "depth must be nonnegative");
    std::vector<std::pair<int, KernelB>> out;
    auto f = s.eval;
    const int d = s.d;
    auto eta0 = [](double r) { return radial_cutoff(r, 0.125, 0.25); };
    for (int m = 0; m <= depth; ++m) {
        KernelB p = s;
        p.v_box = m == 0 ? std::min(s.v_box, 0.25) : 0.25;
        p.name = s.name + "_split" + std::to_string(m);
        const double sc = std::ldexp(1.0, m);
        const double w = std::pow(sc, d);
        KernelB src = s;
        if (m == 0) {
            p.eval = [src, eta0](auto a, auto v) { return eta0(norm2(v)) * src(a, v); };
        } else {
            p.eval = [src, eta0, sc, w, d](auto a, auto v) {
                double r = norm2(v);
                double c = eta0(r) - eta0(2 * r);
                if (c == 0.0) return 0.0;
                double u[8];
                for (int k = 0; k < d; ++k) u[k] = sc * v[k];
                return c * w * src(a, std::span<const double>(u, d));
            };
        }
        out.emplace_back(m, std::move(p));
    }
    return out;
}

SplitDiagnostics split_diagnostics(const KernelB& s, const std::vector<std::pair<int, KernelB>>& pieces,
                                   double eps, double delta) {
    SplitDiagnostics dg;
    const int d = s.d;
    double num = integrate(s, [&](auto a, auto v, double val) {
        Accumulator acc;
        for (const auto& [m, p] : pieces) {
            const double t = std::ldexp(1.0, -m);
            double u[8];
            for (int k = 0; k < d; ++k) u[k] = t * v[k];
            acc.add(std::pow(t, d) * p(a, std::span<const double>(u, d)));
        }
        return std::abs(val - acc.value());
    });
    double mass = l1_norm(s);
    dg.residual = mass > 0 ? num / mass : num;
    double base = besov_norm(s, eps).total;
    dg.expected_slope = -(eps - 2 * delta);
    std::vector<double> ms, logs;
    for (const auto& [m, p] : pieces) {
        double nb = besov_norm(p, delta).total;
        dg.piece_norms.push_back(nb);
        if (m >= 1 && nb > 1e-300 * base && base > 0) {
            ms.push_back(m);
            logs.push_back(std::log2(nb));
            dg.fitted_c = std::max(dg.fitted_c, nb * std::pow(2.0, m * (eps - 2 * delta)) / base);
        }
    }
    dg.slope = fit_slope(ms, logs);
    return dg;
}

double gamma_eps(const std::vector<KernelB>& family, double eps) {
    require(!family.empty(), "empty kernel family");
    double sb = 0, sl = 0;
    for (const auto& s : family) {
        sb = std::max(sb, besov_norm(s, eps).total);
        sl = std::max(sl, l1_norm(s));
    }
    if (sl == 0.0) throw UndefinedRatio("all kernels in the family vanish");
    return sb / sl;
}

double m_quantity(const std::vector<KernelB>& family, int n, double eps, double nu) {
    require(nu >= 0, "nu must be nonnegative");
    double g = gamma_eps(family, eps);
    double sl = 0;
    for (const auto& s : family) sl = std::max(sl, l1_norm(s));
    return sl * std::pow(std::log(1 + n * g), nu);
}

}  // namespace cjlab
