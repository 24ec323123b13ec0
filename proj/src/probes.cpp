#include "cjlab/probes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "cjlab/error.hpp"
#include "cjlab/lpcalc.hpp"
#include "cjlab/numeric.hpp"
#include "cjlab/spectral.hpp"

namespace cjlab {

namespace {

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b) {
    std::seed_seq ss{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                     static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
    std::uint32_t out[2];
    ss.generate(out, out + 2);
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

std::string num(double x) {
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

double raw_bump(double q) { return std::abs(q) < 1 ? std::exp(1 - 1 / (1 - q * q)) : 0.0; }

}  // namespace

// ---- growth probe

double GrowthRow::ratio_over_bound() const {
    return bound > 0 ? ratio / bound : std::numeric_limits<double>::infinity();
}

std::string GrowthTable::to_csv() const {
    std::ostringstream os;
    os << "n,ratio,bound,ratio_over_bound,seed\n";
    for (const auto& r : rows)
        os << r.n << ',' << num(r.ratio) << ',' << num(r.bound) << ',' << num(r.ratio_over_bound()) << ',' << r.seed
           << '\n';
    return os.str();
}

nlohmann::json GrowthTable::to_json() const {
    nlohmann::json j;
    j["partial"] = partial;
    j["fitted_slope"] = fitted_slope;
    j["rows"] = nlohmann::json::array();
    for (const auto& r : rows) {
        double rob = r.ratio_over_bound();
        j["rows"].push_back({{"n", r.n},
                             {"ratio", r.ratio},
                             {"ratio_error", r.ratio_error},
                             {"kernel_l1", r.kernel_l1},
                             {"bound", r.bound},
                             {"ratio_over_bound", std::isfinite(rob) ? nlohmann::json(rob) : nlohmann::json(nullptr)},
                             {"seed", r.seed},
                             {"trials", r.trials}});
    }
    return j;
}

std::vector<double> default_exponents(int n, const std::string& scheme) {
    require(n >= 0, "n must be >= 0");
    if (scheme == "equal") return std::vector<double>(n + 2, n + 2.0);
    if (scheme == "l2") {
        std::vector<double> p(n + 2, std::numeric_limits<double>::infinity());
        p[n] = p[n + 1] = 2.0;
        return p;
    }
    throw InvalidArgument("unknown exponent scheme " + scheme + " (equal | l2)");
}

KernelB cj_box_kernel(const CZKernelSpec& kappa, int n, int alpha_res, int v_res) {
    require(std::isfinite(kappa.support), "the box kernel needs a compactly supported kappa");
    auto k = kappa.kappa;
    auto s = make_kernel(n, kappa.d, [k](auto, auto v) { return k(v); }, 0.0, 1.0, kappa.support,
                         "cj_box_" + kappa.name);
    s.alpha_res = alpha_res;
    s.v_res = v_res;
    s.cancels_in_v = kappa.odd;
    return s;
}

SampledField random_bump_field(const Grid& g, int bumps, std::uint64_t seed) {
    require(bumps >= 1, "need at least one bump");
    std::mt19937_64 rng(seed);
    const double L = g.half_extent;
    std::uniform_real_distribution<double> C(-L / 2, L / 2), R(0.075 * L, 0.25 * L);
    std::bernoulli_distribution sign(0.5);
    struct B { std::vector<double> c; double r, a; };
    std::vector<B> bs;
    double reach = 0;
    for (int k = 0; k < bumps; ++k) {
        B b;
        b.c.resize(g.dim);
        for (auto& c : b.c) c = C(rng);
        b.r = R(rng);
        b.a = sign(rng) ? 1.0 : -1.0;
        reach = std::max(reach, norm2(b.c) + b.r);
        bs.push_back(std::move(b));
    }
    return SampledField::sample(g, [&](std::span<const double> x) {
        double s = 0;
        for (const auto& b : bs) {
            double r2 = 0;
            for (int a = 0; a < g.dim; ++a) r2 += (x[a] - b.c[a]) * (x[a] - b.c[a]);
            s += b.a * raw_bump(std::sqrt(r2) / b.r);
        }
        return s;
    }, std::min(reach, L * std::sqrt(double(g.dim))));
}

GrowthTable growth_probe(const GrowthProbeConfig& cfg) {
    require(cfg.trials >= 8, "the growth probe needs at least 8 trials per n");
    require(cfg.n_min >= 0 && cfg.n_max >= cfg.n_min, "need 0 <= n_min <= n_max");
    CZKernelSpec kappa = cfg.kappa.kappa ? cfg.kappa : bump_derivative_kappa(cfg.d);
    require(kappa.d == cfg.d, "kappa dimension differs from d");
    Grid g(cfg.d, cfg.half_extent, cfg.points_per_axis);
    GrowthTable table;
    std::size_t evals = 0;
    for (int n = cfg.n_min; n <= cfg.n_max && !table.partial; ++n) {
        auto s = cj_box_kernel(kappa, n, cfg.alpha_res, cfg.v_res);
        auto p = cfg.exponents ? cfg.exponents(n) : default_exponents(n, cfg.exponent_scheme);
        require(static_cast<int>(p.size()) == n + 2, "exponent tuple must have n + 2 entries");
        ExponentTuple et(p);
        GrowthRow row;
        row.n = n;
        row.kernel_l1 = l1_norm(s);
        row.bound = n == 0 ? 0.0 : n * n * std::pow(std::log(2.0 + n), 3);
        for (int t = 0; t < cfg.trials; ++t) {
            if (cfg.max_evaluations && evals >= cfg.max_evaluations) {
                table.partial = true;
                break;
            }
            const std::uint64_t seed = derive_seed(cfg.seed, n, t);
            FormInstance inst{s, {}, et};
            double prod = 1;
            for (int i = 0; i < n + 2; ++i) {
                inst.fields.push_back(random_bump_field(g, cfg.bumps_per_field, derive_seed(seed, i, 1)));
                prod *= lp_norm(inst.fields.back(), p[i]);
            }
            FormBudget b;
            b.samples = cfg.samples;
            b.seed = seed;
            auto r = evaluate_form(inst, b);
            ++evals;
            double ratio = std::abs(r.value) / prod;
            if (row.trials == 0 || ratio > row.ratio) {
                row.ratio = ratio;
                row.ratio_error = r.error_estimate / prod;
                row.seed = seed;
            }
            ++row.trials;
        }
        if (row.trials > 0) table.rows.push_back(row);
    }
    std::vector<double> x, y;
    for (const auto& r : table.rows)
        if (r.n >= 1 && r.ratio > 0) {
            x.push_back(std::log(double(r.n)));
            y.push_back(std::log(r.ratio_over_bound()));
        }
    table.fitted_slope = fit_slope(x, y);
    return table;
}

// ---- bi-kernels

double BiKernel::operator()(std::span<const double> x, std::span<const double> y) const {
    if (diagonal_excluded) {
        double r2 = 0;
        for (int a = 0; a < d; ++a) r2 += (x[a] - y[a]) * (x[a] - y[a]);
        if (r2 < diagonal_margin * diagonal_margin) return 0.0;
    }
    return k(x, y);
}

BiKernel BiKernel::dual() const {
    BiKernel out = *this;
    auto f = k;
    out.k = [f](std::span<const double> x, std::span<const double> y) { return f(y, x); };
    out.name = name + "_dual";
    return out;
}

BiKernel convolution_bikernel(int d, std::function<double(std::span<const double>)> phi, double half_extent,
                              std::string name) {
    BiKernel K;
    K.d = d;
    K.half_extent = half_extent;
    K.name = std::move(name);
    K.k = [phi, d](std::span<const double> x, std::span<const double> y) {
        double z[8];
        for (int a = 0; a < d; ++a) z[a] = x[a] - y[a];
        return phi(std::span<const double>(z, d));
    };
    return K;
}

std::vector<std::string> builtin_bikernel_names(int d) {
    std::vector<std::string> out{"box", "cj-bump", "gaussian-tensor"};
    if (d >= 2) out.push_back("riesz");
    return out;
}

BiKernel builtin_bikernel(const std::string& name, int d) {
    require(d >= 1 && d <= 8, "bi-kernel dimension must be in 1..8");
    if (name == "box")
        // the alpha-integrated box kernel 1/2 chi_{|v| <= 1}
        return convolution_bikernel(d, [](std::span<const double> z) {
            for (double c : z)
                if (std::abs(c) > 1) return 0.0;
            return 0.5;
        }, 2.0, name);
    if (name == "cj-bump") {
        auto kap = bump_derivative_kappa(d);
        return convolution_bikernel(d, kap.kappa, 2.0, name);
    }
    if (name == "gaussian-tensor")
        return convolution_bikernel(d, [](std::span<const double> z) {
            double p = 1;
            for (double c : z) p *= std::exp(-4 * c * c);
            return z[0] * p;
        }, 2.0, name);
    if (name == "riesz") {
        require(d >= 2, "riesz kernels need d >= 2");
        auto ks = riesz_kernels(d);
        auto K = convolution_bikernel(d, ks.front().kappa, 2.0, name);
        K.diagonal_excluded = true;
        K.diagonal_margin = 0.25;
        return K;
    }
    throw InvalidArgument("unknown bi-kernel " + name);
}

namespace {

struct Lattice {
    int d;
    double h, lo;  // nodes lo + k h, k = 0..count-1 per axis
    int count;
    std::size_t size() const {
        std::size_t s = 1;
        for (int a = 0; a < d; ++a) s *= static_cast<std::size_t>(count);
        return s;
    }
    void node(std::size_t flat, double* x) const {
        for (int a = d - 1; a >= 0; --a) {
            x[a] = lo + static_cast<double>(flat % count) * h;
            flat /= count;
        }
    }
};

// grid nodes of [-L, L]^d, and a strided subset of at most max_points
std::vector<std::vector<double>> sup_points(int d, double L, int N, int max_points) {
    Lattice all{d, 2 * L / N, -L, N};
    int stride = 1;
    while (std::pow(double((N + stride - 1) / stride), d) > max_points) ++stride;
    std::vector<std::vector<double>> out;
    std::vector<int> idx(d, 0);
    const int per = (N + stride - 1) / stride;
    const int offset = (N - 1 - (per - 1) * stride) / 2;
    do {
        std::vector<double> x(d);
        for (int a = 0; a < d; ++a) x[a] = all.lo + (offset + idx[a] * stride) * all.h;
        out.push_back(std::move(x));
    } while (next_index(idx, per));
    return out;
}

struct OneSided {
    double int0 = 0, int_eps = 0, reg_lt = 0, reg_rt = 0;
};

// sup over y of x-integrals: Int^1, Int^1_eps, Reg^1_lt, Reg^1_rt
OneSided one_sided(const BiKernel& k, double eps, const SchurOptions& opt, nlohmann::json& disc) {
    const int d = k.d, N = opt.points_per_axis;
    const double L = k.half_extent, h = 2 * L / N;
    const int E = static_cast<int>(std::ceil(1.0 / h - 1e-9));
    Lattice X{d, h, -L - E * h, N + 2 * E};
    const double cell = std::pow(h, d);
    auto ys = sup_points(d, L, N, opt.max_points);
    std::vector<std::vector<double>> shifts;
    std::vector<double> mags;
    for (int m = 0; m <= opt.max_m; ++m) {
        double hm = std::ldexp(1.0, -m);
        if (hm < h * (1 - 1e-12)) break;
        for (int a = 0; a < d; ++a)
            for (int sg : {1, -1}) {
                std::vector<double> e(d, 0.0);
                e[a] = sg * hm;
                shifts.push_back(e);
                mags.push_back(hm);
            }
    }
    const std::size_t S = shifts.size();
    std::vector<OneSided> per(ys.size());
    parallel_chunks(ys.size(), [&](std::size_t q) {
        const auto& y = ys[q];
        Accumulator a0, ae;
        std::vector<Accumulator> lt(S), rt(S);
        double x[8], xs[8], ysh[8];
        for (std::size_t f = 0; f < X.size(); ++f) {
            X.node(f, x);
            std::span<const double> xv(x, d), yv(y.data(), d);
            double kv = k(xv, yv);
            double r = 0;
            for (int a = 0; a < d; ++a) r += (x[a] - y[a]) * (x[a] - y[a]);
            r = std::sqrt(r);
            a0.add(std::abs(kv));
            ae.add(std::pow(1 + r, eps) * std::abs(kv));
            for (std::size_t s = 0; s < S; ++s) {
                for (int a = 0; a < d; ++a) { xs[a] = x[a] + shifts[s][a]; ysh[a] = y[a] + shifts[s][a]; }
                lt[s].add(std::abs(k(std::span<const double>(xs, d), yv) - kv));
                rt[s].add(std::abs(k(xv, std::span<const double>(ysh, d)) - kv));
            }
        }
        OneSided o;
        o.int0 = a0.value() * cell;
        o.int_eps = ae.value() * cell;
        for (std::size_t s = 0; s < S; ++s) {
            double w = std::pow(mags[s], -eps) * cell;
            o.reg_lt = std::max(o.reg_lt, lt[s].value() * w);
            o.reg_rt = std::max(o.reg_rt, rt[s].value() * w);
        }
        per[q] = o;
    });
    OneSided out;
    for (const auto& o : per) {
        out.int0 = std::max(out.int0, o.int0);
        out.int_eps = std::max(out.int_eps, o.int_eps);
        out.reg_lt = std::max(out.reg_lt, o.reg_lt);
        out.reg_rt = std::max(out.reg_rt, o.reg_rt);
    }
    disc["spacing"] = h;
    disc["integration_half_extent"] = L + E * h;
    disc["sup_points"] = ys.size();
    disc["shifts"] = mags;
    return out;
}

}  // namespace

NormReport schur_suite(const BiKernel& k, double eps, const SchurOptions& opt) {
    require(eps >= 0 && eps <= 1, "eps must lie in [0, 1]");
    require(static_cast<bool>(k.k), "bi-kernel closure missing");
    require(opt.points_per_axis >= 4 && opt.max_points >= 1, "Schur grid too small");
    NormReport r;
    r.kind = "schur";
    r.epsilon = eps;
    nlohmann::json disc;
    auto one = one_sided(k, eps, opt, disc);
    auto inf = one_sided(k.dual(), eps, opt, disc);
    // Int^inf[k] = Int^1[k^dual], Reg^inf_lt[k] = Reg^1_rt[k^dual], Reg^inf_rt[k] = Reg^1_lt[k^dual]
    r.components["Int1_eps"] = one.int_eps;
    r.components["Intinf_eps"] = inf.int_eps;
    r.components["Reg1_lt"] = one.reg_lt;
    r.components["Reg1_rt"] = one.reg_rt;
    r.components["Reginf_lt"] = inf.reg_rt;
    r.components["Reginf_rt"] = inf.reg_lt;
    r.extras["Int1"] = one.int0;
    r.extras["Intinf"] = inf.int0;
    r.extras["Op0"] = one.int0 + inf.int0;
    disc["points_per_axis"] = opt.points_per_axis;
    disc["max_m"] = opt.max_m;
    disc["sups"] = "sampled lower bound";
    r.discretization = disc;
    r.finalize();
    r.extras["Op_eps"] = r.total;
    return r;
}

namespace {

// S[x][k] = int_{2^k <= |x-y| < 2^{k+1}} |K(x, y)| dy for x on the nodes of [-L, L]^d
struct Shells {
    int k_min, k_max;
    std::vector<std::vector<double>> x;
    std::vector<std::vector<double>> mass;  // per x, per shell
};

Shells shells(const BiKernel& K, const Lattice& Y, int N, int k_min, int k_max) {
    const int d = K.d;
    const double L = K.half_extent, h = 2 * L / N;
    Lattice Xl{d, h, -L, N};
    Shells s{k_min, k_max, {}, {}};
    s.x.resize(Xl.size());
    s.mass.assign(Xl.size(), std::vector<double>(k_max - k_min + 1, 0.0));
    const double cell = std::pow(Y.h, d);
    parallel_chunks(Xl.size(), [&](std::size_t q) {
        double x[8], y[8];
        Xl.node(q, x);
        s.x[q].assign(x, x + d);
        std::vector<Accumulator> acc(k_max - k_min + 1);
        for (std::size_t f = 0; f < Y.size(); ++f) {
            Y.node(f, y);
            double r = 0;
            for (int a = 0; a < d; ++a) r += (x[a] - y[a]) * (x[a] - y[a]);
            r = std::sqrt(r);
            if (r <= 0) continue;
            int k = static_cast<int>(std::floor(std::log2(r)));
            if (k < k_min || k > k_max) continue;
            double v = K(std::span<const double>(x, d), std::span<const double>(y, d));
            if (v != 0.0) acc[k - k_min].add(std::abs(v));
        }
        for (int k = k_min; k <= k_max; ++k) s.mass[q][k - k_min] = acc[k - k_min].value() * cell;
    });
    return s;
}

// sup over sampled pairs (y, y') and R = 2^r of R^eps int_{|x-y| >= R|y-y'|} |K(x,y) - K(x,y')| dx
double si_one(const BiKernel& K, double eps, const Lattice& X, const std::vector<std::vector<double>>& ys,
              const SIOptions& opt, double h, double reach, std::size_t& pairs) {
    const int d = K.d;
    const double cell = std::pow(X.h, d);
    std::vector<std::vector<std::vector<double>>> yp(ys.size());
    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> nd;
    int m_max = 1;
    while (std::ldexp(1.0, -(m_max + 1)) >= h) ++m_max;
    std::uniform_int_distribution<int> mdist(1, m_max);
    for (std::size_t q = 0; q < ys.size(); ++q)
        for (int p = 0; p < opt.pairs_per_point; ++p) {
            std::vector<double> u(d);
            double nu = 0;
            do {
                for (auto& c : u) c = nd(rng);
                nu = norm2(u);
            } while (nu == 0);
            double mag = std::ldexp(1.0, -mdist(rng));
            std::vector<double> y2(d);
            for (int a = 0; a < d; ++a) y2[a] = ys[q][a] + mag * u[a] / nu;
            yp[q].push_back(std::move(y2));
        }
    pairs = ys.size() * opt.pairs_per_point;
    std::vector<double> best(ys.size(), 0.0);
    parallel_chunks(ys.size(), [&](std::size_t q) {
        const auto& y = ys[q];
        double x[8];
        for (const auto& y2 : yp[q]) {
            double delta = 0;
            for (int a = 0; a < d; ++a) delta += (y2[a] - y[a]) * (y2[a] - y[a]);
            delta = std::sqrt(delta);
            // bins by floor(log2(|x-y| / delta)), levels 1..r_levels
            std::vector<Accumulator> bins(opt.r_levels + 2);
            for (std::size_t f = 0; f < X.size(); ++f) {
                X.node(f, x);
                double r = 0;
                for (int a = 0; a < d; ++a) r += (x[a] - y[a]) * (x[a] - y[a]);
                r = std::sqrt(r) / delta;
                if (r < 2) continue;
                int b = std::min(opt.r_levels + 1, static_cast<int>(std::floor(std::log2(r))));
                std::span<const double> xv(x, d);
                double diff = std::abs(K(xv, y) - K(xv, y2));
                if (diff != 0.0) bins[b].add(diff);
            }
            double tail = 0;
            for (int b = opt.r_levels + 1; b >= 1; --b) {
                tail += bins[b].value() * cell;
                if (b > opt.r_levels || std::ldexp(delta, b) > reach) continue;
                best[q] = std::max(best[q], std::pow(std::ldexp(1.0, b), eps) * tail);
            }
        }
    });
    return *std::max_element(best.begin(), best.end());
}

}  // namespace

NormReport si_ann_suite(const BiKernel& K, double eps, const SIOptions& opt) {
    require(eps >= 0 && eps <= 1, "eps must lie in [0, 1]");
    require(static_cast<bool>(K.k), "bi-kernel closure missing");
    require(opt.points_per_axis >= 4 && opt.max_points >= 1 && opt.pairs_per_point >= 1 && opt.r_levels >= 1,
            "SI options must be positive");
    const int d = K.d, N = opt.points_per_axis;
    const double L = K.half_extent, h = 2 * L / N;
    // integration over [-3L, 3L]^d covers every annulus of outer radius <= 2L around the sup points
    Lattice Y{d, h, -3 * L, 3 * N};
    const int k_min = static_cast<int>(std::ceil(std::log2(2 * h) - 1e-12));
    const int k_max = static_cast<int>(std::floor(std::log2(L) + 1e-12));
    require(k_min <= k_max, "grid too coarse for any annulus");

    NormReport r;
    r.kind = "si-ann";
    r.epsilon = eps;
    auto sx = shells(K, Y, N, k_min, k_max);
    auto sy = shells(K.dual(), Y, N, k_min, k_max);
    double ann_inf = 0, ann_one = 0;
    for (const auto& m : sx.mass) ann_inf = std::max(ann_inf, *std::max_element(m.begin(), m.end()));
    for (const auto& m : sy.mass) ann_one = std::max(ann_one, *std::max_element(m.begin(), m.end()));

    // Ann_av: centers a on the strided sup lattice, x over all nodes in B(a, R)
    auto centers = sup_points(d, L, N, opt.max_points);
    double ann_av = 0;
    const double cell = std::pow(h, d);
    for (const auto& a : centers)
        for (int k = k_min; k <= k_max; ++k) {
            const double R = std::ldexp(1.0, k);
            Accumulator acc;
            for (std::size_t q = 0; q < sx.x.size(); ++q) {
                double r2 = 0;
                for (int c = 0; c < d; ++c) r2 += (sx.x[q][c] - a[c]) * (sx.x[q][c] - a[c]);
                if (r2 <= R * R) acc.add(sx.mass[q][k - k_min]);
            }
            ann_av = std::max(ann_av, acc.value() * cell / std::pow(R, d));
        }

    auto pts = sup_points(d, L, N, opt.max_points);
    std::size_t p1 = 0, p2 = 0;
    double si1 = si_one(K, eps, Y, pts, opt, h, 2 * L, p1);
    double siinf = si_one(K.dual(), eps, Y, pts, opt, h, 2 * L, p2);

    r.components["SI1"] = si1;
    r.components["SIinf"] = siinf;
    r.components["Ann1"] = ann_one;
    r.components["Anninf"] = ann_inf;
    r.components["Ann_av"] = ann_av;
    r.extras["Vd"] = unit_ball_volume(d);
    r.discretization = {{"points_per_axis", N},
                        {"spacing", h},
                        {"integration_half_extent", 3 * L},
                        {"annulus_R", {std::ldexp(1.0, k_min), std::ldexp(1.0, k_max)}},
                        {"centers", centers.size()},
                        {"pairs", p1 + p2},
                        {"pair_seed", opt.seed},
                        {"r_levels", opt.r_levels},
                        {"sups", "sampled lower bound"}};
    r.finalize();
    return r;
}

// ---- Carleson

double carleson_norm(const CarlesonFn& w, int d, int j_min, int j_max, const CarlesonOptions& opt) {
    require(d >= 1 && d <= 3, "Carleson norm implemented for d <= 3");
    require(j_min <= j_max, "empty j range");
    require(opt.centers_per_axis >= 1 && opt.centers_per_axis % 2 == 1, "centers per axis must be odd");
    require(opt.nodes_per_axis >= 2, "need at least two nodes per axis");
    std::vector<std::vector<double>> centers;
    {
        std::vector<int> idx(d, 0);
        const int c = opt.centers_per_axis, half = c / 2;
        do {
            std::vector<double> x(d);
            for (int a = 0; a < d; ++a) x[a] = half == 0 ? 0.0 : opt.center_extent * (idx[a] - half) / half;
            centers.push_back(std::move(x));
        } while (next_index(idx, c));
    }
    const int M = opt.nodes_per_axis;
    double best = 0;
    for (int k = j_min; k <= j_max; ++k) {
        const double rho = std::ldexp(1.0, -k), step = 2 * rho / M;
        for (const auto& c : centers) {
            Accumulator acc;
            std::size_t inside = 0;
            std::vector<int> idx(d, 0);
            std::vector<double> x(d);
            do {
                double r2 = 0;
                for (int a = 0; a < d; ++a) {
                    double u = -rho + (idx[a] + 0.5) * step;
                    x[a] = c[a] + u;
                    r2 += u * u;
                }
                if (r2 > rho * rho) continue;
                ++inside;
                for (int j = k; j <= j_max; ++j) {
                    double v = w(x, j);
                    acc.add(v * v);
                }
            } while (next_index(idx, M));
            if (inside) best = std::max(best, std::sqrt(acc.value() / inside));
        }
    }
    return best;
}

// ---- Bianchini seminorm and mixing

Grid torus_grid(int d, int N) { return Grid(d, 0.5, N); }

namespace {

std::vector<int> dims_of(const Grid& g) { return std::vector<int>(g.dim, g.points_per_axis); }

// offsets in cells -> flat index on the periodic grid
std::size_t wrap_flat(std::span<const int> off, int N) {
    std::size_t f = 0;
    for (int o : off) f = f * N + static_cast<std::size_t>(((o % N) + N) % N);
    return f;
}

// normalized ball indicator of radius r; cells cut by the sphere get their covered fraction
std::vector<double> ball_mask(int d, int N, double r, int sub) {
    const double h = 1.0 / N;
    const int K = static_cast<int>(std::ceil(r / h)) + 1;
    require(2 * K + 1 <= N, "ball radius too large for the torus grid");
    std::vector<double> mask(static_cast<std::size_t>(std::pow(N, d)), 0.0);
    std::vector<int> idx(d, 0), off(d), sidx(d);
    const double half_diag = 0.5 * h * std::sqrt(double(d));
    Accumulator total;
    do {
        double c2 = 0;
        for (int a = 0; a < d; ++a) {
            off[a] = idx[a] - K;
            c2 += off[a] * h * off[a] * h;
        }
        double c = std::sqrt(c2), w;
        if (c + half_diag <= r) w = 1.0;
        else if (c - half_diag > r) w = 0.0;
        else {
            std::fill(sidx.begin(), sidx.end(), 0);
            std::size_t in = 0, all = 0;
            do {
                double z2 = 0;
                for (int a = 0; a < d; ++a) {
                    double z = (off[a] + (sidx[a] + 0.5) / sub - 0.5) * h;
                    z2 += z * z;
                }
                in += z2 <= r * r;
                ++all;
            } while (next_index(sidx, sub));
            w = double(in) / all;
        }
        if (w > 0) {
            mask[wrap_flat(off, N)] = w;
            total.add(w);
        }
    } while (next_index(idx, 2 * K + 1));
    for (auto& m : mask) m /= total.value();
    return mask;
}

void check_torus(const SampledField& f) {
    const Grid& g = f.grid();
    require(g.half_extent == 0.5, "torus fields live on Grid(d, 1/2, N)");
}

}  // namespace

double bianchini_seminorm(const SampledField& f, double eps, const BianchiniOptions& opt) {
    require(eps > 0 && eps < 0.25, "eps must lie in (0, 1/4)");
    require(opt.r_panels_per_octave >= 1 && opt.r_order >= 1 && opt.mask_sub >= 1, "quadrature sizes must be positive");
    check_torus(f);
    const Grid& g = f.grid();
    const int N = g.points_per_axis, d = g.dim;
    const auto dims = dims_of(g);
    const double lo = std::log(eps), hi = std::log(0.25);
    const int octaves = std::max(1, static_cast<int>(std::ceil(std::log2(0.25 / eps) - 1e-12)));
    const int panels = octaves * opt.r_panels_per_octave;
    std::vector<double> gn, gw;
    gauss_legendre(opt.r_order, gn, gw);
    const double cell = g.cell_volume();
    Accumulator acc;
    for (int p = 0; p < panels; ++p) {
        const double u0 = lo + (hi - lo) * p / panels, u1 = lo + (hi - lo) * (p + 1) / panels;
        for (int q = 0; q < opt.r_order; ++q) {
            const double r = std::exp(u0 + gn[q] * (u1 - u0));
            auto mask = ball_mask(d, N, r, opt.mask_sub);
            auto avg = spectral::circular_convolve(mask, f.values(), dims);
            Accumulator dev;
            for (std::size_t i = 0; i < avg.size(); ++i) dev.add(std::abs(f[i] - avg[i]));
            acc.add(gw[q] * (u1 - u0) * dev.value() * cell);
        }
    }
    return acc.value();
}

MembershipFn indicator_membership(const SampledField& indicator) {
    check_torus(indicator);
    return [indicator](std::span<const double> x) {
        const Grid& g = indicator.grid();
        const int N = g.points_per_axis;
        std::size_t f = 0;
        for (int a = 0; a < g.dim; ++a) {
            // x in [0,1) -> node -1/2 + k/N representing x - floor(x + 1/2)
            double u = x[a] - std::floor(x[a]);
            if (u >= 0.5) u -= 1.0;
            int k = static_cast<int>(std::lround((u + 0.5) * N)) % N;
            f = f * N + k;
        }
        return indicator[f] > 0.5;
    };
}

void check_flow(const FlowSpec& flow, int samples) {
    require(flow.d >= 1 && flow.d <= 3, "flows implemented for d <= 3");
    require(static_cast<bool>(flow.b) && static_cast<bool>(flow.A), "flow needs b and A");
    require(flow.T >= 0 && std::isfinite(flow.T), "final time must be finite and >= 0");
    require(flow.time_steps >= 1, "need at least one time step");
    const int d = flow.d;
    std::mt19937_64 rng(20240611);
    std::uniform_real_distribution<double> U(0, 1);
    const double dl = 1e-5;
    std::vector<double> x(d), xp(d), bp(d), bm(d), b0(d), b1(d);
    for (int s = 0; s < samples; ++s) {
        for (auto& c : x) c = U(rng);
        const double t = flow.T * U(rng);
        double div = 0;
        for (int a = 0; a < d; ++a) {
            xp = x;
            xp[a] += dl;
            flow.b(xp, t, bp);
            xp[a] -= 2 * dl;
            flow.b(xp, t, bm);
            div += (bp[a] - bm[a]) / (2 * dl);
        }
        if (std::abs(div) > 1e-6)
            throw InvalidArgument("vector field is not divergence free: div b = " + std::to_string(div));
        flow.b(x, t, b0);
        for (int a = 0; a < d; ++a) {
            xp = x;
            xp[a] += 1.0;
            flow.b(xp, t, b1);
            for (int c = 0; c < d; ++c)
                if (std::abs(b1[c] - b0[c]) > 1e-9 * (1 + std::abs(b0[c])))
                    throw InvalidArgument("vector field is not periodic");
        }
    }
}

SampledField transported_indicator(const FlowSpec& flow, double t, int steps, const Grid& g) {
    const int d = g.dim;
    require(d == flow.d, "grid and flow dimensions differ");
    require(steps >= 0 && (steps > 0 || t == 0), "need steps > 0 for t > 0");
    std::vector<double> vals(g.size());
    const std::size_t chunks = std::min<std::size_t>(64, g.size());
    parallel_chunks(chunks, [&](std::size_t c) {
        std::vector<double> X(d), Y(d), k1(d), k2(d), k3(d), k4(d);
        for (std::size_t i = c; i < g.size(); i += chunks) {
            g.node(i, X);
            for (auto& v : X) v = v - std::floor(v);
            // backward from t to 0
            const double dt = steps ? t / steps : 0.0;
            double s = t;
            for (int k = 0; k < steps; ++k) {
                const double hs = -dt;
                flow.b(X, s, k1);
                for (int a = 0; a < d; ++a) Y[a] = X[a] + 0.5 * hs * k1[a];
                flow.b(Y, s + 0.5 * hs, k2);
                for (int a = 0; a < d; ++a) Y[a] = X[a] + 0.5 * hs * k2[a];
                flow.b(Y, s + 0.5 * hs, k3);
                for (int a = 0; a < d; ++a) Y[a] = X[a] + hs * k3[a];
                flow.b(Y, s + hs, k4);
                for (int a = 0; a < d; ++a) X[a] += hs / 6 * (k1[a] + 2 * k2[a] + 2 * k3[a] + k4[a]);
                s += hs;
            }
            for (auto& v : X) v = v - std::floor(v);
            vals[i] = flow.A(X) ? 1.0 : 0.0;
        }
    });
    return SampledField(g, std::move(vals), 1.0);
}

namespace {

// cell averages of z_i |z|^{-d-2} on eps <= |z| <= 1/4, periodic layout, one array per component
std::vector<std::vector<double>> mixing_taps(int d, int N, double eps, int sub) {
    const double h = 1.0 / N, rmax = 0.25;
    const int K = static_cast<int>(std::ceil(rmax / h)) + 1;
    require(2 * K + 1 <= N, "torus grid too coarse for the mixing kernel");
    const std::size_t size = static_cast<std::size_t>(std::pow(N, d));
    std::vector<std::vector<double>> taps(d, std::vector<double>(size, 0.0));
    const double half_diag = 0.5 * h * std::sqrt(double(d));
    std::vector<int> idx(d, 0), off(d), sidx(d);
    std::vector<double> z(d), acc(d);
    do {
        double c2 = 0;
        for (int a = 0; a < d; ++a) {
            off[a] = idx[a] - K;
            c2 += off[a] * h * off[a] * h;
        }
        const double c = std::sqrt(c2);
        if (c + half_diag < eps || c - half_diag > rmax) continue;
        const bool cut = c - half_diag < eps || c + half_diag > rmax;
        const int s = cut ? sub : 1;
        std::fill(acc.begin(), acc.end(), 0.0);
        std::fill(sidx.begin(), sidx.end(), 0);
        std::size_t all = 0;
        do {
            double r2 = 0;
            for (int a = 0; a < d; ++a) {
                z[a] = (off[a] + (s == 1 ? 0.0 : (sidx[a] + 0.5) / s - 0.5)) * h;
                r2 += z[a] * z[a];
            }
            ++all;
            const double r = std::sqrt(r2);
            if (r < eps || r > rmax) continue;
            const double w = std::pow(r, -d - 2);
            for (int a = 0; a < d; ++a) acc[a] += z[a] * w;
        } while (next_index(sidx, s));
        const std::size_t f = wrap_flat(off, N);
        for (int a = 0; a < d; ++a) taps[a][f] = acc[a] / all;
    } while (next_index(idx, 2 * K + 1));
    return taps;
}

}  // namespace

std::string mixing_csv_header() { return "eps,T,lhs,rhs,gap,resolution\n"; }

std::string MixingResult::csv_row() const {
    return num(eps) + "," + num(T) + "," + num(lhs) + "," + num(rhs) + "," + num(gap) + "," + std::to_string(resolution) +
           "\n";
}

nlohmann::json MixingResult::to_json() const {
    return {{"eps", eps},   {"T", T},
            {"lhs", lhs},   {"rhs", rhs},
            {"gap", gap},   {"relative_gap", relative_gap},
            {"resolution", resolution}, {"time_steps", time_steps}};
}

MixingResult mixing_identity_check(const FlowSpec& flow, double eps, const MixingOptions& opt) {
    require(eps > 0 && eps < 0.25, "eps must lie in (0, 1/4)");
    check_flow(flow, opt.divergence_samples);
    const int d = flow.d, N = opt.points_per_axis, K = flow.time_steps;
    Grid g = torus_grid(d, N);
    const double h = g.spacing(), dt = flow.T / K, cell = g.cell_volume();

    auto b_at = [&](double t, std::vector<std::vector<double>>& out) {
        out.assign(d, std::vector<double>(g.size()));
        std::vector<double> x(d), b(d);
        for (std::size_t i = 0; i < g.size(); ++i) {
            g.node(i, x);
            flow.b(x, t, b);
            for (int a = 0; a < d; ++a) out[a][i] = b[a];
        }
    };
    std::vector<std::vector<double>> bt;
    double bmax = 0;
    for (int k = 0; k <= K; ++k) {
        b_at(k * dt, bt);
        for (const auto& c : bt)
            for (double v : c) bmax = std::max(bmax, std::abs(v));
    }
    if (bmax * dt / h > opt.cfl_limit)
        throw TimeStepError("advection step too large: max|b| dt / h = " + std::to_string(bmax * dt / h) +
                            " exceeds " + std::to_string(opt.cfl_limit));

    const auto dims = dims_of(g);
    auto taps = mixing_taps(d, N, eps, 16);
    const double Vd = unit_ball_volume(d);
    std::vector<double> density(K + 1, 0.0);
    SampledField first, last;
    for (int k = 0; k <= K; ++k) {
        auto ind = transported_indicator(flow, k * dt, k, g);
        if (k == 0) first = ind;
        if (k == K) last = ind;
        b_at(k * dt, bt);
        bool moving = false;
        for (int a = 0; a < d && !moving; ++a)
            for (double v : bt[a])
                if (v != 0.0) { moving = true; break; }
        if (!moving) continue;
        std::vector<double> f(g.size());
        for (std::size_t i = 0; i < f.size(); ++i) f[i] = ind[i] - 0.5;
        Accumulator acc;
        for (int a = 0; a < d; ++a) {
            auto conv = spectral::circular_convolve(taps[a], f, dims);
            for (std::size_t i = 0; i < f.size(); ++i) acc.add(f[i] * bt[a][i] * conv[i]);
        }
        // 2 int f b_i (K_i * f): the y-part of <x - y, b(x) - b(y)> gives the same term again
        density[k] = 2.0 / Vd * 2.0 * acc.value() * cell * cell;
    }
    Accumulator rhs;
    for (int k = 0; k <= K; ++k) rhs.add((k == 0 || k == K ? 0.5 : 1.0) * dt * density[k]);

    MixingResult res;
    res.eps = eps;
    res.T = flow.T;
    res.resolution = N;
    res.time_steps = K;
    res.lhs = bianchini_seminorm(last, eps, opt.bianchini) - bianchini_seminorm(first, eps, opt.bianchini);
    res.rhs = rhs.value();
    res.gap = std::abs(res.lhs - res.rhs);
    res.relative_gap = res.gap / std::max({std::abs(res.lhs), std::abs(res.rhs), 1e-8});
    return res;
}

// ---- Bressan trilinear form

namespace {

double bressan_sum(const std::vector<SampledField>& v, const SampledField& f, const SampledField& g, const PVSpec& pv,
                   int per_decade, int order, int angular) {
    const int d = f.dim();
    auto dirs = sphere_directions(d, angular);
    auto edges = annulus_edges(pv, per_decade);
    std::vector<double> gn, gw;
    gauss_legendre(order, gn, gw);
    const Grid& G = g.grid();
    std::vector<std::size_t> xs;
    for (std::size_t i = 0; i < G.size(); ++i)
        if (g[i] != 0.0) xs.push_back(i);
    const std::size_t chunks = std::min<std::size_t>(64, std::max<std::size_t>(1, xs.size()));
    std::vector<double> part(chunks, 0.0);
    parallel_chunks(chunks, [&](std::size_t c) {
        std::vector<double> x(d), y(d), vx(d);
        Accumulator acc;
        for (std::size_t q = c; q < xs.size(); q += chunks) {
            G.node(xs[q], x);
            for (int a = 0; a < d; ++a) vx[a] = v[a].at(x);
            Accumulator tot;
            for (int k = static_cast<int>(edges.size()) - 2; k >= 0; --k) {
                const double r0 = edges[k], r1 = edges[k + 1];
                Accumulator ring;
                for (int m = 0; m < order; ++m) {
                    const double rho = r0 + gn[m] * (r1 - r0);
                    // <v(x) - v(y), x - y> |x-y|^{-d-2} rho^{d-1} = <v(x) - v(y), omega> rho^{-2}
                    const double w = gw[m] * (r1 - r0) / (rho * rho);
                    for (const auto& [om, wo] : dirs) {
                        for (int a = 0; a < d; ++a) y[a] = x[a] - rho * om[a];
                        double fy = f.at(y);
                        if (fy == 0.0) continue;
                        double ip = 0;
                        for (int a = 0; a < d; ++a) ip += (vx[a] - v[a].at(y)) * om[a];
                        ring.add(ip * fy * w * wo);
                    }
                }
                tot.add(ring.value());
            }
            acc.add(g[xs[q]] * tot.value());
        }
        part[c] = acc.value();
    });
    return ordered_sum(part) * G.cell_volume();
}

}  // namespace

TrilinearResult bressan_trilinear(const std::vector<SampledField>& v, const SampledField& f, const SampledField& g,
                                  const PVSpec& pv) {
    pv.validate();
    const int d = f.dim();
    require(g.dim() == d && static_cast<int>(v.size()) == d, "v needs d components on R^d");
    for (const auto& c : v) require(c.dim() == d, "v component dimension mismatch");
    TrilinearResult r;
    r.value = bressan_sum(v, f, g, pv, pv.annuli_per_decade, pv.radial_order, pv.angular_nodes);
    double coarse = bressan_sum(v, f, g, pv, std::max(1, pv.annuli_per_decade / 2), std::max(1, pv.radial_order / 2),
                                std::max(2, pv.angular_nodes / 2));
    PVSpec inner = pv;
    inner.outer_radius = pv.inner_radius;
    inner.inner_radius = pv.inner_radius / 2;
    double ring = bressan_sum(v, f, g, inner, 1, pv.radial_order, pv.angular_nodes);
    r.error_estimate = std::abs(r.value - coarse) + 2 * std::abs(ring);
    return r;
}

double jacobian_lp_norm(const std::vector<SampledField>& v, double p) {
    require(!v.empty(), "empty vector field");
    const Grid& g = v[0].grid();
    const int d = g.dim, N = g.points_per_axis;
    require(static_cast<int>(v.size()) == d, "v needs d components");
    const double h = g.spacing();
    std::vector<double> frob(g.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) {
        auto idx = g.unflatten(i);
        double s = 0;
        for (int c = 0; c < d; ++c)
            for (int a = 0; a < d; ++a) {
                auto ip = idx, im = idx;
                ip[a] = std::min(N - 1, idx[a] + 1);
                im[a] = std::max(0, idx[a] - 1);
                double der = (v[c][g.flatten(ip)] - v[c][g.flatten(im)]) / ((ip[a] - im[a]) * h);
                s += der * der;
            }
        frob[i] = std::sqrt(s);
    }
    return lp_norm(SampledField(g, std::move(frob), g.half_extent * std::sqrt(double(d)) + 1), p);
}

}  // namespace cjlab
