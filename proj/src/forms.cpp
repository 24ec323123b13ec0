#include "cjlab/forms.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "cjlab/error.hpp"
#include "cjlab/numeric.hpp"

namespace cjlab {

nlohmann::json FormResult::to_json() const {
    return {{"value", value}, {"error_estimate", error_estimate}, {"budget", budget}, {"method", method}, {"seed", seed}};
}

void gauss_legendre(int order, std::vector<double>& nodes, std::vector<double>& weights) {
    require(order >= 1, "quadrature order must be positive");
    nodes.assign(order, 0.0);
    weights.assign(order, 0.0);
    for (int i = 0; i < order; ++i) {
        double x = std::cos(M_PI * (i + 0.75) / (order + 0.5));
        double dp = 0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1, p1 = x;
            for (int k = 2; k <= order; ++k) {
                double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = order * (x * p1 - p0) / (x * x - 1);
            double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        nodes[i] = 0.5 * (1 - x);
        weights[i] = 1.0 / ((1 - x * x) * dp * dp);
    }
}

void validate_instance(const FormInstance& inst) {
    const auto& s = inst.kernel;
    require(static_cast<int>(inst.fields.size()) == s.n + 2,
            "form with n = " + std::to_string(s.n) + " needs " + std::to_string(s.n + 2) + " fields");
    for (const auto& f : inst.fields) require(f.dim() == s.d, "field dimension does not match the kernel");
    if (inst.exponents)
        require(static_cast<int>(inst.exponents->p.size()) == s.n + 2, "exponent tuple length must be n + 2");
    require(static_cast<bool>(s.eval), "kernel closure missing");
}

namespace {

struct Axes {
    std::vector<std::vector<double>> alpha;  // per alpha node, n coords
    std::vector<std::vector<double>> v;      // per v node, d coords
    double w_alpha = 1, w_v = 1;
};

Axes midpoint_axes(const KernelB& s, int ares, int vres) {
    Axes ax;
    std::vector<int> idx(s.n, 0);
    do {
        std::vector<double> a(s.n);
        for (int i = 0; i < s.n; ++i) a[i] = s.alpha_lo[i] + (idx[i] + 0.5) * (s.alpha_hi[i] - s.alpha_lo[i]) / ares;
        ax.alpha.push_back(std::move(a));
    } while (s.n > 0 && next_index(idx, ares));
    for (int i = 0; i < s.n; ++i) ax.w_alpha *= (s.alpha_hi[i] - s.alpha_lo[i]) / ares;
    std::vector<int> vi(s.d, 0);
    const double dv = 2 * s.v_box / vres;
    do {
        std::vector<double> v(s.d);
        for (int k = 0; k < s.d; ++k) v[k] = -s.v_box + (vi[k] + 0.5) * dv;
        ax.v.push_back(std::move(v));
    } while (next_index(vi, vres));
    ax.w_v = std::pow(dv, s.d);
    return ax;
}

double tensor_sum(const KernelB& s, const std::vector<SampledField>& b, int stride, int ares, int vres) {
    const int n = s.n, d = s.d;
    auto ax = midpoint_axes(s, ares, vres);
    const std::size_t NA = ax.alpha.size(), NV = ax.v.size();
    std::vector<double> table(NA * NV);
    for (std::size_t a = 0; a < NA; ++a)
        for (std::size_t v = 0; v < NV; ++v) {
            double val = s(ax.alpha[a], ax.v[v]);
            if (!std::isfinite(val)) throw InvalidArgument("non-finite kernel sample in " + s.name);
            table[a * NV + v] = val;
        }
    const SampledField& bx = b[n + 1];
    const Grid& g = bx.grid();
    std::vector<std::size_t> xs;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (bx[i] == 0.0) continue;
        if (stride > 1) {
            auto idx = g.unflatten(i);
            if (std::any_of(idx.begin(), idx.end(), [&](int k) { return k % stride != 0; })) continue;
        }
        xs.push_back(i);
    }
    // per-axis alpha nodes are shared: node a has coords alpha_lo + (k_i + 1/2) step
    std::vector<double> a1(ares);
    const std::size_t chunks = std::min<std::size_t>(64, std::max<std::size_t>(1, xs.size()));
    std::vector<double> partial(chunks, 0.0);
    parallel_chunks(chunks, [&](std::size_t c) {
        Accumulator acc;
        std::vector<double> x(d), y(d), z(d);
        std::vector<std::vector<double>> tb(n, std::vector<double>(ares));
        std::vector<double> prod(NA);
        for (std::size_t q = c; q < xs.size(); q += chunks) {
            g.node(xs[q], x);
            const double bxv = bx[xs[q]];
            for (std::size_t vi = 0; vi < NV; ++vi) {
                const auto& v = ax.v[vi];
                for (int k = 0; k < d; ++k) y[k] = x[k] - v[k];
                double by = b[n].at(y);
                if (by == 0.0) continue;
                for (int i = 0; i < n; ++i) {
                    double step = (s.alpha_hi[i] - s.alpha_lo[i]) / ares;
                    for (int k = 0; k < ares; ++k) {
                        double al = s.alpha_lo[i] + (k + 0.5) * step;
                        for (int m = 0; m < d; ++m) z[m] = x[m] - al * v[m];
                        tb[i][k] = b[i].at(z);
                    }
                }
                Accumulator inner;
                for (std::size_t a = 0; a < NA; ++a) {
                    double kv = table[a * NV + vi];
                    if (kv == 0.0) continue;
                    double p = kv;
                    std::size_t rem = a;
                    for (int i = n - 1; i >= 0; --i) {
                        p *= tb[i][rem % ares];
                        rem /= ares;
                    }
                    inner.add(p);
                }
                acc.add(inner.value() * by * bxv);
            }
        }
        partial[c] = acc.value();
    });
    const double wx = std::pow(g.spacing() * stride, d);
    return ordered_sum(partial) * wx * ax.w_alpha * ax.w_v;
}

FormResult tensor_form(const KernelB& s, const std::vector<SampledField>& b) {
    FormResult r;
    r.method = "tensor";
    const int ares = s.n > 0 ? s.alpha_res : 1;
    double fine = tensor_sum(s, b, 1, ares, s.v_res);
    double coarse = tensor_sum(s, b, 2, std::max(1, ares / 2), std::max(1, s.v_res / 2));
    r.value = fine;
    r.error_estimate = std::abs(fine - coarse);
    r.budget = {{"alpha_res", s.alpha_res},
                {"v_res", s.v_res},
                {"x_points_per_axis", b[s.n + 1].grid().points_per_axis},
                {"error_proxy", "fine minus half-resolution"}};
    return r;
}

FormResult monte_carlo_form(const KernelB& s, const std::vector<SampledField>& b, const FormBudget& bud) {
    const int n = s.n, d = s.d;
    FormResult r;
    r.method = "montecarlo";
    r.seed = bud.seed;
    const int chunks = std::max(1, bud.chunks);
    const std::size_t per = std::max<std::size_t>(2, bud.samples / chunks);
    r.budget = {{"samples", per * chunks}, {"chunks", chunks}, {"alpha_cells", bud.alpha_cells},
                {"v_cells", bud.v_cells}, {"error_proxy", "3 standard errors"}};

    // x box: bounding box of b_{n+2}'s nonzero nodes, widened by one cell
    const SampledField& bx = b[n + 1];
    const Grid& g = bx.grid();
    std::vector<double> lo(d, INFINITY), hi(d, -INFINITY), x(d);
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (bx[i] == 0.0) continue;
        g.node(i, x);
        for (int k = 0; k < d; ++k) { lo[k] = std::min(lo[k], x[k]); hi[k] = std::max(hi[k], x[k]); }
    }
    if (!(lo[0] <= hi[0])) return r;
    for (int k = 0; k < d; ++k) {
        lo[k] = std::max(lo[k] - g.spacing(), -g.half_extent);
        hi[k] = std::min(hi[k] + g.spacing(), g.half_extent);
    }

    // importance table over alpha x v cells, defensive uniform mixture
    const int ac = n > 0 ? std::max(1, std::min(bud.alpha_cells, s.alpha_res)) : 1;
    const int vc = std::max(1, std::min(bud.v_cells, s.v_res));
    const int dims = n + d;
    std::vector<double> clo(dims), cstep(dims);
    for (int i = 0; i < n; ++i) { clo[i] = s.alpha_lo[i]; cstep[i] = (s.alpha_hi[i] - s.alpha_lo[i]) / ac; }
    for (int k = 0; k < d; ++k) { clo[n + k] = -s.v_box; cstep[n + k] = 2 * s.v_box / vc; }
    std::vector<int> res(dims);
    for (int i = 0; i < dims; ++i) res[i] = i < n ? ac : vc;
    std::size_t C = 1;
    for (int r_ : res) C *= r_;
    std::vector<double> w(C);
    {
        std::vector<int> idx(dims, 0);
        std::vector<double> p(dims);
        for (std::size_t c = 0; c < C; ++c) {
            std::size_t rem = c;
            for (int i = dims - 1; i >= 0; --i) { idx[i] = rem % res[i]; rem /= res[i]; }
            double m = 0;
            for (int corner = 0; corner < (1 << dims) + 1; ++corner) {
                for (int i = 0; i < dims; ++i) {
                    double off = corner == (1 << dims) ? 0.5 : ((corner >> i) & 1 ? 0.75 : 0.25);
                    p[i] = clo[i] + (idx[i] + off) * cstep[i];
                }
                std::span<const double> sp(p);
                m = std::max(m, std::abs(s(sp.subspan(0, n), sp.subspan(n))));
            }
            w[c] = m;
        }
    }
    double W = ordered_sum(w);
    if (W == 0.0) return r;
    std::vector<double> prob(C), cum(C);
    double run = 0;
    for (std::size_t c = 0; c < C; ++c) {
        prob[c] = 0.9 * w[c] / W + 0.1 / C;
        run += prob[c];
        cum[c] = run;
    }
    double cell_vol = 1;
    for (double st : cstep) cell_vol *= st;
    double side_vol = 1;
    for (int k = 1; k < d; ++k) side_vol *= hi[k] - lo[k];
    const double stratum = (hi[0] - lo[0]) / chunks;

    std::vector<double> means(chunks), vars(chunks);
    parallel_chunks(chunks, [&](std::size_t c) {
        std::seed_seq seq{static_cast<std::uint32_t>(bud.seed), static_cast<std::uint32_t>(bud.seed >> 32),
                          static_cast<std::uint32_t>(c)};
        std::mt19937_64 rng(seq);
        std::uniform_real_distribution<double> U(0.0, 1.0);
        std::vector<double> p(dims), xx(d), y(d), z(d);
        std::vector<int> idx(dims);
        const double vol_x = stratum * side_vol;
        double mean = 0, m2 = 0;
        for (std::size_t t = 0; t < per; ++t) {
            double u = U(rng) * run;
            std::size_t cell = std::min<std::size_t>(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin(), C - 1);
            std::size_t rem = cell;
            for (int i = dims - 1; i >= 0; --i) { idx[i] = rem % res[i]; rem /= res[i]; }
            for (int i = 0; i < dims; ++i) p[i] = clo[i] + (idx[i] + U(rng)) * cstep[i];
            xx[0] = lo[0] + (c + U(rng)) * stratum;
            for (int k = 1; k < d; ++k) xx[k] = lo[k] + U(rng) * (hi[k] - lo[k]);
            std::span<const double> sp(p);
            auto al = sp.subspan(0, n);
            auto v = sp.subspan(n);
            double val = 0;
            double kv = s(al, v);
            if (!std::isfinite(kv)) throw InvalidArgument("non-finite kernel sample in " + s.name);
            if (kv != 0.0) {
                double f = bx.at(xx);
                if (f != 0.0) {
                    for (int k = 0; k < d; ++k) y[k] = xx[k] - v[k];
                    f *= b[n].at(y);
                    for (int i = 0; i < n && f != 0.0; ++i) {
                        for (int k = 0; k < d; ++k) z[k] = xx[k] - al[i] * v[k];
                        f *= b[i].at(z);
                    }
                    val = kv * f * vol_x * cell_vol * run / prob[cell];
                }
            }
            double delta = val - mean;
            mean += delta / (t + 1);
            m2 += delta * (val - mean);
        }
        means[c] = mean;
        vars[c] = m2 / (per - 1) / per;
    });
    r.value = ordered_sum(means);
    r.error_estimate = 3 * std::sqrt(ordered_sum(vars));
    return r;
}

}  // namespace

FormResult evaluate_form(const KernelB& s, const std::vector<SampledField>& fields, const FormBudget& budget) {
    FormInstance inst{s, fields, std::nullopt};
    validate_instance(inst);
    FormMethod m = budget.method;
    if (m == FormMethod::Auto) m = (s.n + 2) * s.d <= 5 ? FormMethod::Tensor : FormMethod::MonteCarlo;
    return m == FormMethod::Tensor ? tensor_form(s, fields) : monte_carlo_form(s, fields, budget);
}

FormResult evaluate_form(const FormInstance& inst, const FormBudget& budget) {
    return evaluate_form(inst.kernel, inst.fields, budget);
}

DilatedResult evaluate_dilated(const FormInstance& inst, int j, const FormBudget& budget) {
    validate_instance(inst);
    const double t = std::ldexp(1.0, j);
    const int d = inst.kernel.d;
    DilatedResult out;
    out.lhs = evaluate_form(dilate(inst.kernel, t), inst.fields, budget);
    std::vector<SampledField> rescaled;
    for (const auto& f : inst.fields) rescaled.push_back(rescale_argument(f, 1.0 / t));
    const double c = std::pow(t, -d);
    out.cross = evaluate_form(inst.kernel, rescaled, budget);
    out.cross.value *= c;
    out.cross.error_estimate *= c;
    if (inst.exponents) {
        std::vector<SampledField> gs;
        for (std::size_t i = 0; i < rescaled.size(); ++i) {
            double p = inst.exponents->p[i];
            gs.push_back(rescaled[i].scaled(std::isinf(p) ? 1.0 : std::pow(t, -d / p)));
        }
        out.normalized = evaluate_form(inst.kernel, gs, budget);
    }
    return out;
}

void PVSpec::validate() const {
    require(inner_radius > 0 && inner_radius < outer_radius, "PV radii must satisfy 0 < inner < outer");
    require(annuli_per_decade >= 1 && radial_order >= 1 && angular_nodes >= 2 && segment_nodes >= 1,
            "PV quadrature sizes must be positive");
}

std::vector<std::pair<std::vector<double>, double>> sphere_directions(int d, int angular) {
    std::vector<std::pair<std::vector<double>, double>> out;
    if (d == 1) return {{{1.0}, 1.0}, {{-1.0}, 1.0}};
    require(d == 2, "commutators implemented for d <= 2");
    for (int q = 0; q < angular; ++q) {
        double th = 2 * M_PI * (q + 0.5) / angular;
        out.push_back({{std::cos(th), std::sin(th)}, 2 * M_PI / angular});
    }
    return out;
}

// annulus edges eps * (R/eps)^{k/K}
std::vector<double> annulus_edges(const PVSpec& pv, int per_decade) {
    int K = std::max(1, static_cast<int>(std::ceil(per_decade * std::log10(pv.outer_radius / pv.inner_radius))));
    std::vector<double> e(K + 1);
    for (int k = 0; k <= K; ++k) e[k] = pv.inner_radius * std::pow(pv.outer_radius / pv.inner_radius, double(k) / K);
    return e;
}

namespace {

double commutator_at(const std::function<double(std::span<const double>)>& kappa, const std::vector<SampledField>& a,
                     const SampledField& f, const PVSpec& pv, std::span<const double> x, int per_decade,
                     int order, int angular) {
    const int d = f.dim();
    auto dirs = sphere_directions(d, angular);
    auto edges = annulus_edges(pv, per_decade);
    std::vector<double> gn, gw;
    gauss_legendre(order, gn, gw);
    std::vector<double> y(d), z(d);
    Accumulator total;
    for (int k = static_cast<int>(edges.size()) - 2; k >= 0; --k) {
        const double r0 = edges[k], r1 = edges[k + 1];
        Accumulator ring;
        for (int q = 0; q < order; ++q) {
            const double rho = r0 + gn[q] * (r1 - r0);
            const double jac = std::pow(rho, d - 1) * gw[q] * (r1 - r0);
            for (const auto& [th, w] : dirs) {
                for (int c = 0; c < d; ++c) { z[c] = rho * th[c]; y[c] = x[c] - z[c]; }
                double fy = f.at(y);
                if (fy == 0.0) continue;
                double p = kappa(z) * fy;
                for (const auto& ai : a) p *= segment_mean(ai, x, y, pv.segment_nodes);
                ring.add(p * jac * w);
            }
        }
        total.add(ring.value());
    }
    return total.value();
}

}  // namespace

CommutatorResult d_commutator(const CZKernelSpec& kappa, const std::vector<SampledField>& a, const SampledField& f,
                              const PVSpec& pv, const std::vector<std::vector<double>>& probes) {
    pv.validate();
    require(kappa.d == f.dim(), "kernel and field dimensions differ");
    for (const auto& ai : a) require(ai.dim() == f.dim(), "coefficient dimension differs from f");
    const Grid& g = f.grid();
    CommutatorResult out;
    for (const auto& x : probes) {
        require(static_cast<int>(x.size()) == f.dim(), "probe dimension mismatch");
        for (double c : x)
            if (std::abs(c) > g.half_extent - g.spacing())
                throw InvalidArgument("probe point too close to the boundary of the field box");
        double v = commutator_at(kappa.kappa, a, f, pv, x, pv.annuli_per_decade, pv.radial_order, pv.angular_nodes);
        double c = commutator_at(kappa.kappa, a, f, pv, x, std::max(1, pv.annuli_per_decade / 2),
                                 std::max(1, pv.radial_order / 2), std::max(2, pv.angular_nodes / 2));
        // remainder inside eps is linear in eps for smooth data: twice the [eps/2, eps] ring
        PVSpec inner = pv;
        inner.outer_radius = pv.inner_radius;
        inner.inner_radius = pv.inner_radius / 2;
        double ring = commutator_at(kappa.kappa, a, f, inner, x, 1, pv.radial_order, pv.angular_nodes);
        out.values.push_back(v);
        out.errors.push_back(std::abs(v - c) + 2 * std::abs(ring));
    }
    return out;
}

CommutatorResult calderon_1d(const std::vector<SampledField>& a, const SampledField& f, const PVSpec& pv,
                             const std::vector<double>& probes) {
    require(f.dim() == 1, "the Calderon commutator is one-dimensional");
    CZKernelSpec k;
    k.d = 1;
    k.odd = true;
    k.homogeneity = -1.0;
    k.name = "1/x";
    k.kappa = [](std::span<const double> x) { return 1.0 / x[0]; };
    std::vector<std::vector<double>> pts;
    for (double p : probes) pts.push_back({p});
    return d_commutator(k, a, f, pv, pts);
}

RotationResult rotation_reduce(const std::function<double(double)>& omega, const std::vector<SampledField>& a,
                               const SampledField& f, const SampledField& g, const PVSpec& pv, int theta_nodes) {
    pv.validate();
    require(f.dim() == 2 && g.dim() == 2, "rotation identity implemented for d = 2");
    require(f.grid() == g.grid(), "f and g must share a grid");
    require(theta_nodes >= 2, "need at least two angular nodes");
    const Grid& G = f.grid();
    const double h = G.spacing();
    require(pv.inner_radius >= h, "inner radius must be at least one grid spacing");

    double om_max = 0;
    for (int q = 0; q < theta_nodes; ++q) om_max = std::max(om_max, std::abs(omega(2 * M_PI * q / theta_nodes)));
    for (int q = 0; q < theta_nodes; ++q) {
        double th = 2 * M_PI * q / theta_nodes;
        if (std::abs(omega(th + M_PI) + omega(th)) > 1e-8 * std::max(1.0, om_max))
            throw ParityError("Omega is not odd: Omega(theta + pi) != -Omega(theta) at theta = " + std::to_string(th));
    }
    RotationResult res;
    res.theta_nodes = theta_nodes;

    // lhs: lattice sum in x and y, cells cut by the annulus get fractional weights
    const int N = G.points_per_axis;
    const int kmax = static_cast<int>(std::ceil(pv.outer_radius / h)) + 1;
    struct Tap { int dx, dy; double w; };
    std::vector<Tap> taps;
    const int sub = 8;
    for (int i = -kmax; i <= kmax; ++i)
        for (int j = -kmax; j <= kmax; ++j) {
            int inside = 0;
            for (int u = 0; u < sub; ++u)
                for (int v = 0; v < sub; ++v) {
                    double zx = (i + (u + 0.5) / sub - 0.5) * h, zy = (j + (v + 0.5) / sub - 0.5) * h;
                    double r = std::hypot(zx, zy);
                    inside += r >= pv.inner_radius && r <= pv.outer_radius;
                }
            if (!inside) continue;
            double zx = i * h, zy = j * h, r2 = zx * zx + zy * zy;
            double k = omega(std::atan2(zy, zx)) / r2;
            if (k != 0.0) taps.push_back({i, j, k * inside / double(sub * sub)});
        }
    std::vector<std::size_t> xs;
    for (std::size_t i = 0; i < G.size(); ++i)
        if (g[i] != 0.0) xs.push_back(i);
    const std::size_t chunks = std::min<std::size_t>(64, std::max<std::size_t>(1, xs.size()));
    std::vector<double> part(chunks, 0.0);
    parallel_chunks(chunks, [&](std::size_t c) {
        Accumulator acc;
        double x[2], y[2];
        for (std::size_t q = c; q < xs.size(); q += chunks) {
            auto idx = G.unflatten(xs[q]);
            G.node(xs[q], x);
            Accumulator inner;
            for (const auto& t : taps) {
                int yi = idx[0] - t.dx, yj = idx[1] - t.dy;
                if (yi < 0 || yj < 0 || yi >= N || yj >= N) continue;
                double fy = f[static_cast<std::size_t>(yi) * N + yj];
                if (fy == 0.0) continue;
                y[0] = x[0] - t.dx * h;
                y[1] = x[1] - t.dy * h;
                double p = t.w * fy;
                for (const auto& ai : a) p *= segment_mean(ai, x, y, pv.segment_nodes);
                inner.add(p);
            }
            acc.add(g[xs[q]] * inner.value());
        }
        part[c] = acc.value();
    });
    res.lhs = ordered_sum(part) * h * h * h * h;

    // rhs: periodic trapezoid in theta of directional 1-D truncated commutators
    auto edges = annulus_edges(pv, pv.annuli_per_decade);
    std::vector<double> gn, gw;
    gauss_legendre(pv.radial_order, gn, gw);
    std::vector<double> per_theta(theta_nodes, 0.0);
    parallel_chunks(theta_nodes, [&](std::size_t q) {
        const double th = 2 * M_PI * q / theta_nodes;
        const double om = omega(th);
        if (om == 0.0) return;
        const double e[2] = {std::cos(th), std::sin(th)};
        Accumulator acc;
        double x[2], y[2];
        for (std::size_t xi : xs) {
            G.node(xi, x);
            Accumulator tot;
            for (int k = static_cast<int>(edges.size()) - 2; k >= 0; --k) {
                const double r0 = edges[k], r1 = edges[k + 1];
                Accumulator ring;
                for (int m = 0; m < pv.radial_order; ++m) {
                    const double t = r0 + gn[m] * (r1 - r0);
                    const double w = gw[m] * (r1 - r0) / t;
                    for (int sgn : {1, -1}) {
                        y[0] = x[0] - sgn * t * e[0];
                        y[1] = x[1] - sgn * t * e[1];
                        double fy = f.at(std::span<const double>(y, 2));
                        if (fy == 0.0) continue;
                        double p = sgn * w * fy;
                        for (const auto& ai : a) p *= segment_mean(ai, x, y, pv.segment_nodes);
                        ring.add(p);
                    }
                }
                tot.add(ring.value());
            }
            acc.add(g[xi] * tot.value());
        }
        per_theta[q] = 0.5 * (2 * M_PI / theta_nodes) * om * acc.value() * h * h;
    });
    res.rhs = ordered_sum(per_theta);
    res.gap = std::abs(res.lhs - res.rhs);
    return res;
}

PartialSums partial_sum_form(const DyadicKernel& dk, const std::vector<SampledField>& fields,
                             const FormBudget& budget) {
    PartialSums ps;
    int nmax = 0;
    for (const auto& [j, p] : dk.pieces) {
        nmax = std::max(nmax, std::abs(j));
        ps.pieces.emplace_back(j, evaluate_form(dilate(p, std::ldexp(1.0, j)), fields, budget));
    }
    double prev = 0;
    for (int N = 0; N <= nmax; ++N) {
        Accumulator v;
        double err = 0;
        for (const auto& [j, r] : ps.pieces)
            if (std::abs(j) <= N) {
                v.add(r.value);
                err += r.error_estimate;
            }
        ps.N.push_back(N);
        ps.values.push_back(v.value());
        ps.errors.push_back(err);
        ps.increments.push_back(std::abs(v.value() - prev));
        prev = v.value();
    }
    return ps;
}

}  // namespace cjlab
