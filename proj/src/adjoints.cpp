#include "cjlab/adjoints.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>

#include "cjlab/error.hpp"
#include "cjlab/numeric.hpp"

namespace cjlab {

namespace {

std::pair<double, double> interval_mul(double a, double b, double c, double d) {
    double p[4] = {a * c, a * d, b * c, b * d};
    return {*std::min_element(p, p + 4), *std::max_element(p, p + 4)};
}

std::pair<double, double> reciprocal(double a, double b) {
    if (!(a > 0 || b < 0)) throw SingularSupport("interval [" + std::to_string(a) + "," + std::to_string(b) + "] contains 0");
    return {1 / b, 1 / a};
}

void check_margin(const BoxFunction& g, double margin) {
    if (g.lo[0] > -margin && g.hi[0] < margin)
        throw SingularSupport("first coordinate support lies within the singular margin");
    if (g.lo[0] < margin && g.hi[0] > -margin)
        throw SingularSupport("first coordinate support [" + std::to_string(g.lo[0]) + "," + std::to_string(g.hi[0]) +
                              "] comes within " + std::to_string(margin) + " of 0");
}

void check_s1(double s1) {
    if (s1 == 0.0) throw SingularSupport("evaluation at s_1 = 0");
}

}  // namespace

double BoxFunction::operator()(std::span<const double> s) const {
    for (int i = 0; i < N; ++i)
        if (s[i] < lo[i] || s[i] > hi[i]) return 0.0;
    return eval(s);
}

BoxFunction from_kernel(const KernelB& s) {
    BoxFunction g;
    g.N = s.n + s.d;
    g.eval = [s](std::span<const double> p) { return s(p.subspan(0, s.n), p.subspan(s.n)); };
    g.lo = s.alpha_lo;
    g.hi = s.alpha_hi;
    for (int k = 0; k < s.d; ++k) {
        g.lo.push_back(-s.v_box);
        g.hi.push_back(s.v_box);
    }
    g.res = s.alpha_res;
    return g;
}

KernelB to_kernel(const BoxFunction& g, const KernelB& like) {
    KernelB s = like;
    const int n = like.n;
    s.alpha_lo.assign(g.lo.begin(), g.lo.begin() + n);
    s.alpha_hi.assign(g.hi.begin(), g.hi.begin() + n);
    double V = 0;
    for (int k = n; k < g.N; ++k) V = std::max({V, std::abs(g.lo[k]), std::abs(g.hi[k])});
    s.v_box = V;
    s.eval = [g, n](std::span<const double> a, std::span<const double> v) {
        double p[16];
        std::copy(a.begin(), a.end(), p);
        std::copy(v.begin(), v.end(), p + n);
        return g(std::span<const double>(p, g.N));
    };
    return s;
}

BoxFunction inversion_J(const BoxFunction& g, double margin) {
    check_margin(g, margin);
    BoxFunction out = g;
    auto [a, b] = reciprocal(g.lo[0], g.hi[0]);
    out.lo[0] = a;
    out.hi[0] = b;
    out.eval = [g](std::span<const double> s) {
        check_s1(s[0]);
        double p[16];
        std::copy(s.begin(), s.end(), p);
        p[0] = 1 / s[0];
        return g(std::span<const double>(p, g.N)) / (s[0] * s[0]);
    };
    return out;
}

BoxFunction shear_M(const BoxFunction& g, int k) {
    require(k >= 0 && k + 1 <= g.N, "shear dimension out of range");
    BoxFunction out = g;
    auto [r0, r1] = reciprocal(g.lo[0], g.hi[0]);
    for (int i = 1; i <= k; ++i) std::tie(out.lo[i], out.hi[i]) = interval_mul(g.lo[i], g.hi[i], r0, r1);
    out.eval = [g, k](std::span<const double> s) {
        check_s1(s[0]);
        double p[16];
        std::copy(s.begin(), s.end(), p);
        for (int i = 1; i <= k; ++i) p[i] = s[0] * s[i];
        return std::pow(std::abs(s[0]), k) * g(std::span<const double>(p, g.N));
    };
    return out;
}

BoxFunction shear_M_inverse(const BoxFunction& g, int k) {
    require(k >= 0 && k + 1 <= g.N, "shear dimension out of range");
    reciprocal(g.lo[0], g.hi[0]);
    BoxFunction out = g;
    for (int i = 1; i <= k; ++i) std::tie(out.lo[i], out.hi[i]) = interval_mul(g.lo[i], g.hi[i], g.lo[0], g.hi[0]);
    out.eval = [g, k](std::span<const double> s) {
        check_s1(s[0]);
        double p[16];
        std::copy(s.begin(), s.end(), p);
        for (int i = 1; i <= k; ++i) p[i] = s[i] / s[0];
        return std::pow(std::abs(s[0]), -k) * g(std::span<const double>(p, g.N));
    };
    return out;
}

BoxFunction shear_Mtilde(const BoxFunction& g, int n, int d) {
    require(n >= 1 && n + d == g.N, "Mt needs n >= 1 and N = n + d");
    BoxFunction out = g;
    auto [r0, r1] = reciprocal(g.lo[0], g.hi[0]);
    for (int i = n; i < n + d; ++i) std::tie(out.lo[i], out.hi[i]) = interval_mul(g.lo[i], g.hi[i], r0, r1);
    out.eval = [g, n, d](std::span<const double> s) {
        check_s1(s[0]);
        double p[16];
        std::copy(s.begin(), s.end(), p);
        for (int i = n; i < n + d; ++i) p[i] = s[0] * s[i];
        return std::pow(std::abs(s[0]), d) * g(std::span<const double>(p, g.N));
    };
    return out;
}

BoxFunction shear_Mtilde_inverse(const BoxFunction& g, int n, int d) {
    require(n >= 1 && n + d == g.N, "Mt needs n >= 1 and N = n + d");
    reciprocal(g.lo[0], g.hi[0]);
    BoxFunction out = g;
    for (int i = n; i < n + d; ++i) std::tie(out.lo[i], out.hi[i]) = interval_mul(g.lo[i], g.hi[i], g.lo[0], g.hi[0]);
    out.eval = [g, n, d](std::span<const double> s) {
        check_s1(s[0]);
        double p[16];
        std::copy(s.begin(), s.end(), p);
        for (int i = n; i < n + d; ++i) p[i] = s[i] / s[0];
        return std::pow(std::abs(s[0]), -d) * g(std::span<const double>(p, g.N));
    };
    return out;
}

namespace {

// midpoint sum over a box given by per-axis (lo, step, count)
double box_quad(const std::vector<double>& lo, const std::vector<double>& step, const std::vector<int>& count,
                const std::function<double(std::span<const double>)>& F) {
    const int N = static_cast<int>(lo.size());
    std::vector<int> idx(N, 0);
    std::vector<double> p(N);
    Accumulator acc;
    double w = 1;
    for (int i = 0; i < N; ++i) w *= step[i];
    do {
        for (int i = 0; i < N; ++i) p[i] = lo[i] + (idx[i] + 0.5) * step[i];
        acc.add(F(p));
    } while ([&] {
        for (int i = N - 1; i >= 0; --i) {
            if (++idx[i] < count[i]) return true;
            idx[i] = 0;
        }
        return false;
    }());
    return acc.value() * w;
}

}  // namespace

double l1_norm(const BoxFunction& g) {
    std::vector<double> step(g.N);
    for (int i = 0; i < g.N; ++i) step[i] = g.step(i);
    return box_quad(g.lo, step, std::vector<int>(g.N, g.res), [&](auto s) { return std::abs(g(s)); });
}

double frak_norm(const BoxFunction& g, double eps, int max_m) {
    require(eps >= 0 && eps <= 1, "eps must lie in [0, 1]");
    std::vector<double> step(g.N);
    for (int i = 0; i < g.N; ++i) step[i] = g.step(i);
    std::vector<int> cnt(g.N, g.res);
    double mass = 0;
    for (int i = 0; i < g.N; ++i)
        mass = std::max(mass, box_quad(g.lo, step, cnt, [&](auto s) { return std::pow(1 + std::abs(s[i]), eps) * std::abs(g(s)); }));
    double diff = 0;
    std::vector<double> sh(g.N);
    for (int m = 0; m <= max_m; ++m) {
        const double h = std::ldexp(1.0, -m);
        for (int i = 0; i < g.N; ++i) {
            if (h < step[i] * (1 - 1e-12)) continue;
            auto lo = g.lo;
            auto c = cnt;
            lo[i] -= h;
            c[i] = static_cast<int>(std::ceil((g.hi[i] - lo[i]) / step[i] - 1e-9));
            double v = box_quad(lo, step, c, [&](auto s) {
                sh.assign(s.begin(), s.end());
                sh[i] += h;
                return std::abs(g(sh) - g(s));
            });
            diff = std::max(diff, v / std::pow(h, eps));
        }
    }
    return mass + diff;
}

void validate_permutation(const Permutation& p) {
    std::vector<int> seen(p.size(), 0);
    for (int v : p) {
        require(v >= 1 && v <= static_cast<int>(p.size()), "permutation entry out of range");
        require(!seen[v - 1]++, "permutation is not a bijection");
    }
}

Permutation compose(const Permutation& a, const Permutation& b) {
    require(a.size() == b.size(), "permutation sizes differ");
    Permutation c(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[b[i] - 1];
    return c;
}

Permutation inverse(const Permutation& p) {
    Permutation q(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) q[p[i] - 1] = static_cast<int>(i) + 1;
    return q;
}

KernelB perm_first_n(const KernelB& s, const Permutation& pi) {
    require(static_cast<int>(pi.size()) == s.n, "permutation must act on the n alpha slots");
    validate_permutation(pi);
    KernelB out = s;
    auto inv = inverse(pi);
    for (int k = 0; k < s.n; ++k) {
        out.alpha_lo[k] = s.alpha_lo[inv[k] - 1];
        out.alpha_hi[k] = s.alpha_hi[inv[k] - 1];
    }
    const int n = s.n;
    out.eval = [s, pi, n](std::span<const double> a, std::span<const double> v) {
        double b[16];
        for (int i = 0; i < n; ++i) b[i] = a[pi[i] - 1];
        return s(std::span<const double>(b, n), v);
    };
    return out;
}

KernelB swap_last_two(const KernelB& s) {
    KernelB out = s;
    for (int i = 0; i < s.n; ++i) {
        out.alpha_lo[i] = 1 - s.alpha_hi[i];
        out.alpha_hi[i] = 1 - s.alpha_lo[i];
    }
    const int n = s.n, d = s.d;
    out.eval = [s, n, d](std::span<const double> a, std::span<const double> v) {
        double b[16], w[16];
        for (int i = 0; i < n; ++i) b[i] = 1 - a[i];
        for (int k = 0; k < d; ++k) w[k] = -v[k];
        return s(std::span<const double>(b, n), std::span<const double>(w, d));
    };
    return out;
}

KernelB ell_transposition(const KernelB& s) {
    require(s.n >= 1, "the transposition needs n >= 1");
    auto g = from_kernel(s);
    g = inversion_J(g, s.s_min);
    g = shear_M_inverse(g, s.n - 1);
    g = inversion_J(g);
    g = shear_Mtilde_inverse(g, s.n, s.d);
    g = inversion_J(g);
    auto out = to_kernel(g, s);
    // v is pulled back as beta_1 w: keep the input's v spacing after the stretch
    const double bmax = std::max(std::abs(out.alpha_lo[0]), std::abs(out.alpha_hi[0]));
    const double ratio = out.v_box * bmax / s.v_box;
    out.v_res = std::max(s.v_res, 2 * static_cast<int>(std::ceil(s.v_res * ratio / 2 - 1e-9)));
    return out;
}

KernelB ell_transposition_direct(const KernelB& s) {
    require(s.n >= 1, "the transposition needs n >= 1");
    check_margin(from_kernel(s), s.s_min);
    auto base = ell_transposition(s);  // box only
    const int n = s.n, d = s.d;
    base.eval = [s, n, d](std::span<const double> b, std::span<const double> w) {
        check_s1(b[0]);
        double a[16], v[16];
        a[0] = 1 / b[0];
        for (int i = 1; i < n; ++i) a[i] = b[i] / b[0];
        for (int k = 0; k < d; ++k) v[k] = b[0] * w[k];
        return std::pow(std::abs(b[0]), d - n - 1) * s(std::span<const double>(a, n), std::span<const double>(v, d));
    };
    return base;
}

nlohmann::json TransformChain::to_json() const {
    nlohmann::json j;
    j["target"] = target;
    j["links"] = nlohmann::json::array();
    for (const auto& l : links) {
        nlohmann::json e{{"type", l.type}, {"sigma", l.sigma}};
        if (!l.pi.empty()) e["pi"] = l.pi;
        j["links"].push_back(e);
    }
    return j;
}

TransformChain factor_permutation(const Permutation& p, int n) {
    require(static_cast<int>(p.size()) == n + 2, "permutation must act on n + 2 slots");
    validate_permutation(p);
    const int m = n + 2;
    Permutation id(m);
    for (int i = 0; i < m; ++i) id[i] = i + 1;

    std::vector<ChainLink> gens;
    {
        Permutation pi(n);
        for (int i = 0; i < n; ++i) pi[i] = i + 1;
        while (std::next_permutation(pi.begin(), pi.end())) {
            Permutation sg = id;
            for (int i = 0; i < n; ++i) sg[i] = pi[i];
            gens.push_back({"perm-first-n", pi, sg});
        }
        // next_permutation from sorted visits every non-identity arrangement once
        Permutation sw = id;
        std::swap(sw[n], sw[n + 1]);
        gens.push_back({"swap-last-two", {}, sw});
        if (n >= 1) {
            Permutation tr = id;
            std::swap(tr[0], tr[n]);
            gens.push_back({"transpose-1-(n+1)", {}, tr});
        }
    }

    // breadth-first over (permutation, transposition count), shortest word first; applying G after a chain with action c gives sigma_G o c
    struct Node { Permutation perm; int transpositions; int parent; int gen; };
    std::vector<Node> nodes{{id, 0, -1, -1}};
    std::map<std::pair<Permutation, int>, int> seen{{{id, 0}, 0}};
    std::size_t head = 0;
    int found = p == id ? 0 : -1;
    std::vector<int> depth{0};
    constexpr int max_len = 8;
    while (found < 0 && head < nodes.size()) {
        const int cur = static_cast<int>(head++);
        if (depth[cur] >= max_len) continue;
        for (int gi = 0; gi < static_cast<int>(gens.size()); ++gi) {
            int t = nodes[cur].transpositions + (gens[gi].type == "transpose-1-(n+1)");
            if (t > 2) continue;
            Permutation next = compose(gens[gi].sigma, nodes[cur].perm);
            if (seen.count({next, t})) continue;
            seen[{next, t}] = static_cast<int>(nodes.size());
            nodes.push_back({next, t, cur, gi});
            depth.push_back(depth[cur] + 1);
            if (next == p) { found = static_cast<int>(nodes.size()) - 1; break; }
        }
    }
    if (found < 0) throw InvalidArgument("permutation has no factorization of length <= 8 with <= 2 transpositions");
    TransformChain chain;
    chain.target = p;
    for (int k = found; nodes[k].parent >= 0; k = nodes[k].parent) chain.links.push_back(gens[nodes[k].gen]);
    std::reverse(chain.links.begin(), chain.links.end());
    return chain;
}

std::pair<KernelB, TransformChain> ell_general(const KernelB& s, const Permutation& p) {
    auto chain = factor_permutation(p, s.n);
    KernelB out = s;
    for (const auto& l : chain.links) {
        if (l.type == "perm-first-n") out = perm_first_n(out, l.pi);
        else if (l.type == "swap-last-two") out = swap_last_two(out);
        else out = ell_transposition(out);
    }
    out.name = s.name + "_adj";
    return {out, chain};
}

Gamma12 gamma12(const BoxFunction& g, int n) {
    require(n >= 1 && n <= g.N, "gamma12 needs 1 <= n <= N");
    Gamma12 r;
    r.gamma1 = inversion_J(shear_M(g, n - 1));
    r.gamma2 = inversion_J(shear_M(inversion_J(g), n - 1));
    return r;
}

}  // namespace cjlab
