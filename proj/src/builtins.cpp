#include "cjlab/builtins.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "cjlab/error.hpp"
#include "cjlab/numeric.hpp"
#include "cjlab/probes.hpp"

namespace cjlab {

namespace {

double bump(double t) { return std::abs(t) < 1 ? std::exp(-1 / (1 - t * t)) : 0.0; }

// d/dv of a skewed bump: mean zero, neither even nor odd
double dskew(double v) {
    if (std::abs(v) >= 1) return 0.0;
    double q = 1 - v * v;
    return bump(v) * (0.5 - (1 + 0.5 * v) * 2 * v / (q * q));
}

Permutation identity(int m) {
    Permutation p(m);
    for (int i = 0; i < m; ++i) p[i] = i + 1;
    return p;
}

}  // namespace

std::vector<std::string> builtin_kernel_names() { return {"box", "cj-bump", "gaussian-tensor"}; }

KernelB builtin_kernel(const std::string& name, int n, int d, int res) {
    require(n >= 0 && n <= 6, "n must lie in 0..6");
    require(d >= 1 && d <= 3, "d must lie in 1..3");
    require(res >= 2, "resolution must be >= 2");
    KernelB s;
    if (name == "box") {
        const double c = std::ldexp(1.0, -d);
        s = make_kernel(n, d, [c](auto, auto) { return c; }, 0.0, 1.0, 1.0, "box");
    } else if (name == "cj-bump") {
        return cj_box_kernel(bump_derivative_kappa(d), n, res, res);
    } else if (name == "gaussian-tensor") {
        s = make_kernel(n, d, [](auto, auto v) {
            double p = v[0];
            for (double x : v) p *= std::exp(-4 * x * x);
            return p;
        }, 0.0, 1.0, 2.0, "gaussian-tensor");
        s.cancels_in_v = true;
    } else if (name == "riesz") {
        throw InvalidArgument("riesz is singular at v = 0 and has no sigma(alpha, v) form; use knorm, commutator or schur");
    } else {
        throw InvalidArgument("unknown kernel " + name + " (box | cj-bump | gaussian-tensor)");
    }
    s.alpha_res = res;
    s.v_res = res;
    return s;
}

CZKernelSpec builtin_kappa(const std::string& name, int d) {
    require(d >= 1 && d <= 3, "d must lie in 1..3");
    if (name == "cj-bump") return bump_derivative_kappa(d);
    if (name == "riesz") {
        if (d >= 2) return riesz_kernels(d).front();
        CZKernelSpec k;
        k.d = 1;
        k.kappa = [](std::span<const double> x) { return 1.0 / x[0]; };
        k.homogeneity = -1.0;
        k.odd = true;
        k.name = "hilbert";
        return k;
    }
    if (name == "gaussian-tensor") {
        CZKernelSpec k;
        k.d = d;
        k.kappa = [](std::span<const double> x) {
            double p = x[0];
            for (double c : x) p *= std::exp(-4 * c * c);
            return p;
        };
        k.odd = true;
        k.support = 2.5;
        k.name = "gaussian-tensor";
        return k;
    }
    throw InvalidArgument("unknown convolution kernel " + name + " (riesz | cj-bump | gaussian-tensor)");
}

KernelB adjoint_test_kernel(int n, int d) {
    require(n >= 1 && n <= 3, "adjoint test kernel needs 1 <= n <= 3");
    require(d >= 1 && d <= 2, "adjoint test kernel needs d in {1, 2}");
    auto s = make_kernel(n, d, [n, d](auto a, auto v) {
        double p = bump((a[0] - 1.625) / 0.375) * dskew(v[0]);
        for (int i = 1; i < n; ++i) p *= bump(a[i] - 3.5) * (1 + 0.3 * a[0] - 0.1 * a[i]);
        for (int k = 1; k < d; ++k) p *= bump(v[k]);
        return p;
    }, 0.0, 1.0, 1.0, "adjoint_test");
    s.alpha_lo.assign(n, 2.5);
    s.alpha_hi.assign(n, 4.5);
    s.alpha_lo[0] = 1.25;
    s.alpha_hi[0] = 2.0;
    s.cancels_in_v = true;
    s.alpha_res = n == 1 ? 16 : 12;
    s.v_res = 128;
    return s;
}

std::vector<SampledField> smooth_random_fields(const Grid& g, int count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> C(-0.4, 0.4), R(0.6, 1.2), A(-2, 2);
    std::vector<SampledField> out;
    for (int i = 0; i < count; ++i) {
        std::vector<double> c(g.dim);
        for (auto& x : c) x = C(rng);
        const double r = R(rng), amp = A(rng);
        out.push_back(SampledField::sample(g, [&](std::span<const double> x) {
            double q = 0;
            for (int k = 0; k < g.dim; ++k) q += (x[k] - c[k]) * (x[k] - c[k]);
            return amp * bump(std::sqrt(q) / r);
        }, norm2(c) + r));
    }
    return out;
}

Permutation random_generator_word(int n, int length, std::uint64_t seed) {
    require(n >= 1, "n must be >= 1");
    require(length >= 2, "word length must be >= 2");
    std::mt19937_64 rng(seed);
    const int m = n + 2;
    const int kinds = n >= 2 ? 3 : 2;
    // redraw words that collapse to fewer than two generators
    for (;;) {
        Permutation acc = identity(m);
        int transpositions = 0, prev = -1;
        for (int k = 0; k < length; ++k) {
            int kind;
            do kind = std::uniform_int_distribution<int>(0, kinds - 1)(rng);
            while ((kind == prev && kind != 2) || (kind == 1 && transpositions >= 2));
            prev = kind;
            Permutation g = identity(m);
            if (kind == 0) {
                std::swap(g[n], g[n + 1]);
            } else if (kind == 1) {
                std::swap(g[0], g[n]);
                ++transpositions;
            } else {
                Permutation pi = identity(n);
                while (pi == identity(n)) std::shuffle(pi.begin(), pi.end(), rng);
                std::copy(pi.begin(), pi.end(), g.begin());
            }
            acc = compose(g, acc);
        }
        if (factor_permutation(acc, n).links.size() >= 2) return acc;
    }
}

Permutation parse_permutation(const std::string& spec, int n, std::uint64_t seed) {
    const int m = n + 2;
    std::istringstream is(spec);
    std::string head;
    is >> head;
    Permutation p = identity(m);
    auto read_ints = [&](std::istream& s) {
        std::vector<int> v;
        int x;
        while (s >> x) v.push_back(x);
        if (!s.eof()) throw InvalidArgument("malformed permutation '" + spec + "'");
        return v;
    };
    if (head == "swap") {
        std::swap(p[n], p[n + 1]);
    } else if (head == "random") {
        p = random_generator_word(n, 4, seed);
    } else if (head == "transpose") {
        auto v = read_ints(is);
        require(v.size() == 2, "transpose needs two slots");
        require(v[0] >= 1 && v[0] <= m && v[1] >= 1 && v[1] <= m && v[0] != v[1],
                "transpose slots must be distinct and lie in 1.." + std::to_string(m));
        std::swap(p[v[0] - 1], p[v[1] - 1]);
    } else {
        std::istringstream all(head == "perm" ? spec.substr(spec.find("perm") + 4) : spec);
        p = read_ints(all);
        require(static_cast<int>(p.size()) == m, "permutation must list " + std::to_string(m) + " images");
    }
    validate_permutation(p);
    return p;
}

nlohmann::json AdjointCheck::to_json() const {
    return {{"perm", perm},
            {"chain", chain.to_json()},
            {"transformed", transformed.to_json()},
            {"permuted", permuted.to_json()},
            {"gap", gap},
            {"tolerance", tolerance},
            {"pass", pass}};
}

AdjointCheck adjoint_check(const KernelB& s, const Permutation& p, const std::vector<SampledField>& b,
                           const FormBudget& budget, double factor) {
    require(static_cast<int>(b.size()) == s.n + 2, "adjoint check needs n + 2 fields");
    AdjointCheck r;
    r.perm = p;
    auto [out, chain] = ell_general(s, p);
    r.chain = chain;
    std::vector<SampledField> pb;
    for (int v : p) pb.push_back(b[v - 1]);
    r.transformed = evaluate_form(out, b, budget);
    r.permuted = evaluate_form(s, pb, budget);
    r.gap = std::abs(r.transformed.value - r.permuted.value);
    r.tolerance = factor * (r.transformed.error_estimate + r.permuted.error_estimate);
    r.pass = r.gap <= r.tolerance;
    return r;
}

}  // namespace cjlab
