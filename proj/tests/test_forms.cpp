#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cjlab/error.hpp"
#include "cjlab/forms.hpp"
#include "cjlab/numeric.hpp"

using namespace cjlab;

namespace {

SampledField bump_field(const Grid& g, std::vector<double> c, double r, double amp = 1.0) {
    double rc = norm2(c);
    return SampledField::sample(g, [=](std::span<const double> x) {
        double q = 0;
        for (int k = 0; k < g.dim; ++k) q += (x[k] - c[k]) * (x[k] - c[k]);
        q = std::sqrt(q) / r;
        return q < 1 ? amp * std::exp(-1 / (1 - q * q)) : 0.0;
    }, rc + r);
}

KernelB smooth_form_kernel(int n, int d) {
    auto s = make_kernel(n, d, [n, d](auto a, auto v) {
        double w = 1;
        for (int i = 0; i < n; ++i) w *= std::sin(M_PI * a[i]) * (1 + a[i]);
        double r2 = 0;
        for (int k = 0; k < d; ++k) r2 += v[k] * v[k];
        return w * (0.3 + v[0]) * std::exp(-3 * r2);
    }, 0.0, 1.0, 1.5, "smooth");
    s.alpha_res = 16;
    s.v_res = 48;
    return s;
}

std::vector<SampledField> random_fields(const Grid& g, int count, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> U(-0.4, 0.4), A(0.5, 1.5);
    std::vector<SampledField> out;
    for (int i = 0; i < count; ++i) {
        std::vector<double> c(g.dim);
        for (auto& x : c) x = U(rng);
        out.push_back(bump_field(g, c, 0.7, A(rng) * (i % 2 ? -1 : 1)));
    }
    return out;
}

}  // namespace

TEST(GaussLegendre, ExactForPolynomials) {
    std::vector<double> x, w;
    for (int n : {1, 3, 8}) {
        gauss_legendre(n, x, w);
        for (int p = 0; p < 2 * n; ++p) {
            double s = 0;
            for (int i = 0; i < n; ++i) s += w[i] * std::pow(x[i], p);
            EXPECT_NEAR(s, 1.0 / (p + 1), 1e-14) << n << " " << p;
        }
    }
}

TEST(EvaluateForm, ZeroLastFieldGivesZero) {
    Grid g(1, 2.0, 64);
    auto s = smooth_form_kernel(1, 1);
    auto b = bump_field(g, {0.0}, 0.8);
    auto z = SampledField::zeros(g);
    EXPECT_EQ(evaluate_form(s, {b, b, z}).value, 0.0);
    FormBudget mc;
    mc.method = FormMethod::MonteCarlo;
    mc.samples = 1 << 12;
    EXPECT_EQ(evaluate_form(s, {b, b, z}, mc).value, 0.0);
}

TEST(EvaluateForm, BoxOracle) {
    Grid g(1, 2.0, 512);
    auto s = make_kernel(0, 1, [](auto, auto v) { return std::abs(v[0]) <= 1 ? 0.5 : 0.0; }, 0, 0, 1.0);
    s.v_res = 512;
    auto chi = SampledField::sample(g, [](auto x) { return x[0] >= 0 && x[0] <= 1 ? 1.0 : 0.0; }, 1.0);
    auto r = evaluate_form(s, {chi, chi});
    EXPECT_EQ(r.method, "tensor");
    EXPECT_NEAR(r.value, 0.5, 4 * g.spacing());
    EXPECT_GE(r.error_estimate, 0.0);
}

TEST(EvaluateForm, WrongFieldCount) {
    Grid g(1, 2.0, 64);
    auto b = bump_field(g, {0.0}, 0.8);
    EXPECT_THROW(evaluate_form(smooth_form_kernel(1, 1), {b, b}), InvalidArgument);
}

TEST(EvaluateForm, NonFiniteKernelRejected) {
    Grid g(1, 2.0, 64);
    auto b = bump_field(g, {0.0}, 0.8);
    auto s = smooth_form_kernel(1, 1);
    s.eval = [](auto, auto) { return NAN; };
    EXPECT_THROW(evaluate_form(s, {b, b, b}), InvalidArgument);
}

TEST(EvaluateForm, MonteCarloAgreesWithTensor) {
    Grid g(1, 2.0, 256);
    std::mt19937_64 rng(5);
    auto s = smooth_form_kernel(1, 1);
    auto b = random_fields(g, 3, rng);
    auto t = evaluate_form(s, b);
    FormBudget mc;
    mc.method = FormMethod::MonteCarlo;
    auto m = evaluate_form(s, b, mc);
    EXPECT_EQ(m.method, "montecarlo");
    EXPECT_LE(std::abs(t.value - m.value), t.error_estimate + m.error_estimate);
}

TEST(EvaluateForm, MonteCarloDeterministicAcrossThreads) {
    Grid g(2, 2.0, 64);
    std::mt19937_64 rng(9);
    auto s = smooth_form_kernel(1, 2);
    auto b = random_fields(g, 3, rng);
    FormBudget mc;
    mc.samples = 1 << 14;
    mc.seed = 77;
    setenv("CJLAB_THREADS", "1", 1);
    auto a = evaluate_form(s, b, mc);
    setenv("CJLAB_THREADS", "4", 1);
    auto c = evaluate_form(s, b, mc);
    unsetenv("CJLAB_THREADS");
    EXPECT_EQ(a.value, c.value);
    EXPECT_EQ(a.error_estimate, c.error_estimate);
    EXPECT_EQ(a.to_json()["seed"], 77);
}

TEST(EvaluateForm, HolderBound) {
    std::mt19937_64 rng(11);
    std::vector<std::vector<double>> tuples{{3, 3, 3}, {2, 4, 4}, {1.5, 6, 6}};
    for (int d : {1, 2}) {
        Grid g(d, 2.0, d == 1 ? 128 : 48);
        auto s = smooth_form_kernel(1, d);
        double l1 = l1_norm(s);
        for (int k = 0; k < 5; ++k) {
            auto b = random_fields(g, 3, rng);
            FormBudget bud;
            bud.samples = 1 << 16;
            bud.seed = k;
            auto r = evaluate_form(s, b, bud);
            for (const auto& t : tuples) {
                ExponentTuple e(t);
                double bound = l1;
                for (int i = 0; i < 3; ++i) bound *= lp_norm(b[i], e.p[i]);
                EXPECT_LE(std::abs(r.value), bound + r.error_estimate);
            }
        }
    }
}

TEST(EvaluateForm, TranslationInvariant) {
    Grid g(1, 3.0, 256);
    std::mt19937_64 rng(3);
    auto s = smooth_form_kernel(1, 1);
    auto b = random_fields(g, 3, rng);
    double shift[1] = {0.5};
    std::vector<SampledField> tb;
    for (auto& f : b) tb.push_back(translate(f, shift));
    auto r0 = evaluate_form(s, b), r1 = evaluate_form(s, tb);
    EXPECT_LE(std::abs(r0.value - r1.value), 2 * std::max(r0.error_estimate, r1.error_estimate) + 1e-14);
}

TEST(EvaluateForm, Multilinear) {
    Grid g(1, 2.0, 128);
    std::mt19937_64 rng(4);
    auto s = smooth_form_kernel(1, 1);
    auto b = random_fields(g, 4, rng);
    for (int slot = 0; slot < 3; ++slot) {
        auto x = b, y = b, xy = b;
        y[slot] = b[3];
        xy[slot] = b[slot].plus(b[3], 2.0);
        auto rx = evaluate_form(s, {x[0], x[1], x[2]}), ry = evaluate_form(s, {y[0], y[1], y[2]});
        auto rxy = evaluate_form(s, {xy[0], xy[1], xy[2]});
        double err = rx.error_estimate + 2 * ry.error_estimate + rxy.error_estimate;
        EXPECT_LE(std::abs(rxy.value - rx.value - 2 * ry.value), 2 * err + 1e-13) << slot;
    }
}

TEST(EvaluateForm, SymmetricInFirstSlots) {
    Grid g(1, 2.0, 96);
    std::mt19937_64 rng(6);
    auto s = smooth_form_kernel(2, 1);
    s.eval = [](auto a, auto v) { return (1 + a[0]) * std::sin(M_PI * a[1]) * (0.3 + v[0]) * std::exp(-3 * v[0] * v[0]); };
    auto swapped = s;
    swapped.eval = [f = s.eval](auto a, auto v) {
        double b[2] = {a[1], a[0]};
        return f(std::span<const double>(b, 2), v);
    };
    auto b = random_fields(g, 4, rng);
    auto r0 = evaluate_form(s, {b[1], b[0], b[2], b[3]});
    auto r1 = evaluate_form(swapped, {b[0], b[1], b[2], b[3]});
    EXPECT_LE(std::abs(r0.value - r1.value), 2 * (r0.error_estimate + r1.error_estimate) + 1e-13);
}

TEST(EvaluateDilated, IdentityAtZero) {
    Grid g(1, 3.0, 256);
    std::mt19937_64 rng(7);
    FormInstance inst{smooth_form_kernel(1, 1), random_fields(g, 3, rng), ExponentTuple({3, 3, 3})};
    auto r = evaluate_dilated(inst, 0);
    auto base = evaluate_form(inst);
    EXPECT_DOUBLE_EQ(r.lhs.value, base.value);
    EXPECT_NEAR(r.cross.value, base.value, 1e-14);
}

TEST(EvaluateDilated, ScalingIdentities) {
    Grid g(1, 3.0, 512);
    std::mt19937_64 rng(8);
    auto b = random_fields(g, 3, rng);
    std::vector<SampledField> small;
    for (int i = 0; i < 3; ++i) small.push_back(bump_field(g, {0.1 * i}, 0.6, 1 + i));
    FormInstance inst{smooth_form_kernel(1, 1), small, ExponentTuple({2, 4, 4})};
    for (int j : {-1, 1}) {
        auto r = evaluate_dilated(inst, j);
        double tol = 3 * (r.lhs.error_estimate + r.cross.error_estimate);
        EXPECT_LE(std::abs(r.lhs.value - r.cross.value), tol) << j;
        ASSERT_TRUE(r.normalized);
        EXPECT_LE(std::abs(r.lhs.value - r.normalized->value), 3 * (r.lhs.error_estimate + r.normalized->error_estimate)) << j;
    }
}

TEST(EvaluateDilated, OverflowOnRescale) {
    Grid g(1, 1.0, 64);
    FormInstance inst{smooth_form_kernel(1, 1), {bump_field(g, {0.0}, 0.8), bump_field(g, {0.0}, 0.8), bump_field(g, {0.0}, 0.8)}, std::nullopt};
    EXPECT_THROW(evaluate_dilated(inst, 1), SupportOverflow);
}

TEST(Commutator, ConstantCoefficientsMatchConvolution) {
    Grid g(1, 4.0, 8192);
    auto f = bump_field(g, {0.3}, 1.0);
    auto a = SampledField::sample(g, [](auto) { return 1.5; }, 4.0);
    CZKernelSpec k;
    k.d = 1;
    k.kappa = [](std::span<const double> x) { return 1.0 / x[0]; };
    PVSpec pv;
    pv.inner_radius = 0.1;
    pv.outer_radius = 1.5;
    auto r = d_commutator(k, {a, a}, f, pv, {{0.0}, {0.5}});
    auto mask = SampledField::sample(g, [&](auto x) {
        double t = std::abs(x[0]);
        return t >= pv.inner_radius && t <= pv.outer_radius ? 1.0 / x[0] : 0.0;
    }, pv.outer_radius);
    Grid big(1, 4.0, 8192);
    auto conv = convolve(mask, f);
    for (int i = 0; i < 2; ++i) {
        double x = i == 0 ? 0.0 : 0.5;
        double ref = 2.25 * conv.at(x);
        EXPECT_NEAR(r.values[i], ref, 1e-2 * std::abs(ref)) << x;
    }
}

TEST(Commutator, OddKernelEvenDataVanishes) {
    Grid g(2, 2.0, 64);
    auto f = bump_field(g, {0.0, 0.0}, 1.0);
    auto a = SampledField::sample(g, [](auto x) { return std::exp(-x[0] * x[0] - x[1] * x[1]); }, 2.0);
    CZKernelSpec k;
    k.d = 2;
    k.kappa = [](std::span<const double> x) { return x[0] / std::pow(x[0] * x[0] + x[1] * x[1], 1.5); };
    PVSpec pv;
    auto r = d_commutator(k, {a}, f, pv, {{0.0, 0.0}});
    EXPECT_LE(std::abs(r.values[0]), r.errors[0] + 1e-15);
}

TEST(Commutator, CalderonDenseOracle) {
    Grid g(1, 4.0, 4096);
    auto f = bump_field(g, {0.0}, 1.0);
    auto a = SampledField::sample(g, [](auto x) { return x[0] * radial_cutoff(std::abs(x[0]), 2.0, 3.0); }, 3.0);
    PVSpec pv;
    pv.inner_radius = 0.02;
    pv.outer_radius = 1.5;
    auto r = calderon_1d({a}, f, pv, {0.0});
    // dense double integral: y on a fine midpoint grid, segment mean by midpoint in u
    const int M = 200000, S = 64;
    Accumulator acc;
    const double dy = (pv.outer_radius - pv.inner_radius) / M;
    for (int s = -1; s <= 1; s += 2)
        for (int k = 0; k < M; ++k) {
            double y = s * (pv.inner_radius + (k + 0.5) * dy);
            double m = 0;
            for (int u = 0; u < S; ++u) m += a.at((u + 0.5) / S * y);
            acc.add(f.at(y) / (0.0 - y) * (m / S) * dy);
        }
    EXPECT_NEAR(r.values[0], acc.value(), 1e-2 * std::abs(acc.value()));
    EXPECT_LT(acc.value(), 0.0);
}

TEST(Commutator, CalderonIsTheOneDimensionalCommutator) {
    Grid g(1, 4.0, 1024);
    auto f = bump_field(g, {0.2}, 1.0);
    auto a = bump_field(g, {-0.1}, 1.5);
    PVSpec pv;
    CZKernelSpec k;
    k.d = 1;
    k.kappa = [](std::span<const double> x) { return 1.0 / x[0]; };
    auto c = calderon_1d({a}, f, pv, {0.0, 0.3});
    auto d = d_commutator(k, {a}, f, pv, {{0.0}, {0.3}});
    for (int i = 0; i < 2; ++i) EXPECT_NEAR(c.values[i], d.values[i], 1e-12);
    auto h = calderon_1d({}, bump_field(g, {0.0}, 1.0), pv, {0.0});
    EXPECT_LE(std::abs(h.values[0]), 1e-15);
}

TEST(Commutator, PrincipalValueStable) {
    Grid g(1, 4.0, 4096);
    auto f = bump_field(g, {0.2}, 1.0);
    auto a = bump_field(g, {-0.1}, 1.5);
    PVSpec pv;
    pv.inner_radius = 0.02;
    auto r1 = calderon_1d({a}, f, pv, {0.0, 0.3});
    PVSpec half = pv;
    half.inner_radius /= 2;
    PVSpec quarter = pv;
    quarter.inner_radius /= 4;
    auto r2 = calderon_1d({a}, f, half, {0.0, 0.3});
    auto r4 = calderon_1d({a}, f, quarter, {0.0, 0.3});
    for (int i = 0; i < 2; ++i) {
        EXPECT_LE(std::abs(r2.values[i] - r4.values[i]), r1.errors[i]);
        EXPECT_LE(std::abs(r2.values[i] - r1.values[i]), r1.errors[i]);
    }
}

TEST(Commutator, ProbeNearBoundaryRejected) {
    Grid g(1, 1.0, 64);
    auto f = bump_field(g, {0.0}, 0.5);
    EXPECT_THROW(calderon_1d({}, f, PVSpec{}, {0.99}), InvalidArgument);
    PVSpec bad;
    bad.inner_radius = 2;
    EXPECT_THROW(calderon_1d({}, f, bad, {0.0}), InvalidArgument);
}

TEST(Rotation, ZeroOmega) {
    Grid g(2, 2.0, 32);
    auto f = bump_field(g, {0.0, 0.0}, 0.8);
    PVSpec pv;
    pv.inner_radius = 0.25;
    auto r = rotation_reduce([](double) { return 0.0; }, {f}, f, f, pv, 16);
    EXPECT_EQ(r.lhs, 0.0);
    EXPECT_EQ(r.rhs, 0.0);
}

TEST(Rotation, EvenOmegaRejected) {
    Grid g(2, 2.0, 32);
    auto f = bump_field(g, {0.0, 0.0}, 0.8);
    PVSpec pv;
    pv.inner_radius = 0.25;
    EXPECT_THROW(rotation_reduce([](double t) { return std::cos(2 * t); }, {f}, f, f, pv, 16), ParityError);
}

TEST(Rotation, SineIdentity) {
    Grid g(2, 2.0, 128);
    auto f = bump_field(g, {0.2, 0.0}, 0.8), gg = bump_field(g, {-0.1, 0.1}, 0.6);
    auto a = SampledField::sample(g, [](auto x) {
        return (1 + x[0] + 0.5 * x[1] * x[1]) * std::exp(-x[0] * x[0] - x[1] * x[1]);
    }, 2.0);
    PVSpec pv;
    pv.inner_radius = 0.125;
    pv.outer_radius = 1.0;
    auto r = rotation_reduce([](double t) { return std::sin(t); }, {a}, f, gg, pv, 96);
    EXPECT_GT(std::abs(r.lhs), 1e-3);
    EXPECT_LE(r.gap, 0.02 * std::max(std::abs(r.lhs), std::abs(r.rhs)));
}

TEST(PartialSums, SinglePieceConstant) {
    Grid g(1, 3.0, 128);
    std::mt19937_64 rng(2);
    auto b = random_fields(g, 3, rng);
    DyadicKernel dk{{{-1, smooth_form_kernel(1, 1)}}, -1, -1};
    auto ps = partial_sum_form(dk, b);
    ASSERT_EQ(ps.values.size(), 2u);
    EXPECT_EQ(ps.values[0], 0.0);
    EXPECT_NE(ps.values[1], 0.0);
    EXPECT_EQ(ps.pieces.size(), 1u);
}

TEST(PartialSums, ZeroSlotGivesZero) {
    Grid g(1, 3.0, 64);
    std::mt19937_64 rng(2);
    auto b = random_fields(g, 3, rng);
    b[1] = SampledField::zeros(g);
    DyadicKernel dk{{{0, smooth_form_kernel(1, 1)}, {1, smooth_form_kernel(1, 1)}}, 0, 1};
    for (double v : partial_sum_form(dk, b).values) EXPECT_EQ(v, 0.0);
}

TEST(PartialSums, IncrementsFollowPieceMasses) {
    Grid g(1, 3.0, 256);
    std::mt19937_64 rng(12);
    auto b = random_fields(g, 3, rng);
    DyadicKernel dk;
    dk.j_min = 0;
    dk.j_max = 3;
    for (int j = 0; j <= 3; ++j) dk.pieces.emplace_back(j, scaled(smooth_form_kernel(1, 1), std::ldexp(1.0, -2 * j)));
    auto ps = partial_sum_form(dk, b);
    double bn = lp_norm(b[0], 3) * lp_norm(b[1], 3) * lp_norm(b[2], 3);
    for (int N = 1; N <= 3; ++N)
        EXPECT_LE(ps.increments[N], l1_norm(dk.pieces[N].second) * bn + ps.pieces[N].second.error_estimate);
    for (int N = 2; N <= 3; ++N) EXPECT_LT(ps.increments[N], ps.increments[N - 1]);
}
