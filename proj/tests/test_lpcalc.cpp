#include <gtest/gtest.h>

#include <cmath>

#include "cjlab/error.hpp"
#include "cjlab/lpcalc.hpp"
#include "cjlab/numeric.hpp"

using namespace cjlab;

namespace {

SampledField smooth_bump(const Grid& g, double r, double amp = 1.0) {
    return SampledField::sample(
        g, [&](std::span<const double> x) { return amp * bump_profile(norm2(x) / r); }, r);
}

double max_abs_diff(const SampledField& a, const SampledField& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.values().size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

TEST(Mollifier, AnalyticNormalization) {
    for (int d : {1, 2}) {
        Grid g(d, 1.25, d == 1 ? 4000 : 800);
        double c = bump_normalization(d);
        auto phi = SampledField::sample(g, [&](std::span<const double> x) { return c * bump_profile(norm2(x)); }, 1.0);
        EXPECT_NEAR(integral(phi), 1.0, 1e-6) << d;
    }
}

TEST(Mollifier, InvariantsOnGrid) {
    for (int d : {1, 2}) {
        Grid g(d, 2.5, d == 1 ? 200 : 80);
        auto m = default_mollifier(g);
        EXPECT_NEAR(integral(m.phi), 1.0, 1e-8);
        EXPECT_NEAR(integral(m.psi), 0.0, 1e-8);
        const int N = g.points_per_axis;
        for (std::size_t i = 0; i < g.size(); ++i) {
            EXPECT_GE(m.phi[i], 0.0);
            auto idx = g.unflatten(i);
            bool mirror = true;
            for (auto& k : idx) {
                if (k == 0) mirror = false;
                k = N - k;
            }
            if (mirror) EXPECT_EQ(m.phi[i], m.phi[g.flatten(idx)]);
        }
    }
}

TEST(ProjectP, PreservesConstantsOnCore) {
    Grid g(1, 4.0, 1024);
    auto f = SampledField::sample(g, [](auto) { return 1.0; }, 2.0);
    auto m = default_mollifier(g);
    for (int j : {0, 2}) {
        auto p = project_P(f, j, m);
        double core = 2.0 - std::ldexp(1.0, -j);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (std::abs(g.coord(static_cast<int>(i))) < core - g.spacing()) EXPECT_NEAR(p[i], 1.0, 1e-12);
    }
}

TEST(ProjectP, ContractionAndPositivity) {
    Grid g(2, 4.0, 96);
    auto m = default_mollifier(g);
    auto f = SampledField::sample(g, [](std::span<const double> x) { return std::sin(3 * x[0]) * std::cos(2 * x[1]); }, 2.0);
    for (int j : {-1, 0, 1, 3}) {
        auto p = project_P(f, j, m);
        EXPECT_LE(lp_norm(p, INFINITY), lp_norm(f, INFINITY) * (1 + 1e-12));
    }
    auto pos = project_P(smooth_bump(g, 1.5), 1, m);
    for (double v : pos.values()) EXPECT_GE(v, 0.0);
}

TEST(ProjectP, SecondOrderApproximation) {
    Grid g(1, 2.0, 16384);
    auto m = default_mollifier(Grid(1, 2.5, 200));
    auto f = smooth_bump(g, 1.0);
    double e6 = lp_norm(project_P(f, 6, m).plus(f, -1), 2);
    double e10 = lp_norm(project_P(f, 10, m).plus(f, -1), 2);
    double rate = std::log2(e10 / e6) / -8.0;
    EXPECT_GT(e6, e10);
    EXPECT_NEAR(rate, 1.0, 0.15);
}

TEST(ProjectP, OverflowThrows) {
    Grid g(1, 2.0, 64);
    auto m = default_mollifier(Grid(1, 2.5, 200));
    EXPECT_THROW(project_P(smooth_bump(g, 1.5), -1, m), SupportOverflow);
}

TEST(BandQ, TelescopesAndCancels) {
    Grid g(1, 12.0, 3072);
    auto m = default_mollifier(Grid(1, 2.5, 200));
    auto f = smooth_bump(g, 1.0);
    const int J = 2;
    SampledField sum = SampledField::zeros(g, 12.0);
    for (int j = -J; j <= J; ++j) {
        auto q = band_Q(f, j, m);
        EXPECT_NEAR(integral(q), 0.0, 1e-6);
        sum = sum.plus(q);
    }
    auto direct = project_P(f, J, m).plus(project_P(f, -J - 1, m), -1);
    EXPECT_LT(max_abs_diff(sum, direct), 1e-14);
}

TEST(BandQ, ReconstructionOnInterior) {
    // P_{-9} needs a box of half extent > 512
    Grid g(1, 520.0, 66560);
    auto m = default_mollifier(Grid(1, 2.5, 200));
    auto f = smooth_bump(g, 2.0);
    SampledField sum = SampledField::zeros(g, 520.0);
    for (int j = -8; j <= 8; ++j) sum = sum.plus(band_Q(f, j, m));
    double num = 0, den = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (std::abs(g.coord(static_cast<int>(i))) > 2.0) continue;
        num += (sum[i] - f[i]) * (sum[i] - f[i]);
        den += f[i] * f[i];
    }
    EXPECT_LE(std::sqrt(num / den), 1e-2);
}

TEST(FourierQ, Reproducing) {
    Grid g(2, 4.0, 64);
    auto c = default_cutoff();
    auto f = smooth_bump(g, 2.0);
    for (int j : {0, 1, 2}) {
        auto q = fourier_Q(f, j, c);
        auto qq = fourier_Q(fourier_Q(f, j, c, true), j, c);
        EXPECT_LT(max_abs_diff(q, qq), 1e-8 * lp_norm(q, INFINITY));
    }
}

TEST(FourierQ, PassesCenterFrequency) {
    // xi = 2^{j-1} is where the multiplier equals 1
    const double L = 4 * M_PI;
    Grid g(1, L, 256);
    auto c = default_cutoff();
    const int j = 3;
    auto f = SampledField::sample(g, [](std::span<const double> x) { return std::sin(4 * x[0]); }, 2 * L);
    auto q = fourier_Q(f, j, c);
    EXPECT_LT(max_abs_diff(q, f), 1e-6);
    EXPECT_DOUBLE_EQ(band_multiplier(c, j, 4.0, false), 1.0);
}

TEST(FourierQ, LittlewoodPaleyEquivalence) {
    Grid g(1, 16.0, 1024);
    auto c = default_cutoff();
    auto f = smooth_bump(g, 1.0).plus(smooth_bump(g, 3.0, 0.5));
    double total = 0;
    int jmax = static_cast<int>(std::floor(std::log2(M_PI / g.spacing() * 0.5)));
    for (int j = -8; j <= jmax; ++j) {
        double n = lp_norm(fourier_Q(f, j, c), 2);
        total += n * n;
    }
    double ratio = lp_norm(f, 2) * lp_norm(f, 2) / total;
    EXPECT_GE(ratio, 0.25);
    EXPECT_LE(ratio, 4.0);
}

TEST(FourierQ, BeyondNyquistThrows) {
    Grid g(1, 4.0, 64);
    auto c = default_cutoff();
    EXPECT_THROW(fourier_Q(smooth_bump(g, 1.0), 4, c), ResolutionError);
}

TEST(UNorm, ZeroAndRefinementStability) {
    Grid g(1, 4.0, 64);
    EXPECT_EQ(u_norm(SampledField::zeros(g)), 0.0);
    double prev = 0;
    for (int N : {512, 1024}) {
        auto m = default_mollifier(Grid(1, 4.0, N));
        double v = u_norm(m.psi);
        EXPECT_TRUE(std::isfinite(v));
        if (prev > 0) EXPECT_NEAR(v / prev, 1.0, 0.05);
        prev = v;
    }
}

TEST(UKernel, RejectsNonzeroMean) {
    Grid g(1, 4.0, 256);
    EXPECT_THROW(make_ukernel(smooth_bump(g, 1.0)), CancellationViolation);
}

TEST(DecomposeU, ZeroGivesZeroAtoms) {
    Grid g(1, 4.0, 256);
    auto dec = decompose_U(make_ukernel(SampledField::zeros(g, 1.0)), 4);
    ASSERT_EQ(dec.atoms.size(), 5u);
    for (const auto& [j, a] : dec.atoms) EXPECT_EQ(lp_norm(a, INFINITY), 0.0);
}

TEST(DecomposeU, PsiAtomsAndReconstruction) {
    for (int d : {1, 2}) {
        Grid g(d, 8.0, d == 1 ? 1024 : 256);
        auto m = default_mollifier(g);
        auto uk = make_ukernel(m.psi);
        const int depth = 8;
        auto dec = decompose_U(uk, depth, d == 1 ? 512 : 128);
        ASSERT_EQ(static_cast<int>(dec.atoms.size()), depth + 1);
        for (const auto& [j, a] : dec.atoms) {
            EXPECT_LE(a.support_radius(), 0.25);
            EXPECT_LE(std::abs(integral(a)), 1e-6) << j;
            EXPECT_LE(j, 0);
        }
        EXPECT_TRUE(std::isfinite(dec.sup_constant));
        auto rec = reconstruct_U(dec, g);
        double res = lp_norm(rec.plus(m.psi, -1), 1) / lp_norm(m.psi, 1);
        EXPECT_LE(res, std::pow(2.0, -depth / 4.0)) << d;
    }
}
