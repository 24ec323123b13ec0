// One line per acceptance criterion: "criterion N: PASS|FAIL <name> (<details>)"
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "cjlab/adjoints.hpp"
#include "cjlab/builtins.hpp"
#include "cjlab/error.hpp"
#include "cjlab/forms.hpp"
#include "cjlab/kernelspace.hpp"
#include "cjlab/lpcalc.hpp"
#include "cjlab/numeric.hpp"
#include "cjlab/probes.hpp"

using namespace cjlab;

namespace {

struct Verdict {
    bool pass = false;
    std::string details;
};

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double bump(double t) { return std::abs(t) < 1 ? std::exp(-1 / (1 - t * t)) : 0.0; }

SampledField bump_field(const Grid& g, std::vector<double> c, double r, double amp) {
    return SampledField::sample(g, [=](std::span<const double> x) {
        double q = 0;
        for (int k = 0; k < g.dim; ++k) q += (x[k] - c[k]) * (x[k] - c[k]);
        return amp * bump(std::sqrt(q) / r);
    }, norm2(c) + r);
}

double kernel_step(const KernelB& s) {
    double h = 1.0 / s.v_res;
    for (int i = 0; i < s.n; ++i) h = std::max(h, 1.0 / s.alpha_res);
    return h;
}

double worst_cancellation(const KernelB& s) {
    double w = 0;
    for (auto [integral, mass] : v_integrals(s)) w = std::max(w, std::abs(integral) / (mass + 1e-300));
    return w;
}

// ---- 1

Verdict adjoint_identity() {
    Verdict v{true, ""};
    double worst = 0, slowest = 0;
    int checks = 0;
    for (int n : {1, 2})
        for (int d : {1, 2}) {
            auto t0 = std::chrono::steady_clock::now();
            auto s = adjoint_test_kernel(n, d);
            Grid g(d, 2.0, 64);
            std::vector<Permutation> perms{parse_permutation("swap", n, 0),
                                           parse_permutation("transpose 1 " + std::to_string(n + 1), n, 0),
                                           random_generator_word(n, 4, 1000 + 10 * n + d)};
            FormBudget bud;
            bud.samples = std::size_t(1) << 20;
            for (int k = 0; k < 20; ++k) {
                auto b = smooth_random_fields(g, n + 2, 100 * n + 10 * d + k);
                for (const auto& p : perms) {
                    bud.seed = 7919 * k + 13;
                    auto r = adjoint_check(s, p, b, bud, 3.0);
                    ++checks;
                    worst = std::max(worst, r.gap / r.tolerance);
                    if (!r.pass) v.pass = false;
                }
            }
            double sec = seconds_since(t0);
            slowest = std::max(slowest, sec);
            if (sec > 300) v.pass = false;
        }
    v.details = std::to_string(checks) + " checks, worst gap/(3 err) " + fmt("%.3g", worst) + ", slowest case " +
                fmt("%.1f", slowest) + " s";
    return v;
}

// ---- 2

Verdict isometry_and_cancellation() {
    Verdict v{true, ""};
    double worst_iso = 0, worst_canc = 0;
    int checks = 0;
    auto check_kernel = [&](const KernelB& in, const KernelB& out) {
        const double h = kernel_step(out);
        double ratio = l1_norm(out) / l1_norm(in);
        worst_iso = std::max(worst_iso, std::abs(ratio - 1) / (3 * h));
        if (std::abs(ratio - 1) > 3 * h) v.pass = false;
        double c = worst_cancellation(out);
        worst_canc = std::max(worst_canc, c);
        if (!out.cancels_in_v || c > 1e-6) v.pass = false;
        ++checks;
    };
    for (int n : {1, 2})
        for (int d : {1, 2}) {
            auto s = adjoint_test_kernel(n, d);
            check_kernel(s, swap_last_two(s));
            check_kernel(s, ell_transposition(s));
            if (n == 2) check_kernel(s, perm_first_n(s, {2, 1}));
        }
    // the building blocks J, M, Mt and Gamma_1, Gamma_2 on box functions
    for (int N : {2, 3}) {
        auto s = adjoint_test_kernel(1, N - 1);
        auto g = from_kernel(s);
        g.res = N == 2 ? 128 : 48;
        const double base = l1_norm(g);
        auto iso = [&](const BoxFunction& f) {
            double h = 0;
            for (int i = 0; i < f.N; ++i) h = std::max(h, 1.0 / f.res);
            double ratio = l1_norm(f) / base;
            worst_iso = std::max(worst_iso, std::abs(ratio - 1) / (3 * h));
            if (std::abs(ratio - 1) > 3 * h) v.pass = false;
            ++checks;
        };
        iso(inversion_J(g));
        iso(shear_M(g, N - 1));
        iso(shear_Mtilde(g, 1, N - 1));
        auto G = gamma12(g, 1);
        iso(G.gamma1);
        iso(G.gamma2);
    }
    v.details = std::to_string(checks) + " transforms, worst |ratio-1|/(3h) " + fmt("%.3g", worst_iso) +
                ", worst relative v-integral " + fmt("%.2g", worst_canc);
    return v;
}

// ---- 3

KernelB scaling_kernel(int n, double phase) {
    auto s = make_kernel(n, 1, [n, phase](auto a, auto v) {
        double w = 1;
        for (int i = 0; i < n; ++i) w *= std::sin(M_PI * a[i]) * (1 + phase * a[i]);
        return w * (0.3 + v[0]) * std::exp(-3 * v[0] * v[0]);
    }, 0.0, 1.0, 1.5, "smooth");
    s.alpha_res = n == 1 ? 16 : 8;
    s.v_res = 48;
    return s;
}

Verdict scaling_identities() {
    Verdict v{true, ""};
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> C(-0.2, 0.2), R(0.3, 0.5), A(0.5, 1.5), P(0.2, 1.0);
    double worst = 0;
    int checks = 0;
    for (int k = 0; k < 10; ++k) {
        const int n = 1 + k % 2;
        Grid g(1, 3.0, 512);
        std::vector<SampledField> b;
        for (int i = 0; i < n + 2; ++i) b.push_back(bump_field(g, {C(rng)}, R(rng), A(rng) * (i % 2 ? -1 : 1)));
        std::vector<double> p = k % 3 == 0 ? default_exponents(n, "equal")
                              : k % 3 == 1 ? default_exponents(n, "l2")
                                           : std::vector<double>(n + 2, n + 2.0);
        if (k % 3 == 2) {
            p[0] = 2;
            for (int i = 1; i < n + 2; ++i) p[i] = 2.0 * (n + 1);
        }
        FormInstance inst{scaling_kernel(n, P(rng)), b, ExponentTuple(p)};
        for (int j = -2; j <= 2; ++j) {
            auto r = evaluate_dilated(inst, j);
            double t1 = 3 * (r.lhs.error_estimate + r.cross.error_estimate);
            double t2 = 3 * (r.lhs.error_estimate + r.normalized->error_estimate);
            double g1 = std::abs(r.lhs.value - r.cross.value), g2 = std::abs(r.lhs.value - r.normalized->value);
            worst = std::max({worst, g1 / t1, g2 / t2});
            if (g1 > t1 || g2 > t2) v.pass = false;
            checks += 2;
        }
    }
    v.details = std::to_string(checks) + " comparisons (ii) and (iv), worst gap/(3 err) " + fmt("%.3g", worst);
    return v;
}

// ---- 4

Verdict holder_bound() {
    Verdict v{true, ""};
    const std::vector<std::string> names{"box", "cj-bump", "gaussian-tensor", "adjoint"};
    double worst = 0;
    int checks = 0;
    for (int k = 0; k < 100; ++k) {
        const int n = 1 + k % 2, d = 1 + (k / 2) % 2;
        const auto& name = names[(k / 4) % 4];
        KernelB s = name == "adjoint" ? adjoint_test_kernel(n, d) : builtin_kernel(name, n, d, d == 1 ? 32 : 16);
        Grid g(d, 2.0, d == 1 ? 128 : 48);
        auto b = smooth_random_fields(g, n + 2, 5000 + k);
        FormBudget bud;
        bud.samples = std::size_t(1) << 18;
        bud.seed = k;
        auto r = evaluate_form(s, b, bud);
        const double l1 = l1_norm(s);
        std::vector<std::vector<double>> tuples{default_exponents(n, "equal"), default_exponents(n, "l2"),
                                                std::vector<double>(n + 2, 2.0 * (n + 1))};
        tuples[2][0] = 2;
        for (const auto& t : tuples) {
            ExponentTuple e(t);
            double bound = l1;
            for (int i = 0; i < n + 2; ++i) bound *= lp_norm(b[i], e.p[i]);
            worst = std::max(worst, std::abs(r.value) / (bound + r.error_estimate));
            if (std::abs(r.value) > bound + r.error_estimate) v.pass = false;
            ++checks;
        }
    }
    v.details = std::to_string(checks) + " instance/tuple pairs, max |Lambda|/(bound + err) " + fmt("%.3g", worst);
    return v;
}

// ---- 5

Verdict rotation_identity() {
    auto t0 = std::chrono::steady_clock::now();
    Grid g(2, 2.0, 128);
    auto f = bump_field(g, {0.2, 0.0}, 0.8, 1.0), gg = bump_field(g, {-0.1, 0.1}, 0.6, 1.0);
    auto a = SampledField::sample(g, [](auto x) {
        return (1 + x[0] + 0.5 * x[1] * x[1]) * std::exp(-x[0] * x[0] - x[1] * x[1]);
    }, 2.0);
    PVSpec pv;
    pv.inner_radius = 0.125;
    pv.outer_radius = 1.0;
    auto r = rotation_reduce([](double t) { return std::sin(t); }, {a}, f, gg, pv, 96);
    double rel = r.gap / std::max(std::abs(r.lhs), std::abs(r.rhs));
    double sec = seconds_since(t0);
    return {rel <= 0.02 && std::abs(r.lhs) > 1e-6 && sec <= 600,
            "lhs " + fmt("%.6g", r.lhs) + ", rhs " + fmt("%.6g", r.rhs) + ", relative gap " + fmt("%.3g", rel) +
                ", " + fmt("%.1f", sec) + " s"};
}

// ---- 6

Verdict littlewood_paley() {
    Grid g(1, 520.0, 66560);
    auto m = default_mollifier(Grid(1, 2.5, 200));
    auto f = SampledField::sample(g, [](std::span<const double> x) { return bump_profile(std::abs(x[0]) / 2.0); }, 2.0);
    SampledField sum = SampledField::zeros(g, 520.0);
    for (int j = -8; j <= 8; ++j) sum = sum.plus(band_Q(f, j, m));
    double num = 0, den = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (std::abs(g.coord(static_cast<int>(i))) > 2.0) continue;
        num += (sum[i] - f[i]) * (sum[i] - f[i]);
        den += f[i] * f[i];
    }
    const double rec = std::sqrt(num / den);

    Grid g2(2, 4.0, 64);
    auto c = default_cutoff();
    auto f2 = SampledField::sample(g2, [](std::span<const double> x) { return bump_profile(norm2(x) / 2.0); }, 2.0);
    double repro = 0;
    for (int j : {0, 1, 2}) {
        auto q = fourier_Q(f2, j, c);
        auto qq = fourier_Q(fourier_Q(f2, j, c, true), j, c);
        double diff = 0;
        for (std::size_t i = 0; i < q.values().size(); ++i) diff = std::max(diff, std::abs(q[i] - qq[i]));
        repro = std::max(repro, diff / lp_norm(q, INFINITY));
    }
    return {rec <= 1e-2 && repro <= 1e-8,
            "interior relative L2 residual " + fmt("%.3g", rec) + ", max |QQ~ - Q|/|Q|_inf " + fmt("%.3g", repro)};
}

// ---- 7

Verdict decomposition_round_trip() {
    auto kap = bump_derivative_kappa(1);
    KernelK K = cj_kernel(kap, 1);
    K.eval = [f = kap.kappa](auto a, auto x) { return (1 + a[0]) * f(x); };
    K.support = 1.0;
    auto dk = decompose_kernel(K, default_mollifier(Grid(1, 2.5, 200)), -8, 8);
    double canc = 0;
    for (const auto& [j, p] : dk.pieces) canc = std::max(canc, worst_cancellation(p));
    auto rec = reconstruct(dk, 0.25, 4.0);
    double res = annulus_residual(rec.kernel, K, 0.25, 4.0);
    return {res <= 1e-2 && canc <= 1e-6,
            std::to_string(dk.pieces.size()) + " pieces, annulus [1/4, 4] relative L1 residual " + fmt("%.3g", res) +
                ", worst relative v-integral " + fmt("%.2g", canc)};
}

// ---- 8

Verdict u_atoms() {
    Verdict v{true, ""};
    std::string det;
    for (int d : {1, 2}) {
        Grid g(d, 8.0, d == 1 ? 1024 : 256);
        auto m = default_mollifier(g);
        const int depth = 8;
        auto dec = decompose_U(make_ukernel(m.psi), depth, d == 1 ? 512 : 128);
        double supp = 0, canc = 0;
        for (const auto& [j, a] : dec.atoms) {
            supp = std::max(supp, a.support_radius());
            canc = std::max(canc, std::abs(integral(a)));
        }
        auto rec = reconstruct_U(dec, g);
        double res = lp_norm(rec.plus(m.psi, -1), 1) / lp_norm(m.psi, 1);
        if (res > std::pow(2.0, -depth / 4.0) || supp > 0.25 || canc > 1e-6) v.pass = false;
        det += (d == 1 ? "" : "; ") + std::string("d=") + std::to_string(d) + " residual " + fmt("%.3g", res) +
               " (limit 0.25), max support " + fmt("%.3g", supp) + ", max |int atom| " + fmt("%.2g", canc);
    }
    v.details = det;
    return v;
}

// ---- 9

Verdict besov_box() {
    auto s = builtin_kernel("box", 1, 1, 512);
    const double h = 1.0 / 512;
    auto r1 = besov_norm(s, 1.0), r0 = besov_norm(s, 0.0);
    double got[4] = {r0.components["B1"], r1.components["B1"], r1.components["B2"], r1.components["B4"]};
    double want[4] = {1.0, 1.5, 2.0, 1.5};
    bool ok = true;
    std::string det = "B_{0,1}, B_{1,1}, B_{1,2}, B_{1,4} =";
    for (int i = 0; i < 4; ++i) {
        ok = ok && std::abs(got[i] - want[i]) <= 4 * h;
        det += " " + fmt("%.6g", got[i]);
    }
    return {ok, det + " (4h = " + fmt("%.3g", 4 * h) + ")"};
}

// ---- 10

FlowSpec shear_flow() {
    FlowSpec fl;
    fl.d = 2;
    fl.b = [](std::span<const double> x, double, std::span<double> out) {
        out[0] = std::sin(2 * M_PI * x[1]);
        out[1] = 0.0;
    };
    fl.A = [](std::span<const double> x) { return x[0] - std::floor(x[0]) < 0.5; };
    return fl;
}

Verdict mixing_identity() {
    auto t0 = std::chrono::steady_clock::now();
    auto fl = shear_flow();
    MixingOptions o;
    auto coarse = mixing_identity_check(fl, 1.0 / 16, o);
    auto fine_flow = fl;
    fine_flow.time_steps = 2 * fl.time_steps;
    o.points_per_axis = 2 * MixingOptions{}.points_per_axis;
    auto fine = mixing_identity_check(fine_flow, 1.0 / 16, o);
    auto zero = fl;
    zero.b = [](std::span<const double>, double, std::span<double> out) { out[0] = out[1] = 0.0; };
    auto z = mixing_identity_check(zero, 1.0 / 16, MixingOptions{});
    double sec = seconds_since(t0);
    bool ok = coarse.relative_gap <= 0.05 && fine.relative_gap < coarse.relative_gap && std::abs(z.lhs) <= 1e-8 &&
              std::abs(z.rhs) <= 1e-8 && sec <= 900;
    return {ok, "N=" + std::to_string(coarse.resolution) + " gap " + fmt("%.3g", coarse.relative_gap) + ", N=" +
                    std::to_string(fine.resolution) + " gap " + fmt("%.3g", fine.relative_gap) + ", b=0 lhs " +
                    fmt("%.2g", z.lhs) + " rhs " + fmt("%.2g", z.rhs) + ", " + fmt("%.1f", sec) + " s"};
}

// ---- 11

Verdict growth_sanity() {
    GrowthProbeConfig c;
    c.n_min = 1;
    c.n_max = 5;
    c.seed = 42;
    const char* prev = std::getenv("CJLAB_THREADS");
    std::string saved = prev ? prev : "";
    setenv("CJLAB_THREADS", "1", 1);
    auto a = growth_probe(c);
    setenv("CJLAB_THREADS", "3", 1);
    auto b = growth_probe(c);
    if (prev) setenv("CJLAB_THREADS", saved.c_str(), 1);
    else unsetenv("CJLAB_THREADS");
    bool same = a.to_csv() == b.to_csv();
    bool holder = true, finite = true;
    for (const auto& r : a.rows) {
        holder = holder && r.ratio <= r.kernel_l1 + r.ratio_error;
        finite = finite && std::isfinite(r.ratio_over_bound());
    }
    bool ok = same && holder && finite && a.rows.size() == 5 && !a.partial && a.fitted_slope <= 0.3;
    return {ok, std::string("CSV identical across 1 and 3 threads: ") + (same ? "yes" : "no") +
                    ", rows within Holder bound: " + (holder ? "yes" : "no") + ", ratio/bound finite: " +
                    (finite ? "yes" : "no") + ", fitted log-slope " + fmt("%.3g", a.fitted_slope) + " (soft limit 0.3)"};
}

// ---- 12

Verdict schur_and_annular() {
    bool dual_ok = true, ann_ok = true;
    double worst_dual = 0, worst_ann = 0, worst_scaled = 0;
    std::string failing;
    for (int d : {1, 2})
        for (const auto& name : builtin_bikernel_names(d)) {
            auto k = builtin_bikernel(name, d);
            SchurOptions so;
            so.points_per_axis = d == 1 ? 128 : 32;
            so.max_points = d == 1 ? 256 : 64;
            auto a = schur_suite(k, 0.5, so), b = schur_suite(k.dual(), 0.5, so);
            double gaps[5] = {std::abs(a.components["Int1_eps"] - b.components["Intinf_eps"]),
                              std::abs(a.components["Intinf_eps"] - b.components["Int1_eps"]),
                              std::abs(a.components["Reginf_lt"] - b.components["Reg1_rt"]),
                              std::abs(a.components["Reginf_rt"] - b.components["Reg1_lt"]),
                              std::abs(a.extras["Int1"] - b.extras["Intinf"])};
            for (double g : gaps) worst_dual = std::max(worst_dual, g);

            SIOptions si;
            si.points_per_axis = d == 1 ? 128 : 32;
            auto r = si_ann_suite(k, 0.5, si);
            double m = std::min(r.components["Ann1"], r.components["Anninf"]);
            double ratio = r.components["Ann_av"] / m;
            worst_ann = std::max(worst_ann, ratio);
            worst_scaled = std::max(worst_scaled, ratio / unit_ball_volume(d));
            if (ratio > 1.1) {
                ann_ok = false;
                failing += (failing.empty() ? "" : ", ") + name + " d=" + std::to_string(d) + " " + fmt("%.3g", ratio);
            }
        }
    dual_ok = worst_dual <= 1e-10;
    std::string det = "duality max gap " + fmt("%.2g", worst_dual) + "; Ann_av/min(Ann1, Anninf) max " +
                      fmt("%.3g", worst_ann) + " (limit 1.1)";
    if (!ann_ok) det += ", exceeded by " + failing;
    det += "; Ann_av/(V_d min) max " + fmt("%.3g", worst_scaled);
    return {dual_ok && ann_ok, det};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"adjoint identity", adjoint_identity},
        {"L1 isometry and cancellation", isometry_and_cancellation},
        {"scaling identities", scaling_identities},
        {"Holder bound", holder_bound},
        {"rotation identity", rotation_identity},
        {"Littlewood-Paley reconstruction", littlewood_paley},
        {"kernel decomposition round trip", decomposition_round_trip},
        {"U atom decomposition", u_atoms},
        {"Besov closed forms", besov_box},
        {"mixing identity", mixing_identity},
        {"growth probe sanity", growth_sanity},
        {"Schur dualities and annular relation", schur_and_annular},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        failed += !v.pass;
        std::printf("criterion %zu: %s %s (%s)\n", i + 1, v.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                    v.details.c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
