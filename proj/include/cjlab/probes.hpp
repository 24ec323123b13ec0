#pragma once
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cjlab/field.hpp"
#include "cjlab/forms.hpp"
#include "cjlab/kernelspace.hpp"

namespace cjlab {

// ---- growth probe

struct GrowthProbeConfig {
    int n_min = 0, n_max = 5;
    int d = 1;
    int points_per_axis = 64;
    double half_extent = 4.0;
    // p_1..p_{n+2} for a given n; empty picks p_i = n + 2
    std::function<std::vector<double>(int)> exponents;
    std::string exponent_scheme = "equal";
    int trials = 8;
    std::uint64_t seed = 0;
    CZKernelSpec kappa;  // kappa.kappa empty picks bump_derivative_kappa(d)
    int bumps_per_field = 4;
    std::size_t samples = std::size_t(1) << 16;  // Monte Carlo draws per evaluation
    int alpha_res = 8, v_res = 32;
    std::size_t max_evaluations = 0;  // 0: unlimited
};

struct GrowthRow {
    int n = 0;
    double ratio = 0.0;         // max over trials of |Lambda| / prod |b_i|_{p_i}
    double ratio_error = 0.0;   // error estimate of that trial, same normalization
    double kernel_l1 = 0.0;     // |sigma|_1, the Holder constant
    double bound = 0.0;         // n^2 log^3(2 + n)
    std::uint64_t seed = 0;     // trial seed attaining the max
    int trials = 0;
    double ratio_over_bound() const;
};

struct GrowthTable {
    std::vector<GrowthRow> rows;
    bool partial = false;
    double fitted_slope = 0.0;  // slope of log(ratio/bound) against log n, rows with n >= 1
    std::string to_csv() const;
    nlohmann::json to_json() const;
};

std::vector<double> default_exponents(int n, const std::string& scheme = "equal");
// sigma(alpha, v) = 1_{[0,1]^n}(alpha) kappa(v), kappa compactly supported
KernelB cj_box_kernel(const CZKernelSpec& kappa, int n, int alpha_res = 8, int v_res = 32);
// Rademacher-signed sums of shifted bumps
SampledField random_bump_field(const Grid& g, int bumps, std::uint64_t seed);
GrowthTable growth_probe(const GrowthProbeConfig& cfg);

// ---- Schur / SI / annular norms

struct BiKernel {
    int d = 1;
    std::function<double(std::span<const double> x, std::span<const double> y)> k;
    bool diagonal_excluded = false;
    double diagonal_margin = 0.0;  // k read as 0 for |x - y| < margin when excluded
    double half_extent = 2.0;      // sup points range over [-L, L]^d
    std::string name = "k";

    double operator()(std::span<const double> x, std::span<const double> y) const;
    BiKernel dual() const;
};

// k(x, y) = phi(x - y)
BiKernel convolution_bikernel(int d, std::function<double(std::span<const double>)> phi, double half_extent,
                              std::string name);
// box, cj-bump, gaussian-tensor (any d) and riesz (d >= 2)
BiKernel builtin_bikernel(const std::string& name, int d);
std::vector<std::string> builtin_bikernel_names(int d);

struct SchurOptions {
    int points_per_axis = 128;  // integration grid on [-L-1, L+1]^d uses spacing 2L / points_per_axis
    int max_points = 256;       // sup points, a strided subset of the grid nodes
    int max_m = 8;              // shifts h = 2^-m e_i, m = 0..max_m, h >= spacing
};

NormReport schur_suite(const BiKernel& k, double eps, const SchurOptions& opt = {});

struct SIOptions {
    int points_per_axis = 128;
    int max_points = 64;    // sup points / ball centers
    int pairs_per_point = 4;
    int r_levels = 8;       // R = 2, 4, ..., 2^r_levels
    std::uint64_t seed = 1;
};

NormReport si_ann_suite(const BiKernel& K, double eps, const SIOptions& opt = {});

// ---- Carleson functions

struct CarlesonOptions {
    double center_extent = 1.0;  // ball centers on a lattice in [-c, c]^d
    int centers_per_axis = 5;    // odd, so 0 is a center
    int nodes_per_axis = 32;     // quadrature nodes across a ball
};

using CarlesonFn = std::function<double(std::span<const double> x, int j)>;
double carleson_norm(const CarlesonFn& w, int d, int j_min, int j_max, const CarlesonOptions& opt = {});

// ---- mixing

// torus [0,1)^d sampled as Grid(d, 1/2, N); node x stands for x mod 1
Grid torus_grid(int d, int N);

struct BianchiniOptions {
    int r_panels_per_octave = 1;
    int r_order = 6;   // Gauss-Legendre nodes per panel in log r
    int mask_sub = 8;  // supersampling of the ball indicator per cell and axis
};
double bianchini_seminorm(const SampledField& f, double eps, const BianchiniOptions& opt = {});

using VectorFieldFn = std::function<void(std::span<const double> x, double t, std::span<double> out)>;
using MembershipFn = std::function<bool(std::span<const double> x)>;

struct FlowSpec {
    int d = 2;
    VectorFieldFn b;   // periodic, divergence free
    double T = 0.5;
    int time_steps = 32;
    MembershipFn A;    // initial set, x in [0,1)^d
};

// nearest-node membership for an indicator sampled on a torus grid
MembershipFn indicator_membership(const SampledField& indicator);

struct MixingOptions {
    int points_per_axis = 128;
    double cfl_limit = 8.0;  // max|b| dt / h
    int divergence_samples = 64;
    BianchiniOptions bianchini;
};

struct MixingResult {
    double eps = 0, T = 0;
    double lhs = 0, rhs = 0, gap = 0;
    double relative_gap = 0;  // gap / max(|lhs|, |rhs|, 1e-8)
    int resolution = 0;
    int time_steps = 0;
    std::string csv_row() const;
    nlohmann::json to_json() const;
};
std::string mixing_csv_header();

void check_flow(const FlowSpec& flow, int samples = 64);
// 1_{phi_t(A)} on the torus grid by RK4 pull-back along the reverse flow
SampledField transported_indicator(const FlowSpec& flow, double t, int steps, const Grid& g);
MixingResult mixing_identity_check(const FlowSpec& flow, double eps, const MixingOptions& opt = {});

// ---- Bressan trilinear form

struct TrilinearResult {
    double value = 0.0;
    double error_estimate = 0.0;
};
// iint_{eps < |x-y| < N} <v(x) - v(y), x - y> |x-y|^{-d-2} f(y) g(x), eps = pv.inner_radius, N = pv.outer_radius
TrilinearResult bressan_trilinear(const std::vector<SampledField>& v, const SampledField& f, const SampledField& g,
                                  const PVSpec& pv);
// |Dv|_p with the Frobenius norm of central differences
double jacobian_lp_norm(const std::vector<SampledField>& v, double p);

}  // namespace cjlab
