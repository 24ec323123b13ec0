#pragma once
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cjlab/field.hpp"
#include "cjlab/lpcalc.hpp"

namespace cjlab {

using KernelFn = std::function<double(std::span<const double> alpha, std::span<const double> v)>;

// sigma(alpha, v) on R^n x R^d, supported in prod [alpha_lo_i, alpha_hi_i] x [-V, V]^d
struct KernelB {
    int n = 0;
    int d = 1;
    KernelFn eval;
    std::vector<double> alpha_lo, alpha_hi;
    double v_box = 1.0;
    int alpha_res = 32;
    int v_res = 64;
    bool cancels_in_v = false;
    double s_min = 0.125;
    std::string name = "kernel";

    bool inside(std::span<const double> alpha, std::span<const double> v) const;
    double operator()(std::span<const double> alpha, std::span<const double> v) const {
        return inside(alpha, v) ? eval(alpha, v) : 0.0;
    }
    double alpha_step(int i) const { return (alpha_hi[i] - alpha_lo[i]) / alpha_res; }
    double v_step() const { return 2 * v_box / v_res; }
    double alpha_node(int i, int k) const { return alpha_lo[i] + (k + 0.5) * alpha_step(i); }
    double v_node(int k) const { return -v_box + (k + 0.5) * v_step(); }
};

// n-dimensional alpha box with the same interval on every axis
KernelB make_kernel(int n, int d, KernelFn f, double alpha_lo, double alpha_hi, double v_box,
                    std::string name = "kernel");

// checks finiteness on the nodes and, when cancels_in_v is set, the per-alpha v-integral
void validate_kernel(const KernelB& s);
// per-alpha-node v-integrals and L1 masses
std::vector<std::pair<double, double>> v_integrals(const KernelB& s);
double l1_norm(const KernelB& s);
// midpoint quadrature of F(alpha, v) * weight over the kernel box
double integrate(const KernelB& s, const std::function<double(std::span<const double>, std::span<const double>, double)>& F);

KernelB scaled(const KernelB& s, double c);
// sigma^{(t)}(alpha, v) = t^d sigma(alpha, t v)
KernelB dilate(const KernelB& s, double t);

struct NormReport {
    std::string kind;
    std::map<std::string, double> components;  // summed into total
    std::map<std::string, double> extras;      // diagnostics, not summed
    double epsilon = 0.0;
    double total = 0.0;
    nlohmann::json discretization = nlohmann::json::object();

    void finalize();
    nlohmann::json to_json() const;
};

struct BesovOptions {
    int max_m = 12;  // h = 2^-m, m = 0..max_m, limited to resolvable shifts
};

NormReport besov_norm(const KernelB& s, double eps, const BesovOptions& opt = {});

struct CZKernelSpec {
    int d = 1;
    std::function<double(std::span<const double>)> kappa;
    std::optional<double> homogeneity;
    bool odd = false;
    std::optional<double> cz_constant;
    double support = std::numeric_limits<double>::infinity();  // kappa(x) = 0 for |x| > support
    double singular_radius = 0.0;                              // excluded ball around 0
    std::string name = "kappa";
};

// checks kappa(tx) = t^h kappa(x) on sampled points when a homogeneity is declared
void validate_cz(const CZKernelSpec& k);

// closure kernel K(alpha, x), zero for |x| > support
struct KernelK {
    int n = 0;
    int d = 1;
    KernelFn eval;
    std::vector<double> alpha_lo, alpha_hi;
    double support = 1.0;
    double singular_radius = 0.0;
    int alpha_res = 16;
    std::string name = "K";

    double operator()(std::span<const double> alpha, std::span<const double> x) const;
    double alpha_step(int i) const { return (alpha_hi[i] - alpha_lo[i]) / alpha_res; }
};

KernelK cj_kernel(const CZKernelSpec& kappa, int n);
std::vector<CZKernelSpec> riesz_kernels(int d);
// smooth compactly supported mean-zero kappa: -d/dx_1 of the bump, radius 1
CZKernelSpec bump_derivative_kappa(int d);
// K(alpha, x) viewed as a KernelB, x in [-support, support]
KernelK as_closure(const KernelB& s);
// x-dilation K^{(t)}(alpha, x) = t^d K(alpha, t x)
KernelK dilate(const KernelK& K, double t);

struct EtaSpec {
    std::string name = "bump";
    PointFn fn;
    double radius = 1.0;
    double mass = 1.0;
};
EtaSpec default_eta(int d);
// inf over directions of sup over dyadic tau of |eta^(tau theta)|
double eta_nondegeneracy(const EtaSpec& eta, int d);

struct KNormOptions {
    int t_max = 3;       // t = 2^k, |k| <= t_max
    int r_max = 6;       // R = 2^k, |k| <= r_max
    int h_max = 6;       // alpha shifts h = 2^-m, m = 0..h_max
    int y_levels = 8;    // |y| = 2^-m, m = -2..y_levels
    int r5_max = 6;      // R = 2^k, k = 1..r5_max
    int radial_nodes = 64;
    int angular_nodes = 32;
    double x_spacing = 0.0;   // 0 picks 2^-t_max / 4
    double x_half_extent = 0; // 0 picks support + 2^t_max * eta radius
};

NormReport k_norm(const KernelK& K, double eps, const EtaSpec& eta, const KNormOptions& opt = {});

struct DyadicKernel {
    std::vector<std::pair<int, KernelB>> pieces;
    int j_min = 0, j_max = 0;
};

struct DecomposeOptions {
    double native_spacing = 0.0;  // 0 picks support / 64
    std::size_t max_nodes = std::size_t(1) << 22;
};

DyadicKernel decompose_kernel(const KernelK& K, const MollifierSpec& m, int j_min, int j_max,
                              const DecomposeOptions& opt = {});

struct Reconstruction {
    KernelK kernel;
    double tail_proxy = 0.0;  // L1 on the annulus of the two edge pieces
};
Reconstruction reconstruct(const DyadicKernel& dk, double r_in, double r_out);
// relative L1 difference over alpha box x annulus
double annulus_residual(const KernelK& a, const KernelK& b, double r_in, double r_out,
                        int radial_nodes = 256, int angular_nodes = 64);

std::vector<std::pair<int, KernelB>> dyadic_split(const KernelB& s, double eps, int depth);

struct SplitDiagnostics {
    double residual = 0.0;  // L1 of s - sum of dilated pieces, relative
    double slope = 0.0;     // fitted log2 slope of |s_m|_{B_delta} against m
    double fitted_c = 0.0;
    double expected_slope = 0.0;
    std::vector<double> piece_norms;
};
SplitDiagnostics split_diagnostics(const KernelB& s, const std::vector<std::pair<int, KernelB>>& pieces,
                                   double eps, double delta);

double gamma_eps(const std::vector<KernelB>& family, double eps);
double m_quantity(const std::vector<KernelB>& family, int n, double eps, double nu);

}  // namespace cjlab
