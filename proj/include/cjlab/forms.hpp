#pragma once
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cjlab/field.hpp"
#include "cjlab/kernelspace.hpp"

namespace cjlab {

// fields[0..n-1] = b_1..b_n, fields[n] = b_{n+1} (y slot), fields[n+1] = b_{n+2} (x slot)
struct FormInstance {
    KernelB kernel;
    std::vector<SampledField> fields;
    std::optional<ExponentTuple> exponents;
};

enum class FormMethod { Auto, Tensor, MonteCarlo };

struct FormBudget {
    FormMethod method = FormMethod::Auto;
    std::size_t samples = std::size_t(1) << 20;  // Monte Carlo draws
    std::uint64_t seed = 1;
    int chunks = 64;      // strata along the first x axis, one RNG stream each
    int alpha_cells = 8;  // importance table resolution per alpha axis
    int v_cells = 16;     // per v axis
};

struct FormResult {
    double value = 0.0;
    double error_estimate = 0.0;
    std::string method;
    std::uint64_t seed = 0;
    nlohmann::json budget = nlohmann::json::object();
    nlohmann::json to_json() const;
};

void validate_instance(const FormInstance& inst);
FormResult evaluate_form(const FormInstance& inst, const FormBudget& budget = {});
// same as evaluate_form with the fields in the order given, kernel unchanged
FormResult evaluate_form(const KernelB& s, const std::vector<SampledField>& fields, const FormBudget& budget = {});

struct DilatedResult {
    FormResult lhs;         // Lambda[s^(2^j)](b)
    FormResult cross;       // 2^{-jd} Lambda[s](b(2^-j .))
    std::optional<FormResult> normalized;  // Lambda[s](g), g_i = 2^{-jd/p_i} b_i(2^-j .)
};
DilatedResult evaluate_dilated(const FormInstance& inst, int j, const FormBudget& budget = {});

struct PVSpec {
    double inner_radius = 0.05;
    double outer_radius = 1.0;
    int annuli_per_decade = 16;
    int radial_order = 8;    // Gauss-Legendre nodes per annulus
    int angular_nodes = 64;  // d = 2
    int segment_nodes = 8;   // quadrature nodes for the segment means
    void validate() const;
};

// unit directions with quadrature weights: {+1, -1} for d = 1, a uniform circle for d = 2
std::vector<std::pair<std::vector<double>, double>> sphere_directions(int d, int angular);
// annulus edges inner * (outer/inner)^{k/K}, K = per_decade annuli per decade
std::vector<double> annulus_edges(const PVSpec& pv, int per_decade);

struct CommutatorResult {
    std::vector<double> values;
    std::vector<double> errors;
};

// C[a_1..a_n] f(x) = int_{eps <= |x-y| <= R} kappa(x-y) prod m_{x,y} a_i f(y) dy
CommutatorResult d_commutator(const CZKernelSpec& kappa, const std::vector<SampledField>& a, const SampledField& f,
                              const PVSpec& pv, const std::vector<std::vector<double>>& probes);
CommutatorResult calderon_1d(const std::vector<SampledField>& a, const SampledField& f, const PVSpec& pv,
                             const std::vector<double>& probes);

struct RotationResult {
    double lhs = 0.0, rhs = 0.0, gap = 0.0;
    int theta_nodes = 0;
};
// <C_Omega[a] f, g> against (1/2) int Omega(theta) <C_theta[a] f, g> dtheta, d = 2
RotationResult rotation_reduce(const std::function<double(double)>& omega, const std::vector<SampledField>& a,
                               const SampledField& f, const SampledField& g, const PVSpec& pv, int theta_nodes);

struct PartialSums {
    std::vector<int> N;
    std::vector<double> values;
    std::vector<double> increments;  // |S_N - S_{N-1}|, first entry |S_0|
    std::vector<double> errors;
    std::vector<std::pair<int, FormResult>> pieces;
};
PartialSums partial_sum_form(const DyadicKernel& dk, const std::vector<SampledField>& fields,
                             const FormBudget& budget = {});

// Gauss-Legendre nodes and weights on [0, 1]
void gauss_legendre(int order, std::vector<double>& nodes, std::vector<double>& weights);

}  // namespace cjlab
