#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "cjlab/adjoints.hpp"
#include "cjlab/field.hpp"
#include "cjlab/forms.hpp"
#include "cjlab/kernelspace.hpp"

namespace cjlab {

// named kernels sigma(alpha, v):
//   box              2^-d 1_{[0,1]^n}(alpha) 1_{[-1,1]^d}(v)
//   cj-bump          1_{[0,1]^n}(alpha) kappa(v), kappa = -d/dx_1 bump
//   gaussian-tensor  1_{[0,1]^n}(alpha) v_1 prod exp(-4 v_k^2), |v_k| <= 2
KernelB builtin_kernel(const std::string& name, int n, int d, int res);
std::vector<std::string> builtin_kernel_names();

// named convolution kernels kappa: riesz (d = 1: 1/x), cj-bump, gaussian-tensor
CZKernelSpec builtin_kappa(const std::string& name, int d);

// smooth kernel with alpha_1 in [1.25, 2] (clear of the singular hyperplane), mean zero in v
KernelB adjoint_test_kernel(int n, int d);

// radial bumps with random centers, radii and amplitudes
std::vector<SampledField> smooth_random_fields(const Grid& g, int count, std::uint64_t seed);

// "swap", "transpose i j", "perm p_1 .. p_{n+2}", "random" (a word of four generators) or a bare image list
Permutation parse_permutation(const std::string& spec, int n, std::uint64_t seed);
Permutation random_generator_word(int n, int length, std::uint64_t seed);

struct AdjointCheck {
    Permutation perm;
    TransformChain chain;
    FormResult transformed;  // Lambda[l s](b)
    FormResult permuted;     // Lambda[s](b_{p(1)}, ..)
    double gap = 0.0;
    double tolerance = 0.0;  // factor * combined error estimate
    bool pass = false;
    nlohmann::json to_json() const;
};

AdjointCheck adjoint_check(const KernelB& s, const Permutation& p, const std::vector<SampledField>& b,
                           const FormBudget& budget = {}, double factor = 3.0);

}  // namespace cjlab
