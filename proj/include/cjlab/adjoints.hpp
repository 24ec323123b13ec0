#pragma once
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cjlab/kernelspace.hpp"

namespace cjlab {

// closure on R^N supported in prod [lo_i, hi_i]
struct BoxFunction {
    int N = 1;
    std::function<double(std::span<const double>)> eval;
    std::vector<double> lo, hi;
    int res = 32;  // midpoint nodes per axis for quadrature

    double operator()(std::span<const double> s) const;
    double step(int i) const { return (hi[i] - lo[i]) / res; }
};

BoxFunction from_kernel(const KernelB& s);
// alpha box from the first n coordinates, v box from the rest
KernelB to_kernel(const BoxFunction& g, const KernelB& like);

// J_1 g(s) = |s_1|^-2 g(1/s_1, s_2, ...); margin: required distance of the s_1 interval from 0
BoxFunction inversion_J(const BoxFunction& g, double margin = 0.0);
// M g(s) = |s_1|^k g(s_1, s_1 s_2, ..., s_1 s_{k+1}, s_{k+2}, ...)
BoxFunction shear_M(const BoxFunction& g, int k);
BoxFunction shear_M_inverse(const BoxFunction& g, int k);
// Mt_d g(alpha, v) = |alpha_1|^d g(alpha, alpha_1 v) on R^n x R^d
BoxFunction shear_Mtilde(const BoxFunction& g, int n, int d);
BoxFunction shear_Mtilde_inverse(const BoxFunction& g, int n, int d);

double l1_norm(const BoxFunction& g);
// max_i int (1+|s_i|)^eps |g| + sup_{h = 2^-m, i} h^-eps |g(. + h e_i) - g|_1
double frak_norm(const BoxFunction& g, double eps, int max_m = 10);

// permutation of {1..m} as an image list, p[i-1] = p(i)
using Permutation = std::vector<int>;
void validate_permutation(const Permutation& p);
Permutation compose(const Permutation& a, const Permutation& b);  // a o b
Permutation inverse(const Permutation& p);

// Lambda[out](b_1..b_n, ...) = Lambda[s](b_{pi(1)}, ..., b_{pi(n)}, ...)
KernelB perm_first_n(const KernelB& s, const Permutation& pi);
// Lambda[out](.., b_{n+1}, b_{n+2}) = Lambda[s](.., b_{n+2}, b_{n+1})
KernelB swap_last_two(const KernelB& s);
// Lambda[out](b) = Lambda[s](b with slots 1 and n+1 exchanged), via J Mt^-1 J M^-1 J
KernelB ell_transposition(const KernelB& s);
// direct closed form of the same map, for cross-checks
KernelB ell_transposition_direct(const KernelB& s);

struct ChainLink {
    std::string type;  // perm-first-n | swap-last-two | transpose-1-(n+1)
    Permutation pi;    // only for perm-first-n
    Permutation sigma; // action on the n+2 slots
};
struct TransformChain {
    Permutation target;
    std::vector<ChainLink> links;  // applied first to last
    nlohmann::json to_json() const;
};

// Lambda[out](b) = Lambda[s](b_{p(1)}, ..., b_{p(n+2)})
TransformChain factor_permutation(const Permutation& p, int n);
std::pair<KernelB, TransformChain> ell_general(const KernelB& s, const Permutation& p);

struct Gamma12 {
    BoxFunction gamma1, gamma2;
};
Gamma12 gamma12(const BoxFunction& g, int n);

}  // namespace cjlab
