#pragma once
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "cjlab/field.hpp"

namespace cjlab {

// phi(x) = c exp(-1/(1-|x|^2)) on |x| < 1
double bump_profile(double r);
double bump_normalization(int d);  // c with int phi = 1

struct MollifierSpec {
    int dim = 1;
    std::string name = "bump";
    std::function<double(double)> radial;  // phi as a function of |x|, integral 1
    double radius = 1.0;
    SampledField phi;  // reference samples on the construction grid
    SampledField psi;  // phi - 2^-d phi(./2), same grid
};

MollifierSpec default_mollifier(const Grid& g);

// 2^{jd} phi(2^j x) on g, renormalized so its Riemann sum is exactly 1
SampledField mollifier_kernel(const MollifierSpec& m, const Grid& g, int j);

SampledField project_P(const SampledField& f, int j, const MollifierSpec& m);
SampledField band_Q(const SampledField& f, int j, const MollifierSpec& m);

struct BandCutoffSpec {
    std::string name = "smoothstep5";
    std::function<double(double)> chi0;  // radial, 1 on [0,1/2], 0 on [1,inf)
};
BandCutoffSpec default_cutoff();

// Fourier multiplier for Q_j (or the wider tilde profile) at angular frequency |xi|
double band_multiplier(const BandCutoffSpec& c, int j, double xi, bool tilde);
SampledField fourier_Q(const SampledField& f, int j, const BandCutoffSpec& c, bool tilde = false);

double u_norm(const SampledField& u);

struct UKernel {
    SampledField u;
    double norm = 0.0;
};
UKernel make_ukernel(SampledField u);

struct UDecomposition {
    std::vector<std::pair<int, SampledField>> atoms;  // (j <= 0, atom)
    double sup_constant = 0.0;                        // max |atom|_inf / u_norm
    double tail = 0.0;                                // |A_{depth+1}|, mass not represented
};

UDecomposition decompose_U(const UKernel& u, int depth, int atom_points = 256);
// sum_j 2^{j/2} dil(atom_j, 2^j) sampled on g
SampledField reconstruct_U(const UDecomposition& dec, const Grid& g);

}  // namespace cjlab
