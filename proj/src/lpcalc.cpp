#include "cjlab/lpcalc.hpp"

#include <cmath>

#include "cjlab/error.hpp"
#include "cjlab/numeric.hpp"
#include "cjlab/spectral.hpp"

namespace cjlab {

double bump_profile(double r) { return r < 1.0 ? std::exp(-1.0 / (1.0 - r * r)) : 0.0; }

double bump_normalization(int d) {
    // composite Simpson in r on [0,1]; the profile is flat at both ends
    const int n = 20000;
    double s = 0;
    for (int i = 0; i <= n; ++i) {
        double r = static_cast<double>(i) / n;
        double w = (i == 0 || i == n) ? 1 : (i % 2 ? 4 : 2);
        s += w * bump_profile(r) * std::pow(r, d - 1);
    }
    s /= 3.0 * n;
    double sphere = d * unit_ball_volume(d);
    return 1.0 / (sphere * s);
}

MollifierSpec default_mollifier(const Grid& g) {
    MollifierSpec m;
    m.dim = g.dim;
    double c = bump_normalization(g.dim);
    m.radial = [c](double r) { return c * bump_profile(r); };
    m.phi = mollifier_kernel(m, g, 0);
    m.psi = m.phi.plus(mollifier_kernel(m, g, -1), -1.0);
    return m;
}

SampledField mollifier_kernel(const MollifierSpec& m, const Grid& g, int j) {
    require(m.dim == g.dim, "mollifier dimension mismatch");
    double s = std::ldexp(1.0, j);
    double r = m.radius / s;
    if (r > g.half_extent * (1 + 1e-12))
        throw SupportOverflow("dilated mollifier does not fit the grid");
    auto k = SampledField::sample(g, [&](std::span<const double> x) { return m.radial(s * norm2(x)); }, r);
    double mass = integral(k);
    return k.scaled(1.0 / mass);
}

SampledField project_P(const SampledField& f, int j, const MollifierSpec& m) {
    double r = f.support_radius() + std::ldexp(m.radius, -j);
    if (r > f.grid().half_extent * (1 + 1e-12))
        throw SupportOverflow("P_j support exceeds the box");
    return convolve(f, mollifier_kernel(m, f.grid(), j));
}

SampledField band_Q(const SampledField& f, int j, const MollifierSpec& m) {
    return project_P(f, j, m).plus(project_P(f, j - 1, m), -1.0);
}

BandCutoffSpec default_cutoff() {
    BandCutoffSpec c;
    c.chi0 = [](double r) {
        if (r <= 0.5) return 1.0;
        if (r >= 1.0) return 0.0;
        double t = 2 * r - 1;
        return 1.0 - t * t * t * (t * (6 * t - 15) + 10);
    };
    return c;
}

double band_multiplier(const BandCutoffSpec& c, int j, double xi, bool tilde) {
    if (tilde) return c.chi0(std::ldexp(xi, -j - 1)) - c.chi0(std::ldexp(xi, 2 - j));
    return c.chi0(std::ldexp(xi, -j)) - c.chi0(std::ldexp(xi, 1 - j));
}

SampledField fourier_Q(const SampledField& f, int j, const BandCutoffSpec& c, bool tilde) {
    const Grid& g = f.grid();
    const double h = g.spacing();
    if (std::ldexp(1.0, j) > std::numbers::pi / h * 0.5)
        throw ResolutionError("band 2^" + std::to_string(j) + " exceeds half the Nyquist frequency " +
                              std::to_string(std::numbers::pi / h));
    const double dk = 2 * std::numbers::pi / (g.points_per_axis * h);
    std::vector<int> dims(g.dim, g.points_per_axis);
    auto out = spectral::fourier_multiply(f.values(), dims, [&](std::span<const int> k) {
        double s = 0;
        for (int v : k) s += static_cast<double>(v) * v;
        return band_multiplier(c, j, std::sqrt(s) * dk, tilde);
    });
    return SampledField(g, std::move(out), std::max(f.support_radius(), g.half_extent * std::sqrt(g.dim)));
}

double u_norm(const SampledField& u) {
    const Grid& g = u.grid();
    const int d = g.dim, N = g.points_per_axis;
    const double h = g.spacing();
    double best = 0;
    std::vector<double> x(d);
    for (std::size_t i = 0; i < g.size(); ++i) {
        auto idx = g.unflatten(i);
        double grad2 = 0;
        for (int a = 0; a < d; ++a) {
            auto lo = idx, hi = idx;
            double span = 2 * h;
            if (idx[a] == 0) { lo[a] = 0; hi[a] = 1; span = h; }
            else if (idx[a] == N - 1) { lo[a] = N - 2; hi[a] = N - 1; span = h; }
            else { lo[a] -= 1; hi[a] += 1; }
            double gr = (u[g.flatten(hi)] - u[g.flatten(lo)]) / span;
            grad2 += gr * gr;
        }
        g.node(i, x);
        double w = 1 + std::pow(norm2(x), d + 0.5);
        best = std::max(best, w * (std::abs(u[i]) + std::sqrt(grad2)));
    }
    return best;
}

UKernel make_ukernel(SampledField u) {
    double m = integral(u), l1 = lp_norm(u, 1);
    if (std::abs(m) > 1e-6 * std::max(1.0, l1))
        throw CancellationViolation("integral of u is " + std::to_string(m) + ", expected 0");
    UKernel k;
    k.norm = u_norm(u);
    k.u = std::move(u);
    return k;
}

namespace {

double chi0(double r) { return radial_cutoff(r, 0.125, 0.25); }

// chi_j evaluated at x = 2^j z, expressed in z
double chi_scaled(int j, double rz) {
    if (j == 0) return chi0(rz);
    return chi0(rz) - chi0(2 * rz);
}

}  // namespace

UDecomposition decompose_U(const UKernel& uk, int depth, int atom_points) {
    require(depth >= 0, "depth must be nonnegative");
    const SampledField& u = uk.u;
    const int d = u.dim();
    Grid ag(d, 0.5, atom_points);
    const double hv = ag.cell_volume();
    const std::size_t na = ag.size();
    UDecomposition out;
    double A = 0.0;  // A_j = -sum_{k<j} a_k
    std::vector<double> z(d), x(d);
    std::vector<double> uc(na), cj(na), cprev(na);
    for (int j = 0; j <= depth; ++j) {
        const double s = std::ldexp(1.0, j);
        const double sd = std::pow(s, d);
        Accumulator am, cm, pm;
        for (std::size_t i = 0; i < na; ++i) {
            ag.node(i, z);
            double rz = norm2(z);
            for (int a = 0; a < d; ++a) x[a] = s * z[a];
            cj[i] = chi_scaled(j, rz);
            uc[i] = cj[i] != 0.0 ? u.at(x) * cj[i] : 0.0;
            cprev[i] = j >= 1 ? chi_scaled(j - 1, 2 * rz) : 0.0;
            am.add(uc[i]);
            cm.add(cj[i]);
            pm.add(cprev[i]);
        }
        const double aj = sd * hv * am.value();
        const double ij = sd * hv * cm.value();
        const double ip = sd * hv * pm.value();
        std::vector<double> atom(na);
        const double amp = sd * std::sqrt(s);
        for (std::size_t i = 0; i < na; ++i) {
            double tj = cj[i] / ij;
            double b = uc[i] - aj * tj;
            if (j >= 1) b += A * (tj - cprev[i] / ip);
            atom[i] = amp * b;
        }
        SampledField af(ag, std::move(atom), 0.25);
        out.sup_constant = std::max(out.sup_constant, uk.norm > 0 ? lp_norm(af, INFINITY) / uk.norm : 0.0);
        out.atoms.emplace_back(-j, std::move(af));
        A -= aj;
    }
    out.tail = std::abs(A);
    return out;
}

SampledField reconstruct_U(const UDecomposition& dec, const Grid& g) {
    SampledField sum = SampledField::zeros(g, g.half_extent * std::sqrt(g.dim));
    for (const auto& [j, atom] : dec.atoms) {
        double t = std::ldexp(1.0, j);  // j <= 0
        auto piece = resample(atom, g, t, std::min(0.25 / t, g.half_extent * std::sqrt(g.dim)));
        sum = sum.plus(piece, std::pow(2.0, j / 2.0));
    }
    return sum;
}

}  // namespace cjlab
