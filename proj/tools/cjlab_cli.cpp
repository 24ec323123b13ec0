#include <CLI11.hpp>

#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cjlab/adjoints.hpp"
#include "cjlab/builtins.hpp"
#include "cjlab/error.hpp"
#include "cjlab/field.hpp"
#include "cjlab/forms.hpp"
#include "cjlab/json_io.hpp"
#include "cjlab/kernelspace.hpp"
#include "cjlab/lpcalc.hpp"
#include "cjlab/numeric.hpp"
#include "cjlab/probes.hpp"

using namespace cjlab;
using nlohmann::json;

namespace {

constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 64;

struct Param {
    std::string key, fallback, help;
    bool required = false;
};

// resolved key -> value strings, defaults < config file < command line
class Params {
public:
    explicit Params(ConfigMap m) : m_(std::move(m)) {}
    const ConfigMap& map() const { return m_; }
    const std::string& str(const std::string& k) const { return m_.at(k); }
    double num(const std::string& k) const { return parse_double(k, str(k)); }
    int integer(const std::string& k) const {
        long long v = parse_int(k, str(k));
        require(v >= -(1LL << 30) && v <= (1LL << 30), "--" + k + " out of range");
        return static_cast<int>(v);
    }
    std::uint64_t seed(const std::string& k = "seed") const { return parse_seed(k, str(k)); }
    bool has(const std::string& k) const { return !str(k).empty(); }

private:
    ConfigMap m_;
};

struct Outcome {
    json result;
    std::string csv;     // written to --csv when non-empty
    bool passed = true;  // false: a check ran and failed
};

struct Command {
    std::string name, help;
    std::vector<Param> params;
    std::function<Outcome(const Params&)> run;
};

std::vector<double> parse_list(const std::string& key, const std::string& s, char sep = ',') {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep))
        if (item.find_first_not_of(" \t") != std::string::npos) out.push_back(parse_double(key, item));
    return out;
}

Grid field_grid(const Params& p, int d) {
    int N = p.integer("points");
    require(N >= 4 && N % 2 == 0, "--points must be even and >= 4");
    double L = p.num("extent");
    require(L > 0 && std::isfinite(L), "--extent must be positive");
    return Grid(d, L, N);
}

std::vector<SampledField> load_fields(const Params& p, const Grid& g, int count, std::uint64_t seed) {
    if (!p.has("field-files")) return smooth_random_fields(g, count, seed);
    std::vector<SampledField> out;
    std::stringstream ss(p.str("field-files"));
    std::string path;
    while (std::getline(ss, path, ',')) {
        std::ifstream f(path);
        if (!f) throw InvalidArgument("cannot read field file " + path);
        out.push_back(read_csv(f));
    }
    require(static_cast<int>(out.size()) == count, "--field-files must list " + std::to_string(count) + " files");
    return out;
}

FormBudget form_budget(const Params& p, std::uint64_t seed) {
    FormBudget b;
    const auto& m = p.str("method");
    if (m == "auto") b.method = FormMethod::Auto;
    else if (m == "tensor") b.method = FormMethod::Tensor;
    else if (m == "montecarlo") b.method = FormMethod::MonteCarlo;
    else throw InvalidArgument("--method must be auto | tensor | montecarlo");
    long long s = parse_int("samples", p.str("samples"));
    require(s >= 1024, "--samples must be >= 1024");
    b.samples = static_cast<std::size_t>(s);
    b.seed = seed;
    return b;
}

// ---- subcommands

Outcome cmd_norm(const Params& p) {
    auto s = builtin_kernel(p.str("kernel"), p.integer("n"), p.integer("d"), p.integer("res"));
    BesovOptions o;
    o.max_m = p.integer("max-m");
    auto r = besov_norm(s, p.num("eps"), o);
    json j = r.to_json();
    j["kernel"] = s.name;
    j["l1"] = l1_norm(s);
    return {j, "", true};
}

Outcome cmd_knorm(const Params& p) {
    const int d = p.integer("d");
    auto kap = builtin_kappa(p.str("kernel"), d);
    auto K = cj_kernel(kap, p.integer("n"));
    if (!std::isfinite(K.support)) K.support = p.num("truncate");
    if (kap.homogeneity) K.singular_radius = p.num("singular-radius");
    KNormOptions o;
    o.t_max = p.integer("t-max");
    o.r_max = p.integer("r-max");
    auto r = k_norm(K, p.num("eps"), default_eta(d), o);
    json j = r.to_json();
    j["kernel"] = K.name;
    return {j, "", true};
}

KernelK decomposable_kernel(const Params& p) {
    auto kap = builtin_kappa(p.str("kernel"), p.integer("d"));
    require(std::isfinite(kap.support), "decompose needs a compactly supported kernel (cj-bump | gaussian-tensor)");
    return cj_kernel(kap, p.integer("n"));
}

DyadicKernel run_decompose(const Params& p, const KernelK& K) {
    MollifierSpec m = default_mollifier(Grid(K.d, 2.5, K.d == 1 ? 200 : 64));
    return decompose_kernel(K, m, p.integer("j-min"), p.integer("j-max"));
}

json pieces_json(const DyadicKernel& dk) {
    json a = json::array();
    for (const auto& [j, s] : dk.pieces) {
        double worst = 0;
        for (auto [integral, mass] : v_integrals(s)) worst = std::max(worst, std::abs(integral) / (mass + 1e-300));
        a.push_back({{"j", j}, {"l1", l1_norm(s)}, {"v_box", s.v_box}, {"max_relative_v_integral", worst}});
    }
    return a;
}

Outcome cmd_decompose(const Params& p) {
    auto K = decomposable_kernel(p);
    auto dk = run_decompose(p, K);
    return {{{"kernel", K.name}, {"j_min", dk.j_min}, {"j_max", dk.j_max}, {"pieces", pieces_json(dk)}}, "", true};
}

Outcome cmd_reconstruct(const Params& p) {
    auto K = decomposable_kernel(p);
    auto dk = run_decompose(p, K);
    double r_in = p.num("r-in"), r_out = p.num("r-out");
    auto rec = reconstruct(dk, r_in, r_out);
    double res = annulus_residual(rec.kernel, K, r_in, r_out);
    return {{{"kernel", K.name},
             {"annulus", {r_in, r_out}},
             {"relative_l1_residual", res},
             {"tail_proxy", rec.tail_proxy},
             {"pieces", pieces_json(dk)}},
            "",
            true};
}

Outcome cmd_form(const Params& p) {
    const int n = p.integer("n"), d = p.integer("d");
    auto s = builtin_kernel(p.str("kernel"), n, d, p.integer("res"));
    auto seed = p.seed();
    auto g = field_grid(p, d);
    auto b = load_fields(p, g, n + 2, seed);
    auto r = evaluate_form(s, b, form_budget(p, seed));
    json j = r.to_json();
    j["kernel"] = s.name;
    j["kernel_l1"] = l1_norm(s);
    if (p.has("exponents")) {
        ExponentTuple e(parse_list("exponents", p.str("exponents")));
        require(static_cast<int>(e.p.size()) == n + 2, "--exponents must list n + 2 values");
        double bound = l1_norm(s);
        for (int i = 0; i < n + 2; ++i) bound *= lp_norm(b[i], e.p[i]);
        j["holder_bound"] = bound;
        j["within_holder_bound"] = std::abs(r.value) <= bound + r.error_estimate;
    }
    return {j, "", true};
}

std::vector<std::vector<double>> parse_probes(const std::string& s, int d) {
    std::vector<std::vector<double>> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ';')) {
        if (item.find_first_not_of(" \t") == std::string::npos) continue;
        auto x = parse_list("probes", item);
        require(static_cast<int>(x.size()) == d, "each probe needs d coordinates (';' between points)");
        out.push_back(x);
    }
    require(!out.empty(), "--probes is empty");
    return out;
}

Outcome cmd_commutator(const Params& p) {
    const int n = p.integer("n"), d = p.integer("d");
    require(n >= 0 && n <= 4, "--n must lie in 0..4");
    auto kap = builtin_kappa(p.str("kernel"), d);
    auto g = field_grid(p, d);
    auto fields = load_fields(p, g, n + 1, p.seed());
    std::vector<SampledField> a(fields.begin(), fields.begin() + n);
    PVSpec pv;
    pv.inner_radius = p.num("inner");
    pv.outer_radius = p.num("outer");
    auto probes = parse_probes(p.str("probes"), d);
    auto r = d_commutator(kap, a, fields.back(), pv, probes);
    json rows = json::array();
    for (std::size_t i = 0; i < probes.size(); ++i)
        rows.push_back({{"x", probes[i]}, {"value", r.values[i]}, {"error_estimate", r.errors[i]}});
    return {{{"kernel", kap.name}, {"probes", rows}}, "", true};
}

Outcome cmd_adjoint_check(const Params& p) {
    const int n = p.integer("n"), d = p.integer("d");
    auto seed = p.seed();
    auto s = adjoint_test_kernel(n, d);
    auto perm = parse_permutation(p.str("perm"), n, seed);
    auto g = field_grid(p, d);
    auto b = load_fields(p, g, n + 2, seed);
    auto r = adjoint_check(s, perm, b, form_budget(p, seed), p.num("factor"));
    json j = r.to_json();
    j["kernel"] = s.name;
    return {j, "", r.pass};
}

Outcome cmd_rotation_check(const Params& p) {
    const auto& name = p.str("omega");
    std::function<double(double)> omega;
    if (name == "sin") omega = [](double t) { return std::sin(t); };
    else if (name == "sin3") omega = [](double t) { return std::sin(3 * t); };
    else if (name == "cos2") omega = [](double t) { return std::cos(2 * t); };
    else throw InvalidArgument("--omega must be sin | sin3 | cos2");
    auto g = field_grid(p, 2);
    auto fields = load_fields(p, g, 3, p.seed());
    PVSpec pv;
    pv.inner_radius = p.num("inner");
    pv.outer_radius = p.num("outer");
    auto r = rotation_reduce(omega, {fields[0]}, fields[1], fields[2], pv, p.integer("theta-nodes"));
    const double tol = p.num("tolerance");
    const double scale = std::max(std::abs(r.lhs), std::abs(r.rhs));
    bool pass = r.gap <= tol * scale;
    return {{{"lhs", r.lhs}, {"rhs", r.rhs}, {"gap", r.gap}, {"relative_gap", scale > 0 ? r.gap / scale : 0.0},
             {"theta_nodes", r.theta_nodes}, {"tolerance", tol}, {"pass", pass}},
            "",
            pass};
}

Outcome cmd_growth(const Params& p) {
    GrowthProbeConfig c;
    c.n_min = p.integer("n-min");
    c.n_max = p.integer("n-max");
    c.d = p.integer("d");
    c.points_per_axis = p.integer("points");
    c.half_extent = p.num("extent");
    c.exponent_scheme = p.str("exponents");
    c.trials = p.integer("trials");
    c.seed = p.seed();
    c.bumps_per_field = p.integer("bumps");
    long long s = parse_int("samples", p.str("samples"));
    require(s >= 1024, "--samples must be >= 1024");
    c.samples = static_cast<std::size_t>(s);
    long long me = parse_int("max-evaluations", p.str("max-evaluations"));
    require(me >= 0, "--max-evaluations must be >= 0");
    c.max_evaluations = static_cast<std::size_t>(me);
    auto t = growth_probe(c);
    return {t.to_json(), t.to_csv(), true};
}

Outcome cmd_schur(const Params& p) {
    const int d = p.integer("d");
    auto k = builtin_bikernel(p.str("kernel"), d);
    const double eps = p.num("eps");
    SchurOptions so;
    so.points_per_axis = p.integer("points");
    so.max_points = p.integer("max-points");
    SIOptions si;
    si.points_per_axis = p.integer("points");
    si.max_points = p.integer("si-points");
    si.pairs_per_point = p.integer("pairs");
    si.seed = p.seed();
    auto a = schur_suite(k, eps, so);
    auto b = schur_suite(k.dual(), eps, so);
    auto c = si_ann_suite(k, eps, si);
    json dual_gap = json::object();
    double worst = 0;
    for (auto [x, y] : std::vector<std::pair<std::string, std::string>>{
             {"Int1", "Intinf"}, {"Int1_eps", "Intinf_eps"}, {"Reg1_lt", "Reginf_rt"}, {"Reg1_rt", "Reginf_lt"}}) {
        auto get = [](const NormReport& r, const std::string& key) {
            return r.components.count(key) ? r.components.at(key) : r.extras.at(key);
        };
        double g1 = std::abs(get(a, x) - get(b, y)), g2 = std::abs(get(a, y) - get(b, x));
        dual_gap[x + "~" + y] = std::max(g1, g2);
        worst = std::max({worst, g1, g2});
    }
    return {{{"kernel", k.name},
             {"schur", a.to_json()},
             {"schur_dual", b.to_json()},
             {"duality_gap", dual_gap},
             {"duality_max_gap", worst},
             {"si_ann", c.to_json()}},
            "",
            true};
}

Outcome cmd_carleson(const Params& p) {
    const int d = p.integer("d");
    const int j_min = p.integer("j-min"), j_max = p.integer("j-max");
    const auto& w = p.str("w");
    CarlesonFn fn;
    std::vector<SampledField> bands;
    if (w == "indicator") {
        fn = [](std::span<const double> x, int j) { return j == 0 && norm2(x) <= 1 ? 1.0 : 0.0; };
    } else if (w == "band") {
        fn = [](std::span<const double>, int) { return 1.0; };
    } else if (w == "lp-bump") {
        // |Q_j f| for a unit bump f
        Grid g(d, 6.0, d == 1 ? 2048 : 256);
        auto m = default_mollifier(Grid(d, 2.5, d == 1 ? 200 : 64));
        auto f = SampledField::sample(g, [](std::span<const double> x) { return bump_profile(norm2(x)); }, 1.0);
        for (int j = j_min; j <= j_max; ++j) bands.push_back(band_Q(f, j, m));
        fn = [&bands, j_min](std::span<const double> x, int j) { return std::abs(bands[j - j_min].at(x)); };
    } else {
        throw InvalidArgument("--w must be indicator | band | lp-bump");
    }
    CarlesonOptions o;
    o.centers_per_axis = p.integer("centers");
    o.nodes_per_axis = p.integer("nodes");
    double v = carleson_norm(fn, d, j_min, j_max, o);
    return {{{"w", w}, {"value", v}}, "", true};
}

Outcome cmd_mixing(const Params& p) {
    (void)p.seed();
    const auto& flow_name = p.str("flow");
    FlowSpec fl;
    fl.d = 2;
    fl.T = p.num("T");
    fl.time_steps = p.integer("time-steps");
    if (flow_name == "shear")
        fl.b = [](std::span<const double> x, double, std::span<double> out) {
            out[0] = std::sin(2 * M_PI * x[1]);
            out[1] = 0.0;
        };
    else if (flow_name == "zero")
        fl.b = [](std::span<const double>, double, std::span<double> out) { out[0] = out[1] = 0.0; };
    else if (flow_name == "cellular")
        fl.b = [](std::span<const double> x, double, std::span<double> out) {
            out[0] = std::sin(2 * M_PI * x[0]) * std::cos(2 * M_PI * x[1]);
            out[1] = -std::cos(2 * M_PI * x[0]) * std::sin(2 * M_PI * x[1]);
        };
    else
        throw InvalidArgument("--flow must be shear | zero | cellular");
    const auto& set = p.str("set");
    if (set == "halfplane")
        fl.A = [](std::span<const double> x) {
            double y = x[0] - std::floor(x[0]);
            return y < 0.5;
        };
    else if (set == "disk")
        fl.A = [](std::span<const double> x) {
            double r2 = 0;
            for (int k = 0; k < 2; ++k) {
                double y = x[k] - std::floor(x[k]) - 0.5;
                r2 += y * y;
            }
            return r2 < 0.09;
        };
    else
        throw InvalidArgument("--set must be halfplane | disk");
    MixingOptions o;
    o.points_per_axis = p.integer("points");
    o.cfl_limit = p.num("cfl");
    auto r = mixing_identity_check(fl, p.num("eps"), o);
    return {r.to_json(), mixing_csv_header() + r.csv_row(), true};
}

// ---- table

std::vector<Param> with_common(std::vector<Param> ps) {
    ps.push_back({"out", "-", "JSON output path ('-' for stdout)"});
    return ps;
}

const std::vector<Param> kFieldParams = {
    {"points", "64", "grid points per axis"},
    {"extent", "2", "grid half extent L, box [-L, L]^d"},
    {"field-files", "", "comma-separated field CSV files (default: smooth random bumps from the seed)"},
};
const std::vector<Param> kBudgetParams = {
    {"method", "auto", "auto | tensor | montecarlo"},
    {"samples", "1048576", "Monte Carlo draws"},
};

std::vector<Param> join(std::initializer_list<std::vector<Param>> parts) {
    std::vector<Param> out;
    for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
    return with_common(out);
}

std::vector<Command> commands() {
    return {
        {"norm", "Besov kernel norm B_eps of a built-in kernel",
         with_common({{"kernel", "box", "box | cj-bump | gaussian-tensor"},
                      {"n", "1", "alpha dimension"},
                      {"d", "1", "v dimension"},
                      {"eps", "1.0", "epsilon in [0, 1]"},
                      {"res", "512", "quadrature nodes per axis"},
                      {"max-m", "12", "finest dyadic shift 2^-m"}}),
         cmd_norm},
        {"knorm", "K_eps kernel norm of the Christ-Journe kernel 1_[0,1]^n(alpha) kappa(x)",
         with_common({{"kernel", "cj-bump", "riesz | cj-bump | gaussian-tensor"},
                      {"n", "1", "alpha dimension"},
                      {"d", "1", "space dimension"},
                      {"eps", "0.5", "epsilon in (0, 1]"},
                      {"t-max", "3", "dilations t = 2^k, |k| <= t-max"},
                      {"r-max", "6", "radii R = 2^k, |k| <= r-max"},
                      {"truncate", "4", "outer cutoff radius for kernels without compact support"},
                      {"singular-radius", "0.0625", "excluded ball around 0 for singular kernels"}}),
         cmd_knorm},
        {"decompose", "dyadic decomposition of a compactly supported kernel",
         with_common({{"kernel", "cj-bump", "cj-bump | gaussian-tensor"},
                      {"n", "1", "alpha dimension"},
                      {"d", "1", "space dimension"},
                      {"j-min", "-4", "coarsest scale"},
                      {"j-max", "4", "finest scale"}}),
         cmd_decompose},
        {"reconstruct", "decompose then reconstruct, residual on an annulus",
         with_common({{"kernel", "cj-bump", "cj-bump | gaussian-tensor"},
                      {"n", "1", "alpha dimension"},
                      {"d", "1", "space dimension"},
                      {"j-min", "-8", "coarsest scale"},
                      {"j-max", "8", "finest scale"},
                      {"r-in", "0.25", "annulus inner radius"},
                      {"r-out", "4", "annulus outer radius"}}),
         cmd_reconstruct},
        {"form", "evaluate the form Lambda[sigma](b_1, ..., b_{n+2})",
         join({{{"kernel", "cj-bump", "box | cj-bump | gaussian-tensor"},
                {"n", "1", "alpha dimension"},
                {"d", "1", "space dimension"},
                {"res", "32", "kernel nodes per axis"},
                {"seed", "1", "seed for fields and Monte Carlo"},
                {"exponents", "", "p_1,...,p_{n+2} for the Holder bound"}},
               kFieldParams,
               kBudgetParams}),
         cmd_form},
        {"commutator", "d-commutator C[a_1..a_n] f at probe points",
         join({{{"kernel", "riesz", "riesz | cj-bump | gaussian-tensor"},
                {"n", "1", "number of coefficients a_i"},
                {"d", "1", "space dimension"},
                {"inner", "0.05", "principal-value inner radius"},
                {"outer", "1", "outer radius"},
                {"probes", "0;0.25;0.5", "points, ';' between points, ',' between coordinates"},
                {"seed", "1", "seed for the random fields"}},
               kFieldParams}),
         cmd_commutator},
        {"adjoint-check", "form identity Lambda[l_p s](b) = Lambda[s](b_p) for a slot permutation",
         join({{{"n", "1", "alpha dimension (1..3)"},
                {"d", "1", "space dimension (1..2)"},
                {"perm", "swap", "swap | transpose i j | perm p_1 .. p_{n+2} | random"},
                {"seed", "", "seed for fields, random permutations and Monte Carlo", true},
                {"factor", "3", "tolerance in units of the combined error estimate"}},
               kFieldParams,
               kBudgetParams}),
         cmd_adjoint_check},
        {"rotation-check", "method of rotations identity in d = 2",
         join({{{"omega", "sin", "sin | sin3 | cos2 (even omega is rejected)"},
                {"theta-nodes", "96", "angular quadrature nodes"},
                {"inner", "0.125", "principal-value inner radius"},
                {"outer", "1", "outer radius"},
                {"tolerance", "0.02", "relative gap tolerance"},
                {"seed", "1", "seed for the random fields"}},
               {{"points", "128", "grid points per axis"},
                {"extent", "2", "grid half extent"},
                {"field-files", "", "three field CSV files a, f, g"}}}),
         cmd_rotation_check},
        {"growth", "growth probe of |Lambda| / prod |b_i|_p_i against n",
         with_common({{"seed", "", "master seed", true},
                      {"n-min", "0", "smallest n"},
                      {"n-max", "5", "largest n"},
                      {"d", "1", "space dimension"},
                      {"points", "64", "grid points per axis"},
                      {"extent", "4", "grid half extent"},
                      {"exponents", "equal", "equal | l2"},
                      {"trials", "8", "random trials per n (>= 8)"},
                      {"bumps", "4", "bumps per random field"},
                      {"samples", "65536", "Monte Carlo draws per evaluation"},
                      {"max-evaluations", "0", "form evaluation budget (0: unlimited)"},
                      {"csv", "", "CSV table path"}}),
         cmd_growth},
        {"schur", "Schur, SI and annular norms of a built-in bi-kernel",
         with_common({{"kernel", "box", "box | cj-bump | gaussian-tensor | riesz (d >= 2)"},
                      {"d", "1", "space dimension"},
                      {"eps", "0.5", "epsilon in (0, 1]"},
                      {"points", "128", "integration points per axis"},
                      {"max-points", "256", "sup points for the Schur norms"},
                      {"si-points", "64", "sup points for the SI norms"},
                      {"pairs", "4", "sampled pairs per point"},
                      {"seed", "1", "seed for the sampled pairs"}}),
         cmd_schur},
        {"carleson", "Carleson norm of a sampled w(x, j)",
         with_common({{"w", "indicator", "indicator | band | lp-bump"},
                      {"d", "1", "space dimension"},
                      {"j-min", "0", "smallest scale"},
                      {"j-max", "4", "largest scale"},
                      {"centers", "5", "ball centers per axis (odd)"},
                      {"nodes", "32", "quadrature nodes across a ball"}}),
         cmd_carleson},
        {"mixing", "Bianchini mixing identity on the torus",
         with_common({{"seed", "", "run seed (recorded)", true},
                      {"flow", "shear", "shear | cellular | zero"},
                      {"set", "halfplane", "halfplane | disk"},
                      {"eps", "1/16", "truncation in (0, 1/4)"},
                      {"T", "0.5", "final time"},
                      {"points", "128", "torus grid points per axis"},
                      {"time-steps", "32", "trapezoid time nodes"},
                      {"cfl", "8", "max |b| dt / h"},
                      {"csv", "", "CSV row path"}}),
         cmd_mixing},
    };
}

std::string usage(const std::vector<Command>& cmds) {
    std::string s = "usage: cjlab_cli <subcommand> [--config FILE] [--key value ...]\n\nsubcommands:\n";
    for (const auto& c : cmds) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "  %-15s %s\n", c.name.c_str(), c.help.c_str());
        s += buf;
    }
    s += "\nrun 'cjlab_cli <subcommand> --help' for its options; CJLAB_THREADS sets the worker count\n";
    return s;
}

int run(int argc, char** argv) {
    const auto cmds = commands();
    if (argc < 2) {
        std::cerr << usage(cmds);
        return kExitUsage;
    }
    std::string first = argv[1];
    if (first == "--help" || first == "-h") {
        std::cout << usage(cmds);
        return 0;
    }
    const Command* cmd = nullptr;
    for (const auto& c : cmds)
        if (c.name == first) cmd = &c;
    if (!cmd) {
        std::cerr << "unknown subcommand '" << first << "'\n\n" << usage(cmds);
        return kExitUsage;
    }

    CLI::App app(cmd->help, "cjlab_cli " + cmd->name);
    std::string config_path;
    app.add_option("--config", config_path, "flat key = value config file");
    std::map<std::string, std::string> given;
    std::map<std::string, CLI::Option*> opts;
    for (const auto& p : cmd->params) {
        std::string desc = p.help + (p.required ? " (required)" : p.fallback.empty() ? "" : " [" + p.fallback + "]");
        opts[p.key] = app.add_option("--" + p.key, given[p.key], desc);
    }
    try {
        app.parse(argc - 1, argv + 1);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return InvalidArgument("").exit_code();
    }

    try {
        ConfigMap file;
        if (!config_path.empty()) file = read_kv_config_file(config_path);
        ConfigMap resolved;
        for (const auto& p : cmd->params) {
            std::string v = p.fallback;
            if (auto it = file.find(p.key); it != file.end()) v = it->second;
            if (opts[p.key]->count() > 0) v = given[p.key];
            if (p.required && v.empty()) throw InvalidArgument("--" + p.key + " is required for " + cmd->name);
            resolved[p.key] = v;
        }
        for (const auto& [k, v] : file)
            if (!resolved.count(k)) throw InvalidArgument("config key '" + k + "' is not an option of " + cmd->name);
        Params params(resolved);
        auto out = cmd->run(params);
        ConfigMap recorded = resolved;
        recorded.erase("out");
        recorded.erase("csv");
        write_text(resolved.at("out"), dump_json(output_envelope(cmd->name, recorded, out.result)));
        if (resolved.count("csv") && !resolved.at("csv").empty() && !out.csv.empty())
            write_text(resolved.at("csv"), out.csv);
        if (!out.passed) {
            std::cerr << cmd->name << ": check failed\n";
            return kExitCheckFailed;
        }
        return 0;
    } catch (const Error& e) {
        std::cerr << cmd->name << ": " << e.kind() << ": " << e.what() << "\n";
        return e.exit_code();
    } catch (const nlohmann::json::exception& e) {
        std::cerr << cmd->name << ": " << e.what() << "\n";
        return 2;
    }
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
