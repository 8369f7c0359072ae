#pragma once

// Grid estimates of the level-set constants behind the inter-sample Lyapunov
// bound, the bound itself, and the sigma-MASP sampling period derived from
// them.
//
// Every sup-type estimate is the maximum over a finite candidate set (a tensor
// grid over the level-set box, filtered by V <= c) multiplied by a safety
// factor; the inf-type rate estimates are minima multiplied by a deflation
// factor. Max/min reductions are order independent, so the parallel
// evaluation is deterministic.

#include "mbpetc/dynamics.hpp"
#include "mbpetc/keyvalue.hpp"

#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>

namespace mbpetc {

struct EstimationOptions {
    std::size_t grid_resolution = 200;
    // Points per axis of the coarser grid that supplies the frozen inputs
    // kappa(x3) for the L1 estimate. The input extremes over the full grid
    // are always added.
    std::size_t input_resolution = 48;
    double sup_safety = 1.05;
    double inf_safety = 0.95;
    // Overrides the level-set box. Sharing one box between two level sets
    // makes their candidate sets nested.
    std::optional<Box> box;
};

enum class GammaMethod {
    // rho = inf -L_fV / V
    Direct,
    // rho = inf (-L_fV / ||x||^2) / sup (V / ||x||^2)
    NormComparison,
};

inline std::string to_string(GammaMethod m) {
    return m == GammaMethod::Direct ? "direct" : "norm_comparison";
}

inline GammaMethod parse_gamma_method(const std::string& s) {
    if (s == "direct") return GammaMethod::Direct;
    if (s == "norm_comparison") return GammaMethod::NormComparison;
    throw InputError("unknown gamma method '" + s + "' (expected direct or norm_comparison)");
}

namespace detail {

inline void check_resolution(const EstimationOptions& opts) {
    if (opts.grid_resolution < 8) throw InputError("grid_resolution must be at least 8");
    if (opts.input_resolution < 2) throw InputError("input_resolution must be at least 2");
    if (!(opts.sup_safety >= 1.0) || !(opts.inf_safety > 0.0 && opts.inf_safety <= 1.0)) {
        throw InputError("safety factors must satisfy sup >= 1 and 0 < inf <= 1");
    }
}

inline std::vector<Vector> level_set_candidates(const SystemModel& model, const LevelSetSpec& ls,
                                                const Box& box, std::size_t per_axis) {
    const TensorGrid grid(box, per_axis);
    std::vector<Vector> out;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        Vector x = grid.point(i);
        if (model.v(x) <= ls.c) out.push_back(std::move(x));
    }
    if (out.empty()) throw InputError("level set contains no grid points; increase grid_resolution");
    return out;
}

inline Box candidate_box(const SystemModel& model, const LevelSetSpec& ls, const EstimationOptions& opts) {
    return opts.box ? *opts.box : level_set_box(model, ls.c);
}

// Central-difference Jacobian of g at x, step scaled per coordinate.
template <class Map>
Matrix jacobian_fd(const Map& g, const Vector& x) {
    const Eigen::Index n = x.size();
    Matrix jac;
    Vector xp = x, xm = x;
    for (Eigen::Index j = 0; j < n; ++j) {
        const double step = 1e-6 * std::max(1.0, std::abs(x[j]));
        xp[j] = x[j] + step;
        xm[j] = x[j] - step;
        const Vector d = (g(xp) - g(xm)) / (2.0 * step);
        if (j == 0) jac.resize(d.size(), n);
        jac.col(j) = d;
        xp[j] = x[j];
        xm[j] = x[j];
    }
    return jac;
}

inline double finite_or_fail(double value, const Vector& x, const char* what) {
    if (!std::isfinite(value)) {
        throw CertificationError(std::string(what) + ": non-finite evaluation at " + format_vector(x), x);
    }
    return value;
}

constexpr double kInf = std::numeric_limits<double>::infinity();

// SVD of a matrix holding NaN need not return NaN
inline double finite_norm(const Matrix& m) { return m.allFinite() ? spectral_norm(m) : kInf; }

inline auto max_of = [](double a, double b) { return std::max(a, b); };
inline auto min_of = [](double a, double b) { return std::min(a, b); };

}  // namespace detail

/// Lipschitz constant of x -> f(x, kappa(x3)) on the level set, uniformly in x3.
///
/// Grid estimate: max over candidate states x and frozen inputs u = kappa(x3)
/// of the spectral norm of the central-difference state Jacobian. The x3
/// candidates are a coarser grid plus the per-component argmin/argmax of
/// kappa over the full grid.
inline double estimate_L1(const SystemModel& model, const LevelSetSpec& ls, const EstimationOptions& opts = {}) {
    validate(ls);
    detail::check_resolution(opts);
    const Box box = detail::candidate_box(model, ls, opts);
    const auto xs = detail::level_set_candidates(model, ls, box, opts.grid_resolution);

    std::vector<Vector> inputs;
    for (const auto& x3 : detail::level_set_candidates(model, ls, box, opts.input_resolution)) {
        inputs.push_back(model.kappa(x3));
    }
    {
        const Eigen::Index nu = model.input_dim;
        std::vector<std::size_t> lo(nu, 0), hi(nu, 0);
        std::vector<Vector> us;
        us.reserve(xs.size());
        for (std::size_t i = 0; i < xs.size(); ++i) {
            us.push_back(model.kappa(xs[i]));
            for (Eigen::Index j = 0; j < nu; ++j) {
                if (us[i][j] < us[lo[j]][j]) lo[j] = i;
                if (us[i][j] > us[hi[j]][j]) hi[j] = i;
            }
        }
        for (Eigen::Index j = 0; j < nu; ++j) {
            inputs.push_back(us[lo[j]]);
            inputs.push_back(us[hi[j]]);
        }
    }

    const double best = parallel_reduce(
        xs.size(), 0.0,
        [&](std::size_t i) {
            double local = 0.0;
            for (const auto& u : inputs) {
                const Matrix jac = detail::jacobian_fd([&](const Vector& z) { return model.f(z, u); }, xs[i]);
                local = std::max(local, detail::finite_or_fail(detail::finite_norm(jac), xs[i], "estimate_L1"));
            }
            return local;
        },
        detail::max_of);
    return best * opts.sup_safety;
}

/// Lipschitz constant of the gradient V' on the level set. Exact (2 ||P||)
/// for quadratic certificates; otherwise the max spectral norm of the
/// finite-difference Hessian over the grid, inflated.
inline double estimate_L2(const SystemModel& model, const LevelSetSpec& ls, const EstimationOptions& opts = {}) {
    validate(ls);
    detail::check_resolution(opts);
    if (model.quadratic_form) return 2.0 * spectral_norm(*model.quadratic_form);
    const Box box = detail::candidate_box(model, ls, opts);
    const auto xs = detail::level_set_candidates(model, ls, box, opts.grid_resolution);
    const double best = parallel_reduce(
        xs.size(), 0.0,
        [&](std::size_t i) {
            const Matrix hess = detail::jacobian_fd(
                [&](const Vector& z) -> Vector { return model.v_grad(z).transpose(); }, xs[i]);
            return detail::finite_or_fail(detail::finite_norm(hess), xs[i], "estimate_L2");
        },
        detail::max_of);
    return best * opts.sup_safety;
}

/// sup over the level set (outside the margin ball) of
///   (||V'|| ||f|| + ||f||^2) / |L_f V|   with f = f(x, kappa(x)).
/// Throws CertificationError at the first point where L_f V >= 0.
inline double estimate_M_max(const SystemModel& model, const LevelSetSpec& ls,
                             const EstimationOptions& opts = {}) {
    validate(ls);
    detail::check_resolution(opts);
    const Box box = detail::candidate_box(model, ls, opts);
    const auto xs = detail::level_set_candidates(model, ls, box, opts.grid_resolution);
    const double best = parallel_reduce(
        xs.size(), 0.0,
        [&](std::size_t i) {
            const Vector& x = xs[i];
            if (x.norm() < ls.margin) return 0.0;
            const Vector fx = model.f(x, model.kappa(x));
            const RowVector g = model.v_grad(x);
            const double lie = g.dot(fx.transpose());
            if (!(lie < 0.0)) {
                throw CertificationError("estimate_M_max: L_f V = " + format_double(lie) +
                                             " >= 0 (decrease condition violated) at " + format_vector(x),
                                         x);
            }
            const double nf = fx.norm();
            return detail::finite_or_fail((g.norm() * nf + nf * nf) / -lie, x, "estimate_M_max");
        },
        detail::max_of);
    return best * opts.sup_safety;
}

namespace detail {

// inf over the candidate set (outside the margin ball) of -L_fV / denom(x).
template <class Denominator>
double decay_ratio_inf(const SystemModel& model, const LevelSetSpec& ls, const EstimationOptions& opts,
                       Denominator denom, const char* what) {
    validate(ls);
    check_resolution(opts);
    const Box box = candidate_box(model, ls, opts);
    const auto xs = level_set_candidates(model, ls, box, opts.grid_resolution);
    const double best = parallel_reduce(
        xs.size(), kInf,
        [&](std::size_t i) {
            const Vector& x = xs[i];
            if (x.norm() < ls.margin) return kInf;
            const double lie = closed_loop_lie_derivative(model, x);
            return finite_or_fail(-lie / denom(x), x, what);
        },
        min_of);
    return best;
}

}  // namespace detail

/// Certified linear decay rate rho with L_f V(x, kappa(x)) <= -rho V(x):
/// rho = inf -L_fV / V over the grid, deflated.
inline double estimate_gamma_rate(const SystemModel& model, const LevelSetSpec& ls,
                                  const EstimationOptions& opts = {}) {
    const double inf = detail::decay_ratio_inf(
        model, ls, opts, [&](const Vector& x) { return model.v(x); }, "estimate_gamma_rate");
    const double rho = inf * opts.inf_safety;
    if (!(rho > 0.0)) {
        throw CertificationError("estimate_gamma_rate: no positive decay rate (rho = " + format_double(rho) + ")",
                                 Vector::Zero(model.state_dim));
    }
    return rho;
}

/// Decay rate through the norm comparison
///   -L_f V >= a ||x||^2,  V <= b ||x||^2   =>   -L_f V >= (a / b) V.
/// Never larger than estimate_gamma_rate on the same grid. b is exact
/// (lambda_max(P)) for quadratic certificates.
inline double estimate_gamma_rate_norm_comparison(const SystemModel& model, const LevelSetSpec& ls,
                                                  const EstimationOptions& opts = {}) {
    const double a = detail::decay_ratio_inf(
        model, ls, opts, [](const Vector& x) { return x.squaredNorm(); }, "estimate_gamma_rate_norm_comparison");
    double b = 0.0;
    if (model.quadratic_form) {
        b = quadratic_bounds(*model.quadratic_form).lambda_max;
    } else {
        const Box box = detail::candidate_box(model, ls, opts);
        for (const auto& x : detail::level_set_candidates(model, ls, box, opts.grid_resolution)) {
            if (x.norm() >= ls.margin) b = std::max(b, model.v(x) / x.squaredNorm());
        }
        b *= opts.sup_safety;
    }
    const double rho = a / b * opts.inf_safety;
    if (!(rho > 0.0) || !std::isfinite(rho)) {
        throw CertificationError("estimate_gamma_rate_norm_comparison: no positive decay rate (rho = " +
                                     format_double(rho) + ")",
                                 Vector::Zero(model.state_dim));
    }
    return rho;
}

// ---------------------------------------------------------------------------
// Closed-form combinations
// ---------------------------------------------------------------------------

/// mu_c = sqrt(e) * max{L1, L2 (1 + L1 sqrt(e))}
inline double compute_mu(double l1, double l2) {
    const double sqrt_e = std::sqrt(std::numbers::e);
    return sqrt_e * std::max(l1, l2 * (1.0 + l1 * sqrt_e));
}

enum class MaspTerm { Convergence, Lipschitz };

inline std::string to_string(MaspTerm t) { return t == MaspTerm::Convergence ? "convergence" : "lipschitz"; }

struct SigmaMasp {
    double h;
    // (3(1 - sigma) / (2 mu M))^2
    double convergence_term;
    // 1 / (1 + 2 L1)
    double lipschitz_term;
    MaspTerm active;
};

inline SigmaMasp compute_sigma_masp(double sigma, double l1, double mu, double m_max) {
    for (double v : {sigma, l1, mu, m_max}) {
        if (!std::isfinite(v)) throw InputError("compute_sigma_masp: non-finite constant");
    }
    if (!(sigma > 0.0 && sigma < 1.0)) throw InputError("compute_sigma_masp: sigma must lie in (0, 1)");
    const double ratio = 3.0 * (1.0 - sigma) / (2.0 * mu * m_max);
    const double conv = ratio * ratio;  // +inf when mu * M == 0
    const double lip = 1.0 / (1.0 + 2.0 * l1);
    return conv <= lip ? SigmaMasp{conv, conv, lip, MaspTerm::Convergence}
                       : SigmaMasp{lip, conv, lip, MaspTerm::Lipschitz};
}

struct CertifiedConstants {
    std::string model;
    double c = 0.0;
    double sigma = 0.0;
    double margin = 0.0;
    double L1c = 0.0;
    double L2c = 0.0;
    double mu_c = 0.0;
    double M_max_c = 0.0;
    GammaMethod gamma_method = GammaMethod::Direct;
    double gamma_rate = 0.0;
    // Both rate estimates, for the record.
    double gamma_rate_direct = 0.0;
    double gamma_rate_norm_comparison = 0.0;
    double h_sigma_masp = 0.0;
    MaspTerm active_term = MaspTerm::Convergence;
    std::size_t grid_resolution = 0;
    std::size_t input_resolution = 0;
    double sup_safety = 1.0;
    double inf_safety = 1.0;

    SigmaMasp masp() const { return compute_sigma_masp(sigma, L1c, mu_c, M_max_c); }
    double lipschitz_horizon() const { return 1.0 / (1.0 + 2.0 * L1c); }
};

/// Throws InputError unless the stored constants are internally consistent:
/// mu_c and h_sigma_masp must equal their recomputation bit for bit.
inline void validate(const CertifiedConstants& k) {
    for (double v : {k.c, k.L1c, k.L2c, k.mu_c, k.M_max_c, k.gamma_rate, k.h_sigma_masp}) {
        if (!std::isfinite(v) || v < 0.0) throw InputError("constants: values must be finite and nonnegative");
    }
    if (!(k.sigma > 0.0 && k.sigma < 1.0)) throw InputError("constants: sigma must lie in (0, 1)");
    if (!(k.c > 0.0)) throw InputError("constants: c must be positive");
    if (k.mu_c != compute_mu(k.L1c, k.L2c)) throw InputError("constants: mu_c inconsistent with L1c, L2c");
    const SigmaMasp m = k.masp();
    if (k.h_sigma_masp != m.h || k.active_term != m.active) {
        throw InputError("constants: h_sigma_masp inconsistent with the stored constants");
    }
}

/// Runs every estimator on one level set and assembles the constants.
inline CertifiedConstants certify(const SystemModel& model, const LevelSetSpec& ls, double sigma,
                                  const EstimationOptions& opts = {},
                                  GammaMethod method = GammaMethod::Direct) {
    if (!(sigma > 0.0 && sigma < 1.0)) throw InputError("certify: sigma must lie in (0, 1)");
    CertifiedConstants k;
    k.model = model.name;
    k.c = ls.c;
    k.sigma = sigma;
    k.margin = ls.margin;
    k.L1c = estimate_L1(model, ls, opts);
    k.L2c = estimate_L2(model, ls, opts);
    k.mu_c = compute_mu(k.L1c, k.L2c);
    k.M_max_c = estimate_M_max(model, ls, opts);
    k.gamma_rate_direct = estimate_gamma_rate(model, ls, opts);
    k.gamma_rate_norm_comparison = estimate_gamma_rate_norm_comparison(model, ls, opts);
    k.gamma_method = method;
    k.gamma_rate = method == GammaMethod::Direct ? k.gamma_rate_direct : k.gamma_rate_norm_comparison;
    const SigmaMasp m = compute_sigma_masp(sigma, k.L1c, k.mu_c, k.M_max_c);
    k.h_sigma_masp = m.h;
    k.active_term = m.active;
    k.grid_resolution = opts.grid_resolution;
    k.input_resolution = opts.input_resolution;
    k.sup_safety = opts.sup_safety;
    k.inf_safety = opts.inf_safety;
    return k;
}

/// gamma(s) as used by the trigger and the reference decay: the model's own
/// gamma when it has one, the certified linear rate otherwise.
inline std::function<double(double)> decay_function(const SystemModel& model, const CertifiedConstants& k) {
    if (model.gamma) return model.gamma;
    const double rate = k.gamma_rate;
    return [rate](double s) { return rate * s; };
}

// ---------------------------------------------------------------------------
// Inter-sample bounds
// ---------------------------------------------------------------------------

namespace detail {
inline double growth_term(const SystemModel& model, const Vector& x, const Vector& u, double* lie) {
    const Vector fx = model.f(x, u);
    const RowVector g = model.v_grad(x);
    if (lie) *lie = g.dot(fx.transpose());
    const double nf = fx.norm();
    return g.norm() * nf + nf * nf;
}
}  // namespace detail

/// Upper bound on V along the frozen-input flow from x after time m:
///   V(x) + m L_fV(x,u) + 2/3 m^{3/2} mu_c (||V'(x)|| ||f(x,u)|| + ||f(x,u)||^2)
inline double v_bound(const SystemModel& model, const CertifiedConstants& k, const Vector& x, const Vector& u,
                      double m) {
    require_dim(x, model.state_dim, "v_bound state");
    require_dim(u, model.input_dim, "v_bound input");
    if (!(m >= 0.0)) throw InputError("v_bound: m must be nonnegative");
    double lie = 0.0;
    const double growth = detail::growth_term(model, x, u, &lie);
    return model.v(x) + m * lie + (2.0 / 3.0) * std::pow(m, 1.5) * k.mu_c * growth;
}

/// Bound on |L_fV(x(t), u) - L_fV(x0, u)| along the frozen-input flow,
/// valid for t in [0, 1/(1 + 2 L1)].
inline double corollary1_deviation_bound(const SystemModel& model, const CertifiedConstants& k, const Vector& x0,
                                         const Vector& u, double t) {
    require_dim(x0, model.state_dim, "deviation bound state");
    require_dim(u, model.input_dim, "deviation bound input");
    if (!(t >= 0.0) || t > k.lipschitz_horizon()) {
        throw InputError("corollary1_deviation_bound: t = " + format_double(t) + " outside [0, 1/(1+2 L1)]");
    }
    return std::sqrt(t) * k.mu_c * detail::growth_term(model, x0, u, nullptr);
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

inline KeyValueFile to_manifest(const CertifiedConstants& k) {
    KeyValueFile file;
    auto& s = file.root();
    s.set("model", k.model);
    s.set("c", k.c);
    s.set("sigma", k.sigma);
    s.set("margin", k.margin);
    s.set("grid_resolution", std::to_string(k.grid_resolution));
    s.set("input_resolution", std::to_string(k.input_resolution));
    s.set("sup_safety", k.sup_safety);
    s.set("inf_safety", k.inf_safety);
    s.set("L1c", k.L1c);
    s.set("L2c", k.L2c);
    s.set("mu_c", k.mu_c);
    s.set("M_max_c", k.M_max_c);
    s.set("gamma_method", to_string(k.gamma_method));
    s.set("gamma_rate", k.gamma_rate);
    s.set("gamma_rate_direct", k.gamma_rate_direct);
    s.set("gamma_rate_norm_comparison", k.gamma_rate_norm_comparison);
    s.set("h_sigma_masp", k.h_sigma_masp);
    s.set("active_term", to_string(k.active_term));
    return file;
}

inline void write_constants(std::ostream& out, const CertifiedConstants& k) {
    out << "# certified constants (key = value, 17 significant digits)\n";
    write_key_value(out, to_manifest(k));
}

inline std::string constants_to_string(const CertifiedConstants& k) {
    std::ostringstream ss;
    write_constants(ss, k);
    return ss.str();
}

inline CertifiedConstants constants_from_manifest(const KeyValueFile& file) {
    const auto& s = file.root();
    CertifiedConstants k;
    k.model = s.get("model");
    k.c = s.get_double("c");
    k.sigma = s.get_double("sigma");
    k.margin = s.get_double_or("margin", 0.0);
    k.grid_resolution = static_cast<std::size_t>(s.get_int_or("grid_resolution", 0));
    k.input_resolution = static_cast<std::size_t>(s.get_int_or("input_resolution", 0));
    k.sup_safety = s.get_double_or("sup_safety", 1.0);
    k.inf_safety = s.get_double_or("inf_safety", 1.0);
    k.L1c = s.get_double("L1c");
    k.L2c = s.get_double("L2c");
    k.mu_c = s.get_double("mu_c");
    k.M_max_c = s.get_double("M_max_c");
    k.gamma_method = parse_gamma_method(s.get_or("gamma_method", "direct"));
    k.gamma_rate = s.get_double("gamma_rate");
    k.gamma_rate_direct = s.get_double_or("gamma_rate_direct", k.gamma_rate);
    k.gamma_rate_norm_comparison = s.get_double_or("gamma_rate_norm_comparison", k.gamma_rate);
    k.h_sigma_masp = s.get_double("h_sigma_masp");
    const std::string active = s.get_or("active_term", "convergence");
    if (active != "convergence" && active != "lipschitz") throw InputError("constants: bad active_term");
    k.active_term = active == "convergence" ? MaspTerm::Convergence : MaspTerm::Lipschitz;
    validate(k);
    return k;
}

inline CertifiedConstants read_constants(std::istream& in, const std::string& source = "<constants>") {
    return constants_from_manifest(parse_key_value(in, source));
}

inline CertifiedConstants read_constants_file(const std::string& path) {
    return constants_from_manifest(read_key_value_file(path));
}

}  // namespace mbpetc
