#pragma once

// Continuous-time plant, state feedback and Lyapunov certificate as
// evaluatable objects, plus the inverted-pendulum benchmark.

#include "mbpetc/core.hpp"

#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <string>

namespace mbpetc {

/// Plant  x' = f(x, u), feedback u = kappa(x) and a Lyapunov function V with
/// analytic gradient. Immutable after construction; every callable must be
/// safe to invoke concurrently.
struct SystemModel {
    using VectorField = std::function<Vector(const Vector& x, const Vector& u)>;
    using Feedback = std::function<Vector(const Vector& x)>;
    using Scalar = std::function<double(const Vector& x)>;
    using Gradient = std::function<RowVector(const Vector& x)>;
    using ClassK = std::function<double(double)>;

    std::string name;
    Eigen::Index state_dim = 0;
    Eigen::Index input_dim = 0;
    VectorField f;
    Feedback kappa;
    Scalar v;
    Gradient v_grad;
    // Decay function of the Lyapunov inequality. Left empty when the rate is
    // certified numerically; the certified linear rate is used then.
    ClassK gamma;
    // Set when V(x) = x^T P x. Enables exact level-set boxes and Hessians.
    std::optional<Matrix> quadratic_form;
};

using ModelPtr = std::shared_ptr<const SystemModel>;

struct LevelSetSpec {
    double c = 0.0;
    // Radius of the ball around the origin excluded from ratio estimates.
    double margin = 0.0;
};

inline void validate(const LevelSetSpec& ls) {
    if (!(ls.c > 0.0) || !std::isfinite(ls.c)) throw InputError("level set: c must be positive");
    if (!(ls.margin >= 0.0)) throw InputError("level set: margin must be nonnegative");
}

/// L_f V(x, u) = V'(x) f(x, u).
inline double lie_derivative(const SystemModel& model, const Vector& x, const Vector& u) {
    require_dim(x, model.state_dim, "lie_derivative state");
    require_dim(u, model.input_dim, "lie_derivative input");
    return model.v_grad(x).dot(model.f(x, u).transpose());
}

inline double closed_loop_lie_derivative(const SystemModel& model, const Vector& x) {
    return lie_derivative(model, x, model.kappa(x));
}

/// Eigenvalue bounds lambda_min ||x||^2 <= V(x) <= lambda_max ||x||^2 for a
/// quadratic certificate. They play the role of the class-K sandwich bounds
/// and are not used by the trigger.
struct QuadraticBounds {
    double lambda_min;
    double lambda_max;
    double alpha1(double s) const { return lambda_min * s * s; }
    double alpha2(double s) const { return lambda_max * s * s; }
};

inline QuadraticBounds quadratic_bounds(const Matrix& p) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (p + p.transpose()), Eigen::EigenvaluesOnly);
    return {eig.eigenvalues().minCoeff(), eig.eigenvalues().maxCoeff()};
}

/// Smallest axis-aligned box containing {x | V(x) <= c}. Exact for quadratic
/// certificates: |x_i| <= sqrt(c * (P^-1)_ii).
inline Box level_set_box(const SystemModel& model, double c) {
    if (!model.quadratic_form) {
        throw InputError("level_set_box: model '" + model.name +
                         "' has no quadratic certificate; pass an explicit box");
    }
    const Matrix inv = model.quadratic_form->inverse();
    Vector half(model.state_dim);
    for (Eigen::Index i = 0; i < model.state_dim; ++i) half[i] = std::sqrt(c * inv(i, i));
    return Box{-half, half};
}

/// Largest ||x|| on the level set.
inline double level_set_radius(const SystemModel& model, double c) {
    if (model.quadratic_form) {
        return std::sqrt(c / quadratic_bounds(*model.quadratic_form).lambda_min);
    }
    return level_set_box(model, c).upper.norm();
}

/// Level set with the default exclusion ball of 1e-3 times its radius.
inline LevelSetSpec make_level_set(const SystemModel& model, double c) {
    LevelSetSpec ls{c, 0.0};
    validate(ls);
    ls.margin = 1e-3 * level_set_radius(model, c);
    return ls;
}

inline bool in_level_set(const SystemModel& model, const Vector& x, double c) { return model.v(x) <= c; }

/// Rejection sampling of uniformly distributed points in {V <= c}.
template <class Rng>
std::vector<Vector> sample_level_set(const SystemModel& model, double c, std::size_t count, Rng& rng) {
    const Box box = level_set_box(model, c);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<Vector> out;
    out.reserve(count);
    while (out.size() < count) {
        Vector x(model.state_dim);
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            x[i] = box.lower[i] + unit(rng) * (box.upper[i] - box.lower[i]);
        }
        if (model.v(x) <= c) out.push_back(std::move(x));
    }
    return out;
}

/// Copy of `model` with gamma(s) = rate * s.
inline SystemModel with_linear_gamma(SystemModel model, double rate) {
    model.gamma = [rate](double s) { return rate * s; };
    return model;
}

/// V(x) = x^T P x with gradient 2 x^T P.
inline void attach_quadratic_certificate(SystemModel& model, Matrix p) {
    const Matrix sym = 0.5 * (p + p.transpose());
    model.v = [sym](const Vector& x) { return x.dot(sym * x); };
    model.v_grad = [sym](const Vector& x) -> RowVector { return 2.0 * (sym * x).transpose(); };
    model.quadratic_form = sym;
}

// ---------------------------------------------------------------------------
// Inverted pendulum benchmark
//
//   x1' = x2
//   x2' = (sin x1 - u cos x1) * omega0
//   kappa(x) = (31.6 x1 + 40.4 x2 + sin x1) / cos x1
//   V(x) = 1.278 x1^2 + 0.632 x1 x2 + 0.404 x2^2
//
// kappa is singular at |x1| = pi/2 and throws DomainError there.
// ---------------------------------------------------------------------------

inline Matrix pendulum_lyapunov_matrix() {
    Matrix p(2, 2);
    p << 1.278, 0.316, 0.316, 0.404;
    return p;
}

inline SystemModel pendulum_model(double omega0 = 0.1) {
    if (!(omega0 > 0.0)) throw InputError("pendulum_model: omega0 must be positive");
    SystemModel m;
    m.name = "pendulum";
    m.state_dim = 2;
    m.input_dim = 1;
    m.f = [omega0](const Vector& x, const Vector& u) {
        Vector dx(2);
        dx[0] = x[1];
        dx[1] = (std::sin(x[0]) - u[0] * std::cos(x[0])) * omega0;
        return dx;
    };
    m.kappa = [](const Vector& x) {
        if (!(std::abs(x[0]) < std::numbers::pi / 2)) {
            throw DomainError("pendulum feedback undefined at |x1| >= pi/2, x = " + format_vector(x));
        }
        Vector u(1);
        u[0] = (31.6 * x[0] + 40.4 * x[1] + std::sin(x[0])) / std::cos(x[0]);
        return u;
    };
    // Written out rather than via attach_quadratic_certificate so the
    // benchmark matches the reference coefficients term by term.
    m.v = [](const Vector& x) { return 1.278 * x[0] * x[0] + 0.632 * x[0] * x[1] + 0.404 * x[1] * x[1]; };
    m.v_grad = [](const Vector& x) {
        RowVector g(2);
        g[0] = 2.0 * 1.278 * x[0] + 0.632 * x[1];
        g[1] = 0.632 * x[0] + 2.0 * 0.404 * x[1];
        return g;
    };
    m.quadratic_form = pendulum_lyapunov_matrix();
    return m;
}

// Named model registry used by the CLI and experiment files.
inline SystemModel make_model(const std::string& name, double omega0 = 0.1) {
    if (name == "pendulum") return pendulum_model(omega0);
    throw InputError("unknown model '" + name + "' (registered: pendulum)");
}

inline std::vector<std::string> registered_models() { return {"pendulum"}; }

}  // namespace mbpetc
