#pragma once

#include "mbpetc/mbpetc.hpp"

#include <map>
#include <mutex>

namespace fixtures {

using namespace mbpetc;

/// x' = A x + B u, u = -K x, V = x^T P x.
inline SystemModel linear_model(const Matrix& a, const Matrix& b, const Matrix& k, const Matrix& p,
                                const std::string& name = "linear") {
    SystemModel m;
    m.name = name;
    m.state_dim = a.rows();
    m.input_dim = b.cols();
    m.f = [a, b](const Vector& x, const Vector& u) -> Vector { return a * x + b * u; };
    m.kappa = [k](const Vector& x) -> Vector { return -k * x; };
    attach_quadratic_certificate(m, p);
    return m;
}

/// x' = -x + u, kappa = 0, V = x^2.
inline SystemModel scalar_decay() {
    Matrix a(1, 1), b(1, 1), k(1, 1), p(1, 1);
    a << -1.0;
    b << 1.0;
    k << 0.0;
    p << 1.0;
    return linear_model(a, b, k, p, "scalar_decay");
}

/// Double integrator with stabilising feedback and its Lyapunov matrix.
inline SystemModel double_integrator() {
    Matrix a(2, 2), b(2, 1), k(1, 2), p(2, 2);
    a << 0.0, 1.0, 0.0, 0.0;
    b << 0.0, 1.0;
    k << 1.0, 2.0;
    // A - BK = [[0,1],[-1,-2]]; P solves (A-BK)^T P + P (A-BK) = -I
    p << 1.5, 0.5, 0.5, 0.5;
    return linear_model(a, b, k, p, "double_integrator");
}

inline ModelPtr pendulum_ptr() {
    static const ModelPtr m = std::make_shared<const SystemModel>(pendulum_model());
    return m;
}

/// Pendulum constants at c = 0.258, sigma = 0.35, cached per grid size.
inline const CertifiedConstants& pendulum_constants(std::size_t grid = 60,
                                                    GammaMethod method = GammaMethod::NormComparison) {
    static std::mutex mu;
    static std::map<std::pair<std::size_t, GammaMethod>, CertifiedConstants> cache;
    std::lock_guard lock(mu);
    const auto key = std::make_pair(grid, method);
    auto it = cache.find(key);
    if (it == cache.end()) {
        EstimationOptions opts;
        opts.grid_resolution = grid;
        opts.input_resolution = std::min<std::size_t>(grid, 24);
        const auto& m = *pendulum_ptr();
        it = cache.emplace(key, certify(m, make_level_set(m, 0.258), 0.35, opts, method)).first;
    }
    return it->second;
}

inline Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

inline SimConfig pendulum_config(PredictionKind kind, double horizon, const Vector& x0) {
    const auto& k = pendulum_constants();
    SimConfig cfg;
    cfg.label = to_string(kind);
    cfg.prediction.kind = kind;
    cfg.h = k.h_sigma_masp;
    cfg.horizon = horizon;
    cfg.x0 = x0;
    return cfg;
}

}  // namespace fixtures
