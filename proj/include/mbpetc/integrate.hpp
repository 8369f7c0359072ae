#pragma once

// Fixed-step classical Runge-Kutta integration of x' = f(x, u) with the input
// held constant, which is all the closed loop ever needs between sampling
// instants.

#include "mbpetc/dynamics.hpp"

namespace mbpetc {

inline Vector rk4_step(const SystemModel& model, const Vector& x, const Vector& u, double dt) {
    const Vector k1 = model.f(x, u);
    const Vector k2 = model.f(x + 0.5 * dt * k1, u);
    const Vector k3 = model.f(x + 0.5 * dt * k2, u);
    const Vector k4 = model.f(x + dt * k3, u);
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Integrates the frozen-input flow over `duration` with `steps` equal RK4 steps.
inline Vector integrate_frozen(const SystemModel& model, Vector x, const Vector& u, double duration,
                               std::size_t steps) {
    if (steps == 0) throw InputError("integrate_frozen: steps must be positive");
    if (duration < 0.0) throw InputError("integrate_frozen: negative duration");
    const double dt = duration / static_cast<double>(steps);
    for (std::size_t i = 0; i < steps; ++i) x = rk4_step(model, x, u, dt);
    return x;
}

/// Integrates the continuous-feedback loop x' = f(x, kappa(x)).
inline Vector integrate_closed_loop(const SystemModel& model, Vector x, double duration, std::size_t steps) {
    if (steps == 0) throw InputError("integrate_closed_loop: steps must be positive");
    const double dt = duration / static_cast<double>(steps);
    auto g = [&](const Vector& z) { return model.f(z, model.kappa(z)); };
    for (std::size_t i = 0; i < steps; ++i) {
        const Vector k1 = g(x);
        const Vector k2 = g(x + 0.5 * dt * k1);
        const Vector k3 = g(x + 0.5 * dt * k2);
        const Vector k4 = g(x + dt * k3);
        x += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return x;
}

}  // namespace mbpetc
