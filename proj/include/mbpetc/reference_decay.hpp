#pragma once

// Reference decay S(t, x0):  dS/dt = -sigma gamma(S),  S(0) = V(x0).

#include "mbpetc/certificates.hpp"

#include <optional>

namespace mbpetc {

class ReferenceDecay {
public:
    /// Linear gamma(s) = rate * s: closed form V0 exp(-sigma rate t).
    static ReferenceDecay linear(double sigma, double rate, double v0) {
        check_sigma(sigma);
        ReferenceDecay d;
        d.sigma_ = sigma;
        d.rate_ = rate;
        d.gamma_ = [rate](double s) { return rate * s; };
        d.v0_ = v0;
        return d;
    }

    /// General class-K gamma, integrated with RK4.
    static ReferenceDecay general(double sigma, std::function<double(double)> gamma, double v0,
                                  double max_step = 1e-3) {
        check_sigma(sigma);
        ReferenceDecay d;
        d.sigma_ = sigma;
        d.gamma_ = std::move(gamma);
        d.v0_ = v0;
        d.max_step_ = max_step;
        return d;
    }

    double sigma() const { return sigma_; }
    double v0() const { return v0_; }
    const std::function<double(double)>& gamma() const { return gamma_; }
    std::optional<double> linear_rate() const { return rate_; }

    /// S(t); closed form when gamma is linear.
    double value_at(double t) const {
        if (t <= 0.0) return v0_;
        if (rate_) return v0_ * std::exp(-sigma_ * *rate_ * t);
        return integrate(t);
    }

    /// S(t) by RK4 regardless of gamma's form; cross-checks the closed form.
    double integrate(double t) const {
        if (t <= 0.0) return v0_;
        const auto steps = static_cast<std::size_t>(std::ceil(t / max_step_));
        const double dt = t / static_cast<double>(steps);
        double s = v0_;
        auto rhs = [&](double y) { return -sigma_ * gamma_(std::max(y, 0.0)); };
        for (std::size_t i = 0; i < steps; ++i) {
            const double k1 = rhs(s);
            const double k2 = rhs(s + 0.5 * dt * k1);
            const double k3 = rhs(s + 0.5 * dt * k2);
            const double k4 = rhs(s + dt * k3);
            s = std::max(0.0, s + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
        }
        return s;
    }

    /// S sampled on `times` (nondecreasing). Linear gamma uses the closed
    /// form; otherwise a single RK4 pass marches along the grid.
    std::vector<double> sample(const std::vector<double>& times) const {
        std::vector<double> out(times.size());
        if (rate_) {
            for (std::size_t i = 0; i < times.size(); ++i) out[i] = value_at(times[i]);
            return out;
        }
        double t_prev = 0.0, s = v0_;
        for (std::size_t i = 0; i < times.size(); ++i) {
            const double t = times[i];
            if (t <= 0.0) {
                out[i] = v0_;
                continue;
            }
            const double span = t - t_prev;
            if (span > 0.0) {
                ReferenceDecay seg = *this;
                seg.v0_ = s;
                s = seg.integrate(span);
                t_prev = t;
            }
            out[i] = s;
        }
        return out;
    }

private:
    static void check_sigma(double sigma) {
        if (!(sigma > 0.0 && sigma < 1.0)) throw InputError("reference decay: sigma must lie in (0, 1)");
    }

    double sigma_ = 0.5;
    std::function<double(double)> gamma_;
    std::optional<double> rate_;
    double v0_ = 0.0;
    double max_step_ = 1e-3;
};

/// S for a model started at x0; uses the closed form unless the model
/// carries its own gamma.
inline ReferenceDecay reference_decay(const SystemModel& model, const CertifiedConstants& k, double sigma,
                                      const Vector& x0) {
    const double v0 = model.v(x0);
    if (model.gamma) return ReferenceDecay::general(sigma, model.gamma, v0);
    return ReferenceDecay::linear(sigma, k.gamma_rate, v0);
}

}  // namespace mbpetc
