#pragma once

// Sensor-side model-based periodic event trigger.
//
// At every sampling instant k the sensor advances its mirror of the actuator
// prediction, bounds the growth of V over the coming period under the input
// the actuator would apply, and transmits x(kh) when
//
//   k - i_ref > nu                                       (MaxInterval)
//   V(xhat_sens) > c                                     (LevelSetExit)
//   V(x_k) + lambda_k >= V_ref - (k - i_ref + 1) h sigma gamma(V_ref)
//                                                         (LyapunovBound)
//
// or when the prediction itself cannot be evaluated (PredictionDomain).

#include "mbpetc/certificates.hpp"
#include "mbpetc/prediction.hpp"

#include <cstdint>
#include <optional>

namespace mbpetc {

// Periodic marks the transmissions of the time-triggered baseline.
enum class TriggerReason { None, Initial, MaxInterval, LevelSetExit, LyapunovBound, PredictionDomain, Periodic };

inline std::string to_string(TriggerReason r) {
    switch (r) {
        case TriggerReason::None: return "none";
        case TriggerReason::Initial: return "initial";
        case TriggerReason::MaxInterval: return "max_interval";
        case TriggerReason::LevelSetExit: return "level_set_exit";
        case TriggerReason::LyapunovBound: return "lyapunov_bound";
        case TriggerReason::PredictionDomain: return "prediction_domain";
        case TriggerReason::Periodic: return "periodic";
    }
    return "?";
}

inline TriggerReason parse_trigger_reason(const std::string& s) {
    for (auto r : {TriggerReason::None, TriggerReason::Initial, TriggerReason::MaxInterval,
                   TriggerReason::LevelSetExit, TriggerReason::LyapunovBound, TriggerReason::PredictionDomain,
                   TriggerReason::Periodic}) {
        if (to_string(r) == s) return r;
    }
    throw InputError("unknown trigger reason '" + s + "'");
}

struct TriggerDecision {
    bool transmit = false;
    TriggerReason reason = TriggerReason::None;
    // Absent at k = 0 and when the prediction left its domain.
    std::optional<double> lambda_k;
    // Right-hand side of the Lyapunov test, absent when lambda_k is.
    std::optional<double> budget;
    // Input applied on [kh, (k+1)h).
    Vector u_next;
};

/// Default max-interval guard: ceil(10 / (h sigma rho)) periods, far beyond
/// the point where the Lyapunov test fires for any nonzero state.
inline std::int64_t default_nu(double h, const CertifiedConstants& k) {
    const double periods = std::ceil(10.0 / (h * k.sigma * k.gamma_rate));
    if (!std::isfinite(periods) || periods > 1e15) return std::int64_t{1} << 50;
    return std::max<std::int64_t>(1, static_cast<std::int64_t>(periods));
}

/// Persistent sensor state. Single owner, one per simulation.
class TriggerState {
public:
    // Snapshot of the mutable part, for resuming a trigger mid-run.
    struct Memory {
        std::int64_t i_ref = 0;
        double v_ref = 0.0;
        Vector xhat_sens;
    };

    TriggerState(PredictionModel pm, CertifiedConstants constants, std::int64_t nu)
        : pm_(std::move(pm)),
          k_(std::move(constants)),
          gamma_(decay_function(pm_.system(), k_)),
          nu_(nu) {
        if (nu_ < 1) throw InputError("TriggerState: nu must be a positive integer");
    }

    TriggerState(PredictionModel pm, CertifiedConstants constants, std::int64_t nu, Memory memory,
                 std::int64_t last_k)
        : TriggerState(std::move(pm), std::move(constants), nu) {
        require_dim(memory.xhat_sens, pm_.system().state_dim, "TriggerState memory");
        mem_ = std::move(memory);
        last_k_ = last_k;
        started_ = true;
    }

    TriggerDecision evaluate(std::int64_t k, const Vector& x_k) {
        const SystemModel& m = pm_.system();
        require_dim(x_k, m.state_dim, "trigger state");
        if (!x_k.allFinite()) throw SimulationAbort("trigger: non-finite state at k = " + std::to_string(k));
        if (k == 0) {
            mem_ = Memory{0, m.v(x_k), x_k};
            last_k_ = 0;
            started_ = true;
            return TriggerDecision{true, TriggerReason::Initial, std::nullopt, std::nullopt, m.kappa(x_k)};
        }
        if (!started_ || k <= last_k_) {
            throw InputError("trigger: sample indices must start at 0 and strictly increase");
        }
        last_k_ = k;

        TriggerDecision d;
        try {
            mem_.xhat_sens = pm_.predict(mem_.xhat_sens);
        } catch (const PredictionDomainError&) {
            return transmit(k, x_k, TriggerReason::PredictionDomain, d);
        }
        const Vector u_sens = m.kappa(mem_.xhat_sens);
        const double h = pm_.step();
        const double v_k = m.v(x_k);
        const double lambda = v_bound(m, k_, x_k, u_sens, h) - v_k;
        if (!std::isfinite(lambda)) {
            throw SimulationAbort("trigger: non-finite lambda at k = " + std::to_string(k) + ", x = " +
                                  format_vector(x_k) + " (left the certified region?)");
        }
        d.lambda_k = lambda;
        d.budget = decay_budget(k);

        if (k - mem_.i_ref > nu_) return transmit(k, x_k, TriggerReason::MaxInterval, d);
        if (m.v(mem_.xhat_sens) > k_.c) return transmit(k, x_k, TriggerReason::LevelSetExit, d);
        if (v_k + lambda >= *d.budget) return transmit(k, x_k, TriggerReason::LyapunovBound, d);

        d.transmit = false;
        d.reason = TriggerReason::None;
        d.u_next = u_sens;
        return d;
    }

    /// V_ref - (k - i_ref + 1) h sigma gamma(V_ref)
    double decay_budget(std::int64_t k) const {
        if (k < mem_.i_ref) throw InputError("decay_budget: k precedes the last transmission");
        const double periods = static_cast<double>(k - mem_.i_ref + 1);
        return mem_.v_ref - periods * pm_.step() * k_.sigma * gamma_(mem_.v_ref);
    }

    const Memory& memory() const { return mem_; }
    std::int64_t i_ref() const { return mem_.i_ref; }
    double v_ref() const { return mem_.v_ref; }
    const Vector& xhat_sens() const { return mem_.xhat_sens; }
    std::int64_t nu() const { return nu_; }
    const PredictionModel& prediction() const { return pm_; }
    const CertifiedConstants& constants() const { return k_; }

private:
    TriggerDecision transmit(std::int64_t k, const Vector& x_k, TriggerReason reason, TriggerDecision d) {
        const SystemModel& m = pm_.system();
        mem_ = Memory{k, m.v(x_k), x_k};
        d.transmit = true;
        d.reason = reason;
        d.u_next = m.kappa(x_k);
        return d;
    }

    PredictionModel pm_;
    CertifiedConstants k_;
    std::function<double(double)> gamma_;
    std::int64_t nu_;
    Memory mem_;
    std::int64_t last_k_ = -1;
    bool started_ = false;
};

}  // namespace mbpetc
