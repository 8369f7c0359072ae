#pragma once

// Closed-loop simulation of the sampled-data loop with actuator-side
// prediction: x flows under the piecewise-constant input u = kappa(xhat);
// at every sampling instant the trigger sees x(kh), then xhat jumps either
// to x(kh) (transmission) or to f_p(xhat) (no transmission).

#include "mbpetc/reference_decay.hpp"
#include "mbpetc/trigger.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mbpetc {

struct PredictionSettings {
    PredictionKind kind = PredictionKind::ZOH;
    double euler_scale = 1.05;
    std::size_t reference_substeps = 100;
    std::size_t table_points = 64;
    // Binary table to load instead of building one.
    std::string table_path;
};

struct SimConfig {
    std::string label;
    std::string model = "pendulum";
    PredictionSettings prediction;
    double h = 0.0;
    double horizon = 0.0;
    Vector x0;
    // Must match the certified constants when set.
    std::optional<double> sigma;
    std::optional<double> c;
    // Defaults to default_nu(h, constants).
    std::optional<std::int64_t> nu;
    std::size_t substeps = 20;
    // Record every `record_stride`-th integrator sub-step; must divide
    // `substeps`. Sampling instants are always recorded.
    std::size_t record_stride = 1;
    bool unsafe_h_override = false;
    std::uint64_t seed = 0;
};

/// Builds the prediction map named by `settings` for `model` at step h.
inline PredictionModel make_prediction(const PredictionSettings& settings, const ModelPtr& model, double h,
                                       const CertifiedConstants& k) {
    switch (settings.kind) {
        case PredictionKind::ZOH: return PredictionModel::zoh(model, h);
        case PredictionKind::ScaledEuler: return PredictionModel::scaled_euler(model, h, settings.euler_scale);
        case PredictionKind::RungeKutta4: return PredictionModel::rk4(model, h);
        case PredictionKind::ReferenceExact: return PredictionModel::reference(model, h, settings.reference_substeps);
        case PredictionKind::LookupTable: {
            if (!settings.table_path.empty()) {
                PredictionModel pm = load_lookup_table(settings.table_path, model);
                if (pm.step() != h) throw InputError("lookup table was built for a different sampling period");
                return pm;
            }
            const auto ref = PredictionModel::reference(model, h, settings.reference_substeps);
            return build_lookup_table(*model, LevelSetSpec{k.c, k.margin}, settings.table_points, ref);
        }
    }
    throw InputError("unknown prediction kind");
}

struct TraceInstant {
    std::int64_t k = 0;
    double t = 0.0;
    std::size_t row = 0;
    bool transmit = false;
    TriggerReason reason = TriggerReason::None;
    std::optional<double> lambda;
    std::optional<double> budget;
};

struct TraceEvent {
    std::int64_t k = 0;
    double t = 0.0;
    TriggerReason reason = TriggerReason::None;
    double v_ref = 0.0;
    std::size_t row = 0;
};

struct TraceSummary {
    std::size_t transmissions = 0;
    double min_gap = 0.0;
    double mean_gap = 0.0;
    double max_gap = 0.0;
    double final_v = 0.0;
    // First time V falls to half of V(x0); +inf if it never does.
    double v_half_life = 0.0;
    // Integral of ||u||^2 over the horizon, trapezoidal on the recorded rows.
    double input_energy = 0.0;
};

/// Columnar record of one run. Dense rows sit on the integrator grid
/// (every record_stride-th sub-step); instants are the sampling instants.
struct SimTrace {
    std::string label;
    std::string model;
    std::string prediction;
    Vector x0;
    double h = 0.0;
    double horizon = 0.0;
    double sigma = 0.0;
    double c = 0.0;
    std::int64_t nu = 0;
    std::size_t substeps = 0;
    std::size_t record_stride = 1;
    Eigen::Index state_dim = 0;
    Eigen::Index input_dim = 0;

    std::vector<double> t;
    std::vector<double> x;     // state_dim per row
    std::vector<double> xhat;  // state_dim per row
    std::vector<double> u;     // input_dim per row
    std::vector<double> v;
    // max of V over all integrator sub-steps in (t[i-1], t[i]]
    std::vector<double> v_peak;
    // index into `instants`, or -1 for sub-step rows
    std::vector<std::int64_t> instant_of_row;

    std::vector<TraceInstant> instants;
    std::vector<TraceEvent> events;

    std::size_t rows() const { return t.size(); }
    std::size_t rows_per_period() const { return substeps / record_stride; }

    Vector x_at(std::size_t row) const {
        return Eigen::Map<const Vector>(x.data() + row * state_dim, state_dim);
    }
    Vector xhat_at(std::size_t row) const {
        return Eigen::Map<const Vector>(xhat.data() + row * state_dim, state_dim);
    }
    Vector u_at(std::size_t row) const {
        return Eigen::Map<const Vector>(u.data() + row * input_dim, input_dim);
    }
    Vector final_state() const { return x_at(rows() - 1); }

    TraceSummary summary() const {
        TraceSummary s;
        s.transmissions = events.size();
        if (events.size() < 2) {
            // no gap observed: report the horizon
            s.min_gap = s.mean_gap = s.max_gap = horizon;
        } else {
            s.min_gap = std::numeric_limits<double>::infinity();
            for (std::size_t l = 1; l < events.size(); ++l) {
                const double gap = events[l].t - events[l - 1].t;
                s.min_gap = std::min(s.min_gap, gap);
                s.max_gap = std::max(s.max_gap, gap);
            }
            s.mean_gap = (events.back().t - events.front().t) / static_cast<double>(events.size() - 1);
        }
        s.final_v = v.empty() ? 0.0 : v.back();
        s.v_half_life = std::numeric_limits<double>::infinity();
        if (!v.empty()) {
            const double target = 0.5 * v.front();
            for (std::size_t i = 1; i < v.size(); ++i) {
                if (v[i] <= target) {
                    const double a = v[i - 1] - target, b = v[i - 1] - v[i];
                    s.v_half_life = t[i - 1] + (b > 0.0 ? a / b : 0.0) * (t[i] - t[i - 1]);
                    break;
                }
            }
            if (v.front() == 0.0) s.v_half_life = 0.0;
        }
        for (std::size_t i = 1; i < rows(); ++i) {
            const double a = u_at(i - 1).squaredNorm(), b = u_at(i).squaredNorm();
            s.input_energy += 0.5 * (a + b) * (t[i] - t[i - 1]);
        }
        return s;
    }
};

namespace detail {

class TraceRecorder {
public:
    explicit TraceRecorder(SimTrace& trace) : tr_(trace) {}

    void row(double t, const Vector& x, const Vector& xhat, const Vector& u, double v, double peak,
             std::int64_t instant) {
        tr_.t.push_back(t);
        tr_.x.insert(tr_.x.end(), x.data(), x.data() + x.size());
        tr_.xhat.insert(tr_.xhat.end(), xhat.data(), xhat.data() + xhat.size());
        tr_.u.insert(tr_.u.end(), u.data(), u.data() + u.size());
        tr_.v.push_back(v);
        tr_.v_peak.push_back(peak);
        tr_.instant_of_row.push_back(instant);
    }

    void reserve(std::size_t rows) {
        tr_.t.reserve(rows);
        tr_.x.reserve(rows * tr_.state_dim);
        tr_.xhat.reserve(rows * tr_.state_dim);
        tr_.u.reserve(rows * tr_.input_dim);
        tr_.v.reserve(rows);
        tr_.v_peak.reserve(rows);
        tr_.instant_of_row.reserve(rows);
    }

private:
    SimTrace& tr_;
};

inline std::int64_t sample_count(const SimConfig& cfg) {
    // instants k = 0 .. K with K h <= horizon
    return static_cast<std::int64_t>(std::floor(cfg.horizon / cfg.h * (1.0 + 1e-12)));
}

inline void validate_config(const SystemModel& model, const SimConfig& cfg, const CertifiedConstants& k) {
    if (!(cfg.h > 0.0) || !std::isfinite(cfg.h)) throw InputError("config: h must be positive");
    if (!(cfg.horizon >= cfg.h)) throw InputError("config: horizon must be at least h");
    require_dim(cfg.x0, model.state_dim, "config x0");
    if (!cfg.x0.allFinite()) throw InputError("config: x0 must be finite");
    if (cfg.substeps == 0) throw InputError("config: substeps must be positive");
    if (cfg.record_stride == 0 || cfg.substeps % cfg.record_stride != 0) {
        throw InputError("config: record_stride must divide substeps");
    }
    if (cfg.sigma && *cfg.sigma != k.sigma) throw InputError("config: sigma differs from the certified constants");
    if (cfg.c && *cfg.c != k.c) throw InputError("config: c differs from the certified constants");
    if (cfg.nu && *cfg.nu < 1) throw InputError("config: nu must be positive");
    if (cfg.h > k.h_sigma_masp && !cfg.unsafe_h_override) {
        throw InputError("config: h = " + format_double(cfg.h) + " exceeds the certified sigma-MASP " +
                         format_double(k.h_sigma_masp) + " (set unsafe_h_override to run anyway)");
    }
    if (model.v(cfg.x0) > k.c) {
        throw InputError("config: V(x0) = " + format_double(model.v(cfg.x0)) + " exceeds the level c = " +
                         format_double(k.c));
    }
}

// The run aborts once x leaves the scaled set 10 * {V <= c}.
inline void check_safety_box(const SystemModel& model, const Vector& x, double c, double t) {
    if (!x.allFinite() || model.v(x / 10.0) > c) {
        throw SimulationAbort("state left the safety box 10*X_c at t = " + format_double(t) + ", x = " +
                              format_vector(x));
    }
}

template <class Decide, class AfterJump>
SimTrace simulate(const PredictionModel& pm, const SimConfig& cfg, const CertifiedConstants& k, std::int64_t nu,
                  Decide decide, AfterJump after_jump) {
    const SystemModel& model = pm.system();
    SimTrace tr;
    tr.label = cfg.label;
    tr.model = model.name;
    tr.prediction = pm.describe();
    tr.x0 = cfg.x0;
    tr.h = cfg.h;
    tr.horizon = cfg.horizon;
    tr.sigma = k.sigma;
    tr.c = k.c;
    tr.nu = nu;
    tr.substeps = cfg.substeps;
    tr.record_stride = cfg.record_stride;
    tr.state_dim = model.state_dim;
    tr.input_dim = model.input_dim;

    const std::int64_t last_k = sample_count(cfg);
    const double dt = cfg.h / static_cast<double>(cfg.substeps);
    TraceRecorder rec(tr);
    rec.reserve(static_cast<std::size_t>(last_k) * tr.rows_per_period() + 1);
    tr.instants.reserve(static_cast<std::size_t>(last_k) + 1);

    Vector x = cfg.x0;
    Vector xhat = cfg.x0;
    double peak = model.v(x);
    try {
        for (std::int64_t kk = 0; kk <= last_k; ++kk) {
            const double t_k = static_cast<double>(kk) * cfg.h;
            const TriggerDecision d = decide(kk, x);

            // actuator jump
            if (d.transmit) {
                xhat = x;
            } else {
                xhat = pm.predict(xhat);
            }
            after_jump(kk, xhat);
            const Vector& u = d.u_next;
            const double v_k = model.v(x);
            peak = std::max(peak, v_k);

            const auto instant_idx = static_cast<std::int64_t>(tr.instants.size());
            tr.instants.push_back(TraceInstant{kk, t_k, tr.rows(), d.transmit, d.reason, d.lambda_k, d.budget});
            if (d.transmit) tr.events.push_back(TraceEvent{kk, t_k, d.reason, v_k, tr.rows()});
            rec.row(t_k, x, xhat, u, v_k, peak, instant_idx);
            peak = -std::numeric_limits<double>::infinity();
            if (kk == last_k) break;

            for (std::size_t j = 1; j <= cfg.substeps; ++j) {
                x = rk4_step(model, x, u, dt);
                const double t = t_k + static_cast<double>(j) * dt;
                check_safety_box(model, x, k.c, t);
                const double vj = model.v(x);
                peak = std::max(peak, vj);
                if (j < cfg.substeps && j % cfg.record_stride == 0) {
                    rec.row(t, x, xhat, u, vj, peak, -1);
                    peak = -std::numeric_limits<double>::infinity();
                }
            }
        }
    } catch (const DomainError& e) {
        throw SimulationAbort(std::string("model evaluated outside its domain: ") + e.what());
    }
    return tr;
}

}  // namespace detail

/// Runs the model-based event-triggered loop.
inline SimTrace run(const PredictionModel& pm, const SimConfig& cfg, const CertifiedConstants& k) {
    const SystemModel& model = pm.system();
    detail::validate_config(model, cfg, k);
    if (pm.step() != cfg.h) throw InputError("run: prediction step differs from h");
    const std::int64_t nu = cfg.nu.value_or(default_nu(cfg.h, k));
    TriggerState trigger(pm, k, nu);
    return detail::simulate(
        pm, cfg, k, nu, [&](std::int64_t kk, const Vector& x) { return trigger.evaluate(kk, x); },
        [&](std::int64_t kk, const Vector& xhat) {
            // sensor and actuator apply the same pure map, so the copies agree bit for bit
            if (xhat != trigger.xhat_sens()) {
                throw SimulationAbort("sensor/actuator prediction mismatch at k = " + std::to_string(kk));
            }
        });
}

/// Time-triggered baseline: transmits at every sampling instant.
inline SimTrace run_time_triggered(const ModelPtr& model, const SimConfig& cfg, const CertifiedConstants& k) {
    detail::validate_config(*model, cfg, k);
    const PredictionModel pm = PredictionModel::zoh(model, cfg.h);
    const std::int64_t nu = cfg.nu.value_or(default_nu(cfg.h, k));
    SimTrace tr = detail::simulate(pm, cfg, k, nu, [&](std::int64_t kk, const Vector& x) {
        return TriggerDecision{true, kk == 0 ? TriggerReason::Initial : TriggerReason::Periodic, std::nullopt,
                               std::nullopt, model->kappa(x)};
    }, [](std::int64_t, const Vector&) {});
    tr.prediction = "periodic";
    return tr;
}

/// Resolves the named model and prediction of `cfg`.
inline SimTrace run(const SimConfig& cfg, const CertifiedConstants& k) {
    auto model = std::make_shared<const SystemModel>(make_model(cfg.model));
    return run(make_prediction(cfg.prediction, model, cfg.h, k), cfg, k);
}

inline SimTrace run_time_triggered(const SimConfig& cfg, const CertifiedConstants& k) {
    auto model = std::make_shared<const SystemModel>(make_model(cfg.model));
    return run_time_triggered(model, cfg, k);
}

// ---------------------------------------------------------------------------
// Comparison
// ---------------------------------------------------------------------------

struct ComparisonRow {
    std::string label;
    std::string prediction;
    TraceSummary summary;
};

struct ComparisonReport {
    std::vector<ComparisonRow> rows;

    std::string to_table() const {
        std::string out = "label,prediction,transmissions,mean_gap,min_gap,max_gap,v_half_life,input_energy,final_v\n";
        for (const auto& r : rows) {
            const auto& s = r.summary;
            out += r.label + "," + r.prediction + "," + std::to_string(s.transmissions) + "," +
                   format_double(s.mean_gap) + "," + format_double(s.min_gap) + "," + format_double(s.max_gap) +
                   "," + format_double(s.v_half_life) + "," + format_double(s.input_energy) + "," +
                   format_double(s.final_v) + "\n";
        }
        return out;
    }
};

inline ComparisonReport compare(const std::vector<const SimTrace*>& traces) {
    ComparisonReport report;
    if (traces.empty()) return report;
    const SimTrace& ref = *traces.front();
    for (const SimTrace* tr : traces) {
        const bool model_ok = tr->model.empty() || ref.model.empty() || tr->model == ref.model;
        if (!model_ok || tr->x0.size() != ref.x0.size() || tr->x0 != ref.x0 || tr->horizon != ref.horizon) {
            throw InputError("compare: traces differ in model, x0 or horizon ('" + ref.label + "' vs '" +
                             tr->label + "')");
        }
        report.rows.push_back(ComparisonRow{tr->label, tr->prediction, tr->summary()});
    }
    return report;
}

inline ComparisonReport compare(const std::vector<SimTrace>& traces) {
    std::vector<const SimTrace*> ptrs;
    for (const auto& t : traces) ptrs.push_back(&t);
    return compare(ptrs);
}

}  // namespace mbpetc
