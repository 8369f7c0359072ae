#pragma once

// Trace checks: the convergence criterion V(x(t+h)) <= S(t, x0), the
// non-monotone decrease conditions between successful transmissions, and the
// two-constant comparison lemma for S.

#include "mbpetc/reference_decay.hpp"
#include "mbpetc/simulator.hpp"

#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace mbpetc {

/// S(t, x0) sampled on a time grid.
struct SampledDecay {
    ReferenceDecay decay;
    std::vector<double> times;
    std::vector<double> values;
};

/// S on `grid`. For linear gamma the closed form is used and the RK4
/// integrator is checked against it at the last grid point.
inline SampledDecay reference_decay(const SystemModel& model, const CertifiedConstants& k, double sigma,
                                    const Vector& x0, const std::vector<double>& grid) {
    ReferenceDecay d = reference_decay(model, k, sigma, x0);
    for (std::size_t i = 1; i < grid.size(); ++i) {
        if (grid[i] < grid[i - 1]) throw InputError("reference_decay: time grid must be nondecreasing");
    }
    SampledDecay out{d, grid, d.sample(grid)};
    if (d.linear_rate() && !grid.empty() && d.v0() > 0.0) {
        const double closed = out.values.back(), integ = d.integrate(grid.back());
        const double scale = std::max(closed, 1e-300);
        if (std::abs(closed - integ) > 1e-8 * scale && std::abs(closed - integ) > 1e-14 * d.v0()) {
            throw std::logic_error("reference decay: closed form and integrator disagree (" + format_double(closed) +
                                   " vs " + format_double(integ) + ")");
        }
    }
    return out;
}

inline SampledDecay reference_decay(const SimTrace& tr, const SystemModel& model, const CertifiedConstants& k) {
    return reference_decay(model, k, tr.sigma, tr.x0, tr.t);
}

struct CheckItem {
    std::string name;
    bool passed = true;
    bool skipped = false;
    // Smallest (most negative) slack; +inf when nothing was evaluated.
    double worst_margin = std::numeric_limits<double>::infinity();
    // Time or event index of the worst margin.
    std::string location;
    std::string note;

    void observe(double margin, const std::string& where) {
        if (margin < worst_margin) {
            worst_margin = margin;
            location = where;
        }
    }
};

struct CheckReport {
    std::string subject;
    std::vector<CheckItem> items;

    bool passed() const {
        for (const auto& i : items) {
            if (!i.skipped && !i.passed) return false;
        }
        return true;
    }

    const CheckItem& item(const std::string& name) const {
        for (const auto& i : items) {
            if (i.name == name) return i;
        }
        throw InputError("check report has no item '" + name + "'");
    }

    std::string to_string() const {
        std::string out;
        for (const auto& i : items) {
            out += subject + " " + i.name + ": " + (i.skipped ? "SKIP" : i.passed ? "PASS" : "FAIL");
            if (!i.skipped && std::isfinite(i.worst_margin)) {
                out += " worst_margin=" + format_double(i.worst_margin) + " at " + i.location;
            }
            if (!i.note.empty()) out += " (" + i.note + ")";
            out += "\n";
        }
        return out;
    }
};

inline double criterion_tolerance(double v0) { return 1e-9 * std::max(v0, 1.0); }

/// V(x(s)) <= S(s - h) for every integrated sub-step s with s >= h.
/// Each row's v_peak covers the sub-steps since the previous row; since S is
/// nonincreasing, comparing it with S at the row's own time minus h is
/// conservative for every sub-step it covers.
inline CheckReport check_convergence_criterion(const SimTrace& tr, const SampledDecay& decay) {
    if (decay.times.size() != tr.rows()) throw InputError("convergence check: decay grid differs from trace grid");
    for (std::size_t i = 0; i < tr.rows(); ++i) {
        if (decay.times[i] != tr.t[i]) throw InputError("convergence check: decay grid differs from trace grid");
    }
    CheckReport rep{tr.label, {}};
    CheckItem item{"convergence_criterion"};
    const std::size_t off = tr.rows_per_period();
    if (off == 0) throw InputError("convergence check: trace has no period structure");
    const double tol = criterion_tolerance(decay.decay.v0());
    for (std::size_t i = off; i < tr.rows(); ++i) {
        const double margin = decay.values[i - off] - tr.v_peak[i];
        item.observe(margin, "t=" + format_double(tr.t[i]));
        if (margin < -tol) item.passed = false;
    }
    if (tr.rows() <= off) {
        item.skipped = true;
        item.note = "trace shorter than one period";
    }
    rep.items.push_back(item);
    return rep;
}

/// Premises of the comparison lemma: C1 <= C2 - r sigma gamma(C2) and
/// C2 <= S(s). When they hold, C1 <= S(s + r).
inline bool proposition1_check(double c1, double c2, double r, double s, const ReferenceDecay& decay) {
    if (r < 0.0 || s < 0.0) throw InputError("proposition1_check: r and s must be nonnegative");
    return c1 <= c2 - r * decay.sigma() * decay.gamma()(c2) && c2 <= decay.value_at(s);
}

/// Between consecutive transmissions tau_l < tau_{l+1}:
///  (a) V(x(tau_l + r)) <= V(x(tau_l)) for 0 <= r < tau_{l+1} - tau_l
///      (also on the interval after the last transmission),
///  (b) [V(x(tau_{l+1})) - V(x(tau_l))] / (tau_{l+1} - tau_l) <= -sigma gamma(V(x(tau_l))),
///  (c) tau_{l+1} - tau_l in [h, (nu + 1) h],
/// and the composite 0.5 (V(x) + V(xhat)) <= c at each transmission.
inline CheckReport check_nonmonotone_conditions(const SimTrace& tr, const SystemModel& model,
                                                const CertifiedConstants& k,
                                                std::function<double(double)> gamma = {}) {
    if (!gamma) gamma = decay_function(model, k);
    CheckReport rep{tr.label, {}};
    CheckItem within{"intra_interval_nonincrease"}, decrease{"event_decrease_rate"}, spacing{"event_spacing"},
        composite{"composite_level"};
    const double tol = criterion_tolerance(tr.v.empty() ? 0.0 : tr.v.front());
    const auto& ev = tr.events;

    for (std::size_t l = 0; l < ev.size(); ++l) {
        const std::size_t r0 = ev[l].row;
        const std::size_t r1 = l + 1 < ev.size() ? ev[l + 1].row : tr.rows() - 1;
        const double v_l = tr.v[r0];
        for (std::size_t i = r0 + 1; i <= r1; ++i) {
            // v_peak[r1] also covers the end point, which (b) bounds more tightly
            const double margin = v_l - tr.v_peak[i];
            within.observe(margin, "l=" + std::to_string(l) + ", t=" + format_double(tr.t[i]));
            if (margin < -tol) within.passed = false;
        }
        const double comp = k.c - 0.5 * (model.v(tr.x_at(r0)) + model.v(tr.xhat_at(r0)));
        composite.observe(comp, "l=" + std::to_string(l));
        if (comp < -tol) composite.passed = false;

        if (l + 1 < ev.size()) {
            const double dt = ev[l + 1].t - ev[l].t;
            const double rate = (tr.v[ev[l + 1].row] - v_l) / dt;
            const double margin = -k.sigma * gamma(v_l) - rate;
            decrease.observe(margin, "l=" + std::to_string(l));
            if (margin * dt < -tol) decrease.passed = false;

            const double periods = dt / tr.h;
            const double slack = std::min(periods - 1.0, static_cast<double>(tr.nu + 1) - periods);
            spacing.observe(slack, "l=" + std::to_string(l));
            if (slack < -1e-6) spacing.passed = false;
        }
    }
    if (ev.size() < 2) {
        decrease.skipped = true;
        decrease.note = "fewer than two transmissions";
        spacing.note = "vacuous: fewer than two transmissions";
    }
    if (ev.empty()) {
        within.skipped = composite.skipped = true;
        within.note = composite.note = "no transmissions";
    }
    rep.items = {within, decrease, spacing, composite};
    return rep;
}

/// V <= c at every recorded row.
inline CheckReport check_level_set(const SimTrace& tr) {
    CheckReport rep{tr.label, {}};
    CheckItem item{"level_set"};
    for (std::size_t i = 0; i < tr.rows(); ++i) {
        const double margin = tr.c - tr.v_peak[i];
        item.observe(margin, "t=" + format_double(tr.t[i]));
        if (margin < -criterion_tolerance(tr.c)) item.passed = false;
    }
    rep.items.push_back(item);
    return rep;
}

/// Recomputes the actuator sequence from the trace: xhat jumps to x at each
/// transmission and to f_p(xhat) otherwise; u = kappa(xhat).
inline CheckReport check_dds_conformance(const SimTrace& tr, const PredictionModel& pm) {
    CheckReport rep{tr.label, {}};
    CheckItem item{"dds_conformance"};
    const SystemModel& model = pm.system();
    Vector xhat;
    for (std::size_t n = 0; n < tr.instants.size(); ++n) {
        const TraceInstant& ins = tr.instants[n];
        const Vector x = tr.x_at(ins.row);
        xhat = (ins.transmit || n == 0) ? x : pm.predict(xhat);
        const double ex = (xhat - tr.xhat_at(ins.row)).cwiseAbs().maxCoeff();
        const double eu = (model.kappa(xhat) - tr.u_at(ins.row)).cwiseAbs().maxCoeff();
        const double err = std::max(ex, eu);
        item.observe(-err, "k=" + std::to_string(ins.k));
        if (err != 0.0) item.passed = false;
    }
    rep.items.push_back(item);
    return rep;
}

}  // namespace mbpetc
