#pragma once

// Acceptance battery A1..A8 on the pendulum benchmark. Shared by the CLI
// `accept` command and the acceptance test binary.

#include "mbpetc/analysis.hpp"
#include "mbpetc/trace_io.hpp"

#include <boost/numeric/odeint.hpp>

#include <chrono>
#include <cstdio>
#include <random>
#include <set>

namespace mbpetc {

struct BenchmarkSpec {
    std::string model = "pendulum";
    double c = 0.258;
    double sigma = 0.35;
    std::size_t grid = 200;
    GammaMethod gamma_method = GammaMethod::NormComparison;
    Vector x0;
    double horizon = 10.0;
    double euler_scale = 1.05;
    std::size_t substeps = 20;
    // reference figures the battery compares against
    double ref_h = 2.77e-5;
    double ref_lipschitz_horizon = 1.0 / 4.3;
    double ref_zoh_mean_gap = 0.47;
    double ref_min_gap = 2.5;
};

inline BenchmarkSpec read_benchmark(const std::string& path) {
    const KeyValueFile f = read_key_value_file(path);
    const auto& s = f.root();
    BenchmarkSpec b;
    b.model = s.get_or("model", b.model);
    b.c = s.get_double_or("c", b.c);
    b.sigma = s.get_double_or("sigma", b.sigma);
    b.grid = static_cast<std::size_t>(s.get_int_or("grid", static_cast<long long>(b.grid)));
    b.gamma_method = parse_gamma_method(s.get_or("gamma_method", to_string(b.gamma_method)));
    b.x0 = s.get_vector("x0");
    b.horizon = s.get_double_or("horizon", b.horizon);
    b.euler_scale = s.get_double_or("euler_scale", b.euler_scale);
    b.substeps = static_cast<std::size_t>(s.get_int_or("substeps", static_cast<long long>(b.substeps)));
    if (const auto* r = f.section("reference")) {
        b.ref_h = r->get_double_or("h_sigma_masp", b.ref_h);
        b.ref_lipschitz_horizon = r->get_double_or("lipschitz_horizon", b.ref_lipschitz_horizon);
        b.ref_zoh_mean_gap = r->get_double_or("zoh_mean_gap", b.ref_zoh_mean_gap);
        b.ref_min_gap = r->get_double_or("min_gap", b.ref_min_gap);
    }
    return b;
}

enum class Status { Pass, Fail, Skip };

inline std::string to_string(Status s) { return s == Status::Pass ? "PASS" : s == Status::Fail ? "FAIL" : "SKIP"; }

struct CriterionResult {
    std::string id;
    Status status = Status::Skip;
    std::string detail;
    double seconds = 0.0;

    std::string line() const {
        char t[32];
        std::snprintf(t, sizeof t, "%.1f s", seconds);
        return id + " " + to_string(status) + " [" + t + "] " + detail;
    }
};

struct AcceptanceReport {
    std::vector<CriterionResult> results;

    bool passed() const {
        for (const auto& r : results) {
            if (r.status == Status::Fail) return false;
        }
        return true;
    }

    const CriterionResult& at(const std::string& id) const {
        for (const auto& r : results) {
            if (r.id == id) return r;
        }
        throw InputError("no criterion " + id);
    }
};

struct AcceptanceOptions {
    std::string benchmark_path;
    // Use this manifest instead of certifying.
    std::string constants_path;
    // Empty: run all.
    std::set<std::string> only;
    std::size_t a6_pairs = 100;
    std::size_t a7_cases = 100000;
    std::uint64_t seed = 20190601;
};

inline const std::vector<std::string>& criterion_ids() {
    static const std::vector<std::string> ids{"A1", "A2", "A3", "A4", "A5", "A6", "A7", "A8"};
    return ids;
}

namespace detail {

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline std::string fmt(double v, const char* spec = "%.4g") {
    char buf[48];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

inline bool within_rel(double value, double ref, double tol) { return std::abs(value - ref) <= tol * std::abs(ref); }

// Adaptive Dormand-Prince flow under a frozen input, independent of the
// fixed-step integrator used by the simulator.
inline Vector reference_flow(const SystemModel& model, const Vector& x0, const Vector& u, double t) {
    using state = std::vector<double>;
    state y(x0.data(), x0.data() + x0.size());
    auto rhs = [&](const state& s, state& ds, double) {
        const Vector dx = model.f(Eigen::Map<const Vector>(s.data(), static_cast<Eigen::Index>(s.size())), u);
        ds.assign(dx.data(), dx.data() + dx.size());
    };
    namespace ode = boost::numeric::odeint;
    ode::integrate_adaptive(ode::make_controlled<ode::runge_kutta_dopri5<state>>(1e-14, 1e-14), rhs, y, 0.0, t,
                            t / 16.0);
    return Eigen::Map<const Vector>(y.data(), static_cast<Eigen::Index>(y.size()));
}

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace detail

class AcceptanceBattery {
public:
    explicit AcceptanceBattery(AcceptanceOptions opts) : opts_(std::move(opts)) {
        for (const auto& id : opts_.only) {
            if (std::find(criterion_ids().begin(), criterion_ids().end(), id) == criterion_ids().end()) {
                throw InputError("unknown acceptance criterion '" + id + "'");
            }
        }
        bench_ = read_benchmark(opts_.benchmark_path);
        model_ = std::make_shared<const SystemModel>(make_model(bench_.model));
    }

    AcceptanceReport run(std::ostream* log = nullptr) {
        AcceptanceReport rep;
        auto emit = [&](CriterionResult r) {
            if (log) *log << r.line() << std::endl;
            rep.results.push_back(std::move(r));
        };
        const CriterionResult a1 = criterion_a1();
        if (selected("A1")) emit(a1);
        for (const auto& id : criterion_ids()) {
            if (id == "A1" || !selected(id)) continue;
            if (!k_) {
                emit(CriterionResult{id, Status::Skip, "constants unavailable (A1 failed)", 0.0});
                continue;
            }
            detail::Stopwatch sw;
            CriterionResult r;
            try {
                r = dispatch(id);
            } catch (const std::exception& e) {
                r = CriterionResult{id, Status::Fail, std::string("error: ") + e.what(), 0.0};
            }
            r.id = id;
            r.seconds = sw.seconds();
            emit(r);
        }
        return rep;
    }

    const BenchmarkSpec& benchmark() const { return bench_; }
    const std::optional<CertifiedConstants>& constants() const { return k_; }

private:
    bool selected(const std::string& id) const { return opts_.only.empty() || opts_.only.count(id) > 0; }

    CriterionResult dispatch(const std::string& id) {
        if (id == "A2") return a2();
        if (id == "A3") return a3();
        if (id == "A4") return a4();
        if (id == "A5") return a5();
        if (id == "A6") return a6();
        if (id == "A7") return a7();
        return a8();
    }

    // A1 also provides the constants every later criterion depends on.
    CriterionResult criterion_a1() {
        CriterionResult r{"A1"};
        detail::Stopwatch sw;
        bool certified_here = false;
        try {
            if (!opts_.constants_path.empty()) {
                k_ = read_constants_file(opts_.constants_path);
                if (k_->model != bench_.model || k_->c != bench_.c || k_->sigma != bench_.sigma) {
                    k_.reset();
                    throw InputError("constants manifest does not match the benchmark model, c or sigma");
                }
            } else {
                EstimationOptions eo;
                eo.grid_resolution = bench_.grid;
                k_ = certify(*model_, make_level_set(*model_, bench_.c), bench_.sigma, eo, bench_.gamma_method);
                certified_here = true;
            }
        } catch (const std::exception& e) {
            r.status = Status::Fail;
            r.detail = std::string("constants: ") + e.what();
            r.seconds = sw.seconds();
            return r;
        }
        r.seconds = sw.seconds();
        const double lh = k_->lipschitz_horizon();
        const bool h_ok = detail::within_rel(k_->h_sigma_masp, bench_.ref_h, 0.25);
        const bool l_ok = detail::within_rel(lh, bench_.ref_lipschitz_horizon, 0.25);
        const bool t_ok = !certified_here || r.seconds < 60.0;
        r.status = h_ok && l_ok && t_ok ? Status::Pass : Status::Fail;
        r.detail = "h_sigma_masp=" + detail::fmt(k_->h_sigma_masp) + " (ref " + detail::fmt(bench_.ref_h) +
                   " +-25%), 1/(1+2L1)=" + detail::fmt(lh) + " (ref " + detail::fmt(bench_.ref_lipschitz_horizon) +
                   " +-25%), active=" + to_string(k_->active_term) +
                   (certified_here ? ", certify " + detail::fmt(r.seconds, "%.1f") + " s (< 60 s)"
                                   : ", loaded from manifest");
        return r;
    }

    SimConfig base_config(PredictionKind kind, const std::string& label) const {
        SimConfig cfg;
        cfg.label = label;
        cfg.model = bench_.model;
        cfg.prediction.kind = kind;
        cfg.prediction.euler_scale = bench_.euler_scale;
        cfg.h = k_->h_sigma_masp;
        cfg.horizon = bench_.horizon;
        cfg.x0 = bench_.x0;
        cfg.substeps = bench_.substeps;
        cfg.record_stride = bench_.substeps;
        return cfg;
    }

    SimTrace run_config(const SimConfig& cfg) const {
        return mbpetc::run(make_prediction(cfg.prediction, model_, cfg.h, *k_), cfg, *k_);
    }

    const SimTrace& zoh_trace() {
        if (!zoh_) {
            detail::Stopwatch sw;
            zoh_ = run_config(base_config(PredictionKind::ZOH, "zoh"));
            zoh_seconds_ = sw.seconds();
        }
        return *zoh_;
    }

    const SimTrace& euler_trace() {
        if (!euler_) euler_ = run_config(base_config(PredictionKind::ScaledEuler, "euler"));
        return *euler_;
    }

    const SimTrace& periodic_trace() {
        if (!periodic_) periodic_ = run_time_triggered(model_, base_config(PredictionKind::ZOH, "periodic"), *k_);
        return *periodic_;
    }

    CriterionResult a2() {
        const SimTrace& tr = zoh_trace();
        const TraceSummary s = tr.summary();
        const bool ok = s.transmissions >= 2 && detail::within_rel(s.mean_gap, bench_.ref_zoh_mean_gap, 0.20) &&
                        zoh_seconds_ < 120.0;
        return {"A2", ok ? Status::Pass : Status::Fail,
                "ZOH mean gap=" + detail::fmt(s.mean_gap) + " s (ref " + detail::fmt(bench_.ref_zoh_mean_gap) +
                    " +-20%), transmissions=" + std::to_string(s.transmissions) + ", instants=" +
                    std::to_string(tr.instants.size()) + ", run " + detail::fmt(zoh_seconds_, "%.1f") + " s"};
    }

    CriterionResult a3() {
        const TraceSummary z = zoh_trace().summary();
        const TraceSummary e = euler_trace().summary();
        const bool gap_ok = e.transmissions >= 2 && e.min_gap >= bench_.ref_min_gap;
        const bool ok = gap_ok && e.transmissions < z.transmissions && e.v_half_life < z.v_half_life;
        return {"A3", ok ? Status::Pass : Status::Fail,
                "Euler(" + detail::fmt(bench_.euler_scale) + ") min gap=" + detail::fmt(e.min_gap) + " s (>= " +
                    detail::fmt(bench_.ref_min_gap) + "), transmissions " + std::to_string(e.transmissions) +
                    " vs ZOH " + std::to_string(z.transmissions) + ", V half-life " + detail::fmt(e.v_half_life) +
                    " s vs ZOH " + detail::fmt(z.v_half_life) + " s"};
    }

    CriterionResult a4() {
        std::string detail;
        bool ok = true;
        for (const SimTrace* tr : {&zoh_trace(), &euler_trace(), &periodic_trace()}) {
            const CheckReport rep = check_convergence_criterion(*tr, reference_decay(*tr, *model_, *k_));
            const CheckItem& it = rep.items.front();
            ok = ok && rep.passed() && !it.skipped;
            detail += (detail.empty() ? "" : "; ") + tr->label + " " + (rep.passed() ? "pass" : "FAIL") +
                      " worst margin " + detail::fmt(it.worst_margin) + " at " + it.location;
        }
        return {"A4", ok ? Status::Pass : Status::Fail, detail};
    }

    CriterionResult a5() {
        std::string detail;
        bool ok = true;
        for (const SimTrace* tr : {&zoh_trace(), &euler_trace()}) {
            const CheckReport rep = check_nonmonotone_conditions(*tr, *model_, *k_);
            ok = ok && rep.passed();
            detail += (detail.empty() ? "" : "; ") + tr->label + ":";
            for (const auto& it : rep.items) {
                detail += " " + it.name + "=" + (it.skipped ? "skip" : it.passed ? "pass" : "FAIL");
                if (!it.passed) detail += "(" + detail::fmt(it.worst_margin) + " at " + it.location + ")";
                ok = ok && !it.skipped;
            }
        }
        return {"A5", ok ? Status::Pass : Status::Fail, detail};
    }

    CriterionResult a6() {
        std::mt19937_64 rng(opts_.seed);
        const auto x0s = sample_level_set(*model_, bench_.c, opts_.a6_pairs, rng);
        const auto x1s = sample_level_set(*model_, bench_.c, opts_.a6_pairs, rng);
        const double h = k_->h_sigma_masp;
        std::size_t checks = 0, dev_bad = 0, v_bad = 0;
        double worst_ratio = 0.0;
        for (std::size_t i = 0; i < x0s.size(); ++i) {
            const Vector u = model_->kappa(x1s[i]);
            const double lie0 = lie_derivative(*model_, x0s[i], u);
            for (double t : {h / 4.0, h / 2.0, h}) {
                const Vector xt = detail::reference_flow(*model_, x0s[i], u, t);
                const double dev = std::abs(lie_derivative(*model_, xt, u) - lie0);
                const double bound = corollary1_deviation_bound(*model_, *k_, x0s[i], u, t);
                if (dev > bound) ++dev_bad;
                if (bound > 0.0) worst_ratio = std::max(worst_ratio, dev / bound);
                if (model_->v(xt) > v_bound(*model_, *k_, x0s[i], u, t)) ++v_bad;
                ++checks;
            }
        }
        const bool ok = dev_bad == 0 && v_bad == 0;
        return {"A6", ok ? Status::Pass : Status::Fail,
                std::to_string(checks) + " checks, deviation-bound violations=" + std::to_string(dev_bad) +
                    ", V-bound violations=" + std::to_string(v_bad) + ", max deviation/bound=" +
                    detail::fmt(worst_ratio)};
    }

    CriterionResult a7() {
        std::mt19937_64 rng(opts_.seed + 7);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::size_t accepted = 0, violations = 0, draws = 0;
        double worst = std::numeric_limits<double>::infinity();
        while (accepted < opts_.a7_cases) {
            ++draws;
            const double sigma = 0.01 + 0.98 * unit(rng);
            const double rate = 0.05 + 3.0 * unit(rng);
            const double v0 = unit(rng);
            const ReferenceDecay d = ReferenceDecay::linear(sigma, rate, v0);
            const double s = 5.0 * unit(rng);
            const double r = unit(rng) < 0.05 ? 0.0 : 5.0 * unit(rng);
            const double c2 = unit(rng) < 0.05 ? d.value_at(s) : unit(rng) * d.value_at(s);
            const double top = c2 - r * sigma * rate * c2;
            const double c1 = unit(rng) < 0.05 ? top : top - unit(rng) * std::max(c2, 1e-3);
            if (!proposition1_check(c1, c2, r, s, d)) continue;
            ++accepted;
            const double margin = d.value_at(s + r) - c1;
            worst = std::min(worst, margin);
            if (margin < -1e-12 * std::max(v0, 1e-300)) ++violations;
        }
        return {"A7", violations == 0 ? Status::Pass : Status::Fail,
                std::to_string(accepted) + " premise-satisfying tuples (" + std::to_string(draws) +
                    " drawn), conclusion violations=" + std::to_string(violations) + ", worst margin " +
                    detail::fmt(worst)};
    }

    CriterionResult a8() {
        const SimConfig cfg = base_config(PredictionKind::ScaledEuler, "euler");
        const ReferenceDecay decay = reference_decay(*model_, *k_, k_->sigma, cfg.x0);
        const std::uint64_t h1 = detail::fnv1a(trace_csv_string(euler_trace(), decay));
        const std::uint64_t h2 = detail::fnv1a(trace_csv_string(run_config(cfg), decay));
        SimConfig fine = cfg;
        fine.substeps *= 2;
        fine.record_stride = fine.substeps;
        const Vector xf = run_config(fine).final_state();
        const Vector xc = euler_trace().final_state();
        const double rel = (xf - xc).norm() / std::max(xc.norm(), 1e-300);
        const bool ok = h1 == h2 && rel < 1e-6;
        return {"A8", ok ? Status::Pass : Status::Fail,
                std::string("repeat run CSV ") + (h1 == h2 ? "byte-identical" : "DIFFERS") +
                    ", final-state change with doubled sub-steps=" + detail::fmt(rel) + " relative (< 1e-6)"};
    }

    AcceptanceOptions opts_;
    BenchmarkSpec bench_;
    ModelPtr model_;
    std::optional<CertifiedConstants> k_;
    std::optional<SimTrace> zoh_, euler_, periodic_;
    double zoh_seconds_ = 0.0;
};

inline AcceptanceReport run_acceptance(const AcceptanceOptions& opts, std::ostream* log = nullptr) {
    AcceptanceBattery battery(opts);
    return battery.run(log);
}

}  // namespace mbpetc
