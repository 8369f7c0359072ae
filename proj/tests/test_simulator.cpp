#include "fixtures.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace mbpetc;
using Catch::Approx;
using fixtures::vec;

namespace {

SimTrace run_pendulum(PredictionKind kind, double horizon, const Vector& x0, std::size_t stride = 1) {
    auto cfg = fixtures::pendulum_config(kind, horizon, x0);
    cfg.record_stride = stride;
    return run(make_prediction(cfg.prediction, fixtures::pendulum_ptr(), cfg.h, fixtures::pendulum_constants()), cfg,
               fixtures::pendulum_constants());
}

}  // namespace

TEST_CASE("zero initial state transmits at every sample and stays at rest") {
    const auto tr = run_pendulum(PredictionKind::ZOH, 0.01, Vector::Zero(2));
    REQUIRE(tr.instants.size() > 100);
    CHECK(tr.events.size() == tr.instants.size());
    CHECK(tr.events.front().reason == TriggerReason::Initial);
    for (std::size_t l = 1; l < tr.events.size(); ++l) CHECK(tr.events[l].reason == TriggerReason::LyapunovBound);
    for (double v : tr.v) CHECK(v == 0.0);

    const auto& k = fixtures::pendulum_constants();
    const auto tt = run_time_triggered(fixtures::pendulum_ptr(), fixtures::pendulum_config(PredictionKind::ZOH, 0.01,
                                                                                           Vector::Zero(2)),
                                       k);
    for (double x : tt.x) CHECK(x == 0.0);
}

TEST_CASE("time-triggered baseline transmits at every instant") {
    const auto& k = fixtures::pendulum_constants();
    const auto cfg = fixtures::pendulum_config(PredictionKind::ZOH, 0.05, vec({0.2, 0.1}));
    const auto tr = run_time_triggered(fixtures::pendulum_ptr(), cfg, k);
    const auto expect = static_cast<std::size_t>(std::floor(cfg.horizon / cfg.h)) + 1;
    CHECK(tr.events.size() == expect);
    CHECK(tr.instants.size() == expect);
    CHECK(tr.events.front().reason == TriggerReason::Initial);
    CHECK(tr.events.back().reason == TriggerReason::Periodic);
    CHECK(tr.prediction == "periodic");
    // at every instant xhat equals x
    for (const auto& in : tr.instants) CHECK(tr.xhat_at(in.row) == tr.x_at(in.row));
    for (std::size_t n = 1; n < tr.instants.size(); ++n) CHECK(tr.v[tr.instants[n].row] < tr.v[tr.instants[n - 1].row]);
}

TEST_CASE("configuration refusals") {
    const auto& k = fixtures::pendulum_constants();
    const auto mp = fixtures::pendulum_ptr();

    auto cfg = fixtures::pendulum_config(PredictionKind::ZOH, 0.01, vec({0.2, 0.0}));
    cfg.h = 2.0 * k.h_sigma_masp;
    CHECK_THROWS_AS(run(PredictionModel::zoh(mp, cfg.h), cfg, k), InputError);
    CHECK_THROWS_AS(run_time_triggered(mp, cfg, k), InputError);
    cfg.unsafe_h_override = true;
    CHECK_NOTHROW(run(PredictionModel::zoh(mp, cfg.h), cfg, k));

    cfg = fixtures::pendulum_config(PredictionKind::ZOH, 0.01, vec({0.6, 0.0}));
    CHECK(mp->v(cfg.x0) > k.c);
    CHECK_THROWS_AS(run(PredictionModel::zoh(mp, cfg.h), cfg, k), InputError);

    cfg = fixtures::pendulum_config(PredictionKind::ZOH, 0.01, vec({0.2, 0.0}));
    cfg.record_stride = 3;
    CHECK_THROWS_AS(run(PredictionModel::zoh(mp, cfg.h), cfg, k), InputError);
    cfg.record_stride = 1;
    cfg.sigma = 0.5;
    CHECK_THROWS_AS(run(PredictionModel::zoh(mp, cfg.h), cfg, k), InputError);
    cfg.sigma.reset();
    cfg.x0 = vec({0.2});
    CHECK_THROWS_AS(run(PredictionModel::zoh(mp, cfg.h), cfg, k), InputError);
    cfg.x0 = vec({0.2, 0.0});
    CHECK_THROWS_AS(run(PredictionModel::zoh(mp, 2.0 * cfg.h), cfg, k), InputError);
    cfg.horizon = 0.5 * cfg.h;
    CHECK_THROWS_AS(run(PredictionModel::zoh(mp, cfg.h), cfg, k), InputError);
}

TEST_CASE("runs are deterministic") {
    const auto a = run_pendulum(PredictionKind::ScaledEuler, 0.1, vec({0.3, -0.2}));
    const auto b = run_pendulum(PredictionKind::ScaledEuler, 0.1, vec({0.3, -0.2}));
    CHECK(a.t == b.t);
    CHECK(a.x == b.x);
    CHECK(a.u == b.u);
    CHECK(a.events.size() == b.events.size());
}

TEST_CASE("actuator follows the sampled-data recursion") {
    const auto mp = fixtures::pendulum_ptr();
    for (auto kind : {PredictionKind::ZOH, PredictionKind::ScaledEuler, PredictionKind::RungeKutta4}) {
        const auto tr = run_pendulum(kind, 0.2, vec({0.4, 0.0}));
        const auto pm = make_prediction(PredictionSettings{kind}, mp, tr.h, fixtures::pendulum_constants());
        const auto rep = check_dds_conformance(tr, pm);
        INFO(rep.to_string());
        CHECK(rep.passed());
        CHECK(check_level_set(tr).passed());
    }
}

TEST_CASE("held intervals respect the decay budget") {
    const auto& k = fixtures::pendulum_constants();
    const auto tr = run_pendulum(PredictionKind::ScaledEuler, 0.3, vec({0.4, 0.0}));
    std::size_t held = 0;
    double v_ref = 0.0;
    for (std::size_t n = 0; n + 1 < tr.instants.size(); ++n) {
        const auto& in = tr.instants[n];
        if (in.transmit) {
            v_ref = tr.v[in.row];
            continue;
        }
        ++held;
        REQUIRE(in.budget.has_value());
        REQUIRE(in.lambda.has_value());
        const auto& next = tr.instants[n + 1];
        const double v_k = tr.v[in.row];
        // the certified upper bound holds on the real flow
        CHECK(tr.v[next.row] <= v_k + *in.lambda + 1e-15);
        CHECK(tr.v[next.row] < *in.budget + 1e-15);
        for (std::size_t r = in.row + 1; r <= next.row; ++r) CHECK(tr.v_peak[r] <= v_ref + 1e-15);
    }
    CHECK(held > 1000);
    (void)k;
}

TEST_CASE("record stride thins rows without changing the instants") {
    const auto fine = run_pendulum(PredictionKind::ScaledEuler, 0.05, vec({0.3, 0.1}), 1);
    const auto coarse = run_pendulum(PredictionKind::ScaledEuler, 0.05, vec({0.3, 0.1}), 20);
    REQUIRE(fine.instants.size() == coarse.instants.size());
    CHECK(coarse.rows() == coarse.instants.size());
    for (std::size_t n = 0; n < fine.instants.size(); ++n) {
        const auto rf = fine.instants[n].row, rc = coarse.instants[n].row;
        CHECK(fine.x_at(rf) == coarse.x_at(rc));
        CHECK(fine.instants[n].transmit == coarse.instants[n].transmit);
        if (n == 0) continue;
        double peak = -1.0;
        for (std::size_t r = fine.instants[n - 1].row + 1; r <= rf; ++r) peak = std::max(peak, fine.v_peak[r]);
        CHECK(coarse.v_peak[rc] == peak);
    }
    for (std::size_t r = 0; r < fine.rows(); ++r) CHECK(fine.v_peak[r] >= fine.v[r]);
}

TEST_CASE("integrator sub-step refinement changes the state negligibly") {
    const auto& k = fixtures::pendulum_constants();
    auto cfg = fixtures::pendulum_config(PredictionKind::ZOH, 0.2, vec({0.4, 0.0}));
    const auto a = run_time_triggered(fixtures::pendulum_ptr(), cfg, k);
    cfg.substeps = 40;
    const auto b = run_time_triggered(fixtures::pendulum_ptr(), cfg, k);
    const double rel = (a.final_state() - b.final_state()).norm() / b.final_state().norm();
    CHECK(rel < 1e-10);
}

TEST_CASE("unsafe sampling period aborts the run") {
    const auto& k = fixtures::pendulum_constants();
    auto cfg = fixtures::pendulum_config(PredictionKind::ZOH, 30.0, vec({0.4, 0.0}));
    cfg.h = 3.0;
    cfg.unsafe_h_override = true;
    CHECK_THROWS_AS(run_time_triggered(fixtures::pendulum_ptr(), cfg, k), SimulationAbort);
}

TEST_CASE("table prediction outside its domain triggers transmissions") {
    const auto& k = fixtures::pendulum_constants();
    const auto mp = fixtures::pendulum_ptr();
    const auto cfg = fixtures::pendulum_config(PredictionKind::LookupTable, 0.001, vec({0.4, 0.0}));
    const auto table = build_lookup_table(*mp, LevelSetSpec{0.001, 0.0}, 5, PredictionModel::rk4(mp, cfg.h));
    const auto tr = run(table, cfg, k);
    REQUIRE(tr.events.size() == tr.instants.size());
    for (std::size_t l = 1; l < tr.events.size(); ++l) CHECK(tr.events[l].reason == TriggerReason::PredictionDomain);
}

TEST_CASE("comparison of runs") {
    const auto a = run_pendulum(PredictionKind::ZOH, 0.05, vec({0.2, 0.0}));
    const auto b = run_pendulum(PredictionKind::ScaledEuler, 0.05, vec({0.2, 0.0}));
    const auto rep = compare(std::vector<SimTrace>{a, b, a});
    REQUIRE(rep.rows.size() == 3);
    CHECK(rep.rows[0].summary.transmissions == rep.rows[2].summary.transmissions);
    CHECK(rep.to_table().starts_with("label,prediction,transmissions"));

    // one transmission only: every gap statistic is the horizon
    REQUIRE(a.events.size() == 1);
    CHECK(a.summary().mean_gap == a.horizon);
    CHECK(a.summary().min_gap == a.horizon);

    const auto c = run_pendulum(PredictionKind::ZOH, 0.05, vec({0.1, 0.0}));
    CHECK_THROWS_AS(compare(std::vector<SimTrace>{a, c}), InputError);
    CHECK(compare(std::vector<SimTrace>{}).rows.empty());
}

TEST_CASE("trace summary statistics") {
    const auto& k = fixtures::pendulum_constants();
    const auto tr = run_time_triggered(fixtures::pendulum_ptr(),
                                       fixtures::pendulum_config(PredictionKind::ZOH, 0.05, vec({0.2, 0.0})), k);
    const auto s = tr.summary();
    CHECK(s.min_gap == Approx(tr.h).epsilon(1e-9));
    CHECK(s.max_gap == Approx(tr.h).epsilon(1e-9));
    CHECK(s.final_v == tr.v.back());
    CHECK(s.v_half_life == std::numeric_limits<double>::infinity());
    CHECK(s.input_energy > 0.0);
}
