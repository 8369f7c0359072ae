#include "fixtures.hpp"
#include "oracles.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <numbers>
#include <sstream>

using namespace mbpetc;
using Catch::Approx;
using fixtures::vec;

namespace {

EstimationOptions exact_opts(std::size_t grid = 41) {
    EstimationOptions o;
    o.grid_resolution = grid;
    o.input_resolution = 9;
    o.sup_safety = 1.0;
    o.inf_safety = 1.0;
    return o;
}

}  // namespace

TEST_CASE("L1 of a linear system is the spectral norm of A") {
    const auto m = fixtures::double_integrator();
    Matrix a(2, 2);
    a << 0.0, 1.0, 0.0, 0.0;
    const double l1 = estimate_L1(m, make_level_set(m, 1.0), exact_opts());
    CHECK(std::abs(l1 - spectral_norm(a)) < 1e-3);
}

TEST_CASE("L2 examples") {
    Matrix id = Matrix::Identity(2, 2);
    auto m = fixtures::double_integrator();
    attach_quadratic_certificate(m, id);
    CHECK(estimate_L2(m, make_level_set(m, 1.0)) == 2.0);

    const auto pend = pendulum_model();
    const double l2 = estimate_L2(pend, make_level_set(pend, 0.258));
    CHECK(l2 == Approx(2.0 * spectral_norm(pendulum_lyapunov_matrix())).epsilon(1e-15));

    // numerical path (no quadratic form) against the same closed form
    auto numeric = pend;
    numeric.quadratic_form.reset();
    EstimationOptions o = exact_opts(31);
    o.box = level_set_box(pend, 0.258);
    CHECK(estimate_L2(numeric, make_level_set(pend, 0.258), o) == Approx(l2).epsilon(1e-5));

    // brute-force difference quotients of the gradient never exceed it
    std::mt19937_64 rng(4);
    const auto pts = sample_level_set(pend, 0.258, 300, rng);
    double dq = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
        dq = std::max(dq, (pend.v_grad(pts[i]) - pend.v_grad(pts[i - 1])).norm() / (pts[i] - pts[i - 1]).norm());
    }
    CHECK(dq <= l2 * (1 + 1e-12));
    CHECK(dq >= 0.5 * l2);

    // linear V has constant gradient
    SystemModel lin = numeric;
    lin.v = [](const Vector& x) { return 3.0 * x[0] - x[1] + 10.0; };
    lin.v_grad = [](const Vector&) {
        RowVector g(2);
        g << 3.0, -1.0;
        return g;
    };
    CHECK(estimate_L2(lin, LevelSetSpec{100.0, 0.0}, o) == Approx(0.0).margin(1e-6));
}

TEST_CASE("M_max of x' = -x with V = x^2 is 1.5") {
    const auto m = fixtures::scalar_decay();
    const double mm = estimate_M_max(m, make_level_set(m, 1.0), exact_opts(101));
    CHECK(mm == Approx(1.5).epsilon(1e-12));
    // brute force of the ratio at random points
    for (double x : {0.01, 0.3, -0.77}) {
        const double f = -x;
        CHECK((2.0 * std::abs(x) * std::abs(f) + f * f) / (2.0 * x * x) == Approx(1.5));
    }
}

TEST_CASE("gamma rate of x' = -x with V = x^2 is 2") {
    const auto m = fixtures::scalar_decay();
    CHECK(estimate_gamma_rate(m, make_level_set(m, 1.0), exact_opts(101)) == Approx(2.0).epsilon(1e-12));
    CHECK(estimate_gamma_rate_norm_comparison(m, make_level_set(m, 1.0), exact_opts(101)) ==
          Approx(2.0).epsilon(1e-12));
    // default deflation
    CHECK(estimate_gamma_rate(m, make_level_set(m, 1.0)) == Approx(1.9).epsilon(1e-12));
}

TEST_CASE("decrease violation is reported with the offending point") {
    auto m = fixtures::scalar_decay();
    m.f = [](const Vector& x, const Vector& u) -> Vector { return x + u; };
    try {
        estimate_M_max(m, make_level_set(m, 1.0), exact_opts(21));
        FAIL("expected CertificationError");
    } catch (const CertificationError& e) {
        REQUIRE(e.offending_point.size() == 1);
        CHECK(m.v(e.offending_point) <= 1.0);
        CHECK(e.offending_point.norm() > 0.0);
    }
    CHECK_THROWS_AS(estimate_gamma_rate(m, make_level_set(m, 1.0), exact_opts(21)), CertificationError);
}

TEST_CASE("non-finite evaluations fail certification") {
    auto m = fixtures::scalar_decay();
    m.f = [](const Vector& x, const Vector& u) -> Vector {
        Vector d = -x + u;
        if (x[0] > 0.5) d[0] = std::numeric_limits<double>::quiet_NaN();
        return d;
    };
    CHECK_THROWS_AS(estimate_L1(m, make_level_set(m, 1.0), exact_opts(21)), CertificationError);
}

TEST_CASE("mu and sigma-MASP closed forms") {
    const double se = std::sqrt(std::numbers::e);
    CHECK(compute_mu(2.0, 0.1) == Approx(se * 2.0));
    CHECK(compute_mu(1.0, 3.0) == Approx(se * 3.0 * (1.0 + se)));

    const SigmaMasp a = compute_sigma_masp(0.35, 1.7, 17.3, 11.5);
    CHECK(a.convergence_term == Approx(std::pow(3.0 * 0.65 / (2.0 * 17.3 * 11.5), 2)));
    CHECK(a.lipschitz_term == Approx(1.0 / 4.4));
    CHECK(a.active == MaspTerm::Convergence);
    CHECK(a.h == a.convergence_term);

    // sigma -> 1 drives h to 0
    CHECK(compute_sigma_masp(0.9999, 1.7, 17.3, 11.5).h < 1e-12);
    // tiny mu M: the Lipschitz term is active
    const SigmaMasp b = compute_sigma_masp(0.35, 1.0, 1e-6, 1e-6);
    CHECK(b.active == MaspTerm::Lipschitz);
    CHECK(b.h == 1.0 / 3.0);
}

TEST_CASE("pendulum constants match the reference order of magnitude") {
    const auto& k = fixtures::pendulum_constants(100);
    CHECK(k.h_sigma_masp == Approx(2.77e-5).epsilon(0.25));
    CHECK(k.lipschitz_horizon() == Approx(1.0 / 4.3).epsilon(0.25));
    CHECK(k.active_term == MaspTerm::Convergence);
    CHECK(k.gamma_rate > 0.0);
    CHECK(k.gamma_rate_norm_comparison <= k.gamma_rate_direct);
    CHECK(k.mu_c == compute_mu(k.L1c, k.L2c));
    CHECK_NOTHROW(validate(k));
}

TEST_CASE("L1 bounds brute-force difference quotients") {
    const auto& m = *fixtures::pendulum_ptr();
    const auto& k = fixtures::pendulum_constants();
    std::mt19937_64 rng(8);
    for (const auto& x3 : sample_level_set(m, 0.258, 25, rng)) {
        CHECK(oracle::max_difference_quotient(m, 0.258, m.kappa(x3), 400, 17) <= k.L1c);
    }
}

TEST_CASE("sup estimates are monotone in c and grid; inf estimate is antitone in c") {
    const auto m = pendulum_model();
    EstimationOptions o = exact_opts(41);
    o.box = level_set_box(m, 0.258);
    const LevelSetSpec big{0.258, 1e-3};
    const LevelSetSpec small{0.00258, 1e-3};
    CHECK(estimate_L1(m, small, o) <= estimate_L1(m, big, o));
    CHECK(estimate_M_max(m, small, o) <= estimate_M_max(m, big, o));
    CHECK(estimate_gamma_rate(m, small, o) >= estimate_gamma_rate(m, big, o));

    // 41 -> 81 points per axis: every coarse node is a fine node
    EstimationOptions fine = o;
    fine.grid_resolution = 81;
    fine.input_resolution = 17;
    CHECK(estimate_L1(m, big, o) <= estimate_L1(m, big, fine));
    CHECK(estimate_M_max(m, big, o) <= estimate_M_max(m, big, fine));

    // a larger exclusion ball removes candidates
    const LevelSetSpec wider{0.258, 2e-3};
    CHECK(estimate_M_max(m, wider, o) <= estimate_M_max(m, big, o));
}

TEST_CASE("gamma rate is grid-converged") {
    const auto m = pendulum_model();
    EstimationOptions a;
    a.grid_resolution = 100;
    EstimationOptions b = a;
    b.grid_resolution = 200;
    const auto ls = make_level_set(m, 0.258);
    const double r1 = estimate_gamma_rate(m, ls, a), r2 = estimate_gamma_rate(m, ls, b);
    CHECK(std::abs(r1 - r2) < 0.05 * r2);
    const double n1 = estimate_gamma_rate_norm_comparison(m, ls, a);
    const double n2 = estimate_gamma_rate_norm_comparison(m, ls, b);
    CHECK(std::abs(n1 - n2) < 0.05 * n2);
}

TEST_CASE("v_bound and the deviation bound") {
    const auto& m = *fixtures::pendulum_ptr();
    const auto& k = fixtures::pendulum_constants();
    const Vector x = vec({0.2, -0.1});
    const Vector u = m.kappa(x);
    CHECK(v_bound(m, k, x, u, 0.0) == m.v(x));
    CHECK(v_bound(m, k, Vector::Zero(2), Vector::Zero(1), 0.1) == 0.0);
    CHECK_THROWS_AS(v_bound(m, k, x, u, -1e-9), InputError);

    CHECK(corollary1_deviation_bound(m, k, x, u, 0.0) == 0.0);
    CHECK(corollary1_deviation_bound(m, k, Vector::Zero(2), Vector::Zero(1), 0.1) == 0.0);
    CHECK_THROWS_AS(corollary1_deviation_bound(m, k, x, u, k.lipschitz_horizon() * 1.01), InputError);
    CHECK_THROWS_AS(corollary1_deviation_bound(m, k, x, u, -0.1), InputError);
}

TEST_CASE("v_bound over-approximates V along the frozen-input flow") {
    const auto& m = *fixtures::pendulum_ptr();
    const auto& k = fixtures::pendulum_constants();
    const double h = k.h_sigma_masp;
    std::mt19937_64 rng(99);
    const auto xs = sample_level_set(m, 0.258, 100, rng);
    const auto x1s = sample_level_set(m, 0.258, 100, rng);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        for (const Vector& u : {m.kappa(xs[i]), m.kappa(x1s[i])}) {
            const double lie0 = lie_derivative(m, xs[i], u);
            for (double t : {h / 4, h / 2, h}) {
                const Vector xt = oracle::frozen_flow(m, xs[i], u, t);
                CHECK(m.v(xt) <= v_bound(m, k, xs[i], u, t));
                CHECK(std::abs(lie_derivative(m, xt, u) - lie0) <= corollary1_deviation_bound(m, k, xs[i], u, t));
            }
        }
    }
}

TEST_CASE("constants manifest round-trip and corruption") {
    const auto& k = fixtures::pendulum_constants();
    const std::string text = constants_to_string(k);
    std::istringstream in(text);
    const CertifiedConstants back = read_constants(in);
    CHECK(constants_to_string(back) == text);
    CHECK(back.h_sigma_masp == k.h_sigma_masp);

    std::string bad = text;
    const auto pos = bad.find("M_max_c = ");
    REQUIRE(pos != std::string::npos);
    bad.insert(pos + 10, "1");
    std::istringstream bad_in(bad);
    CHECK_THROWS_AS(read_constants(bad_in), InputError);

    std::istringstream missing("model = pendulum\nc = 0.258\n");
    CHECK_THROWS_AS(read_constants(missing), InputError);
}

TEST_CASE("certification is deterministic") {
    const auto m = pendulum_model();
    EstimationOptions o;
    o.grid_resolution = 40;
    o.input_resolution = 12;
    const auto a = certify(m, make_level_set(m, 0.258), 0.35, o);
    const auto b = certify(m, make_level_set(m, 0.258), 0.35, o);
    CHECK(constants_to_string(a) == constants_to_string(b));
    CHECK_THROWS_AS(certify(m, make_level_set(m, 0.258), 1.0, o), InputError);
    o.grid_resolution = 4;
    CHECK_THROWS_AS(certify(m, make_level_set(m, 0.258), 0.35, o), InputError);
}
