#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "epimpc/certify.hpp"

using namespace epimpc;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

NetworkModel single_node() {
    EpiParams p;
    p.eps = 0.32;
    p.r_a = 0.2;
    p.r_s = 0.2;
    p.beta_max_a = 0.3;
    p.beta_max_s = 0.45;
    return make_network(VectorXd::Constant(1, 1e5), MatrixXd::Constant(1, 1, 1.0), p);
}

NetworkModel pair_model() {
    EpiParams p;
    p.beta_max_a = 0.3;
    p.beta_max_s = 0.45;
    MatrixXd a(2, 2);
    a << 1.0, 0.05, 0.05, 1.0;
    VectorXd pops(2);
    pops << 3e5, 1e5;
    return make_network(pops, a, p);
}

TerminalConfig terminal_cfg() {
    TerminalConfig cfg;
    cfg.alpha = 0.023;
    cfg.b_max = 2.0;
    cfg.beta_max = {0.3, 0.45};
    return cfg;
}

EpiState nearly_clean(Eigen::Index n, double frac) {
    return {VectorXd::Constant(n, 1.0 - frac), VectorXd::Constant(n, frac),
            VectorXd::Zero(n), VectorXd::Zero(n)};
}

}  // namespace

TEST_CASE("terminal membership matches the shifted closed-form abscissa") {
    NetworkModel m = single_node();
    TerminalConfig cfg = terminal_cfg();
    EpiState x = nearly_clean(1, 0.0);
    // lambda_max(M(1, q=B | beta_max)) = 0.16960466 - 2 = -1.83039534.
    TerminalCheck check = in_terminal_set(x, m, cfg);
    CHECK(check.inside);
    CHECK(check.margin == doctest::Approx(1.83039534 - 0.023).epsilon(1e-6));
}

TEST_CASE("terminal membership fails for an insufficient bound") {
    NetworkModel m = single_node();
    TerminalConfig cfg = terminal_cfg();
    cfg.b_max = 0.1;  // shifts the abscissa to 0.0696 > -alpha
    CHECK_FALSE(in_terminal_set(nearly_clean(1, 0.0), m, cfg).inside);
}

TEST_CASE("terminal set is invariant under the safe control") {
    NetworkModel m = pair_model();
    TerminalConfig cfg = terminal_cfg();
    // The safe control makes the symptomatic equation stiff; a fine substep
    // grid keeps the integrator inside the state box for xs near zero.
    StepConfig step{7.0, 56};
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int checked = 0;
    for (int trial = 0; trial < 200; ++trial) {
        EpiState x{VectorXd::NullaryExpr(2, [&](Eigen::Index) { return u(rng); }),
                   VectorXd::NullaryExpr(2, [&](Eigen::Index) { return 0.2 * u(rng); }),
                   VectorXd::NullaryExpr(2, [&](Eigen::Index) { return 0.2 * u(rng); }),
                   VectorXd::Zero(2)};
        for (int i = 0; i < 2; ++i) {
            double tot = x.s(i) + x.xa(i) + x.xs(i);
            if (tot > 1.0) {
                x.s(i) /= tot;
                x.xa(i) /= tot;
                x.xs(i) /= tot;
            }
        }
        if (!in_terminal_set(x, m, cfg).inside) continue;
        TransmissionRate beta{0.3 * u(rng), 0.45 * u(rng)};
        CHECK(check_terminal_invariance(x, beta, m, cfg, step));
        ++checked;
    }
    CHECK(checked > 50);
}

TEST_CASE("check_terminal_invariance rejects out-of-set starts and large beta") {
    NetworkModel m = single_node();
    TerminalConfig cfg = terminal_cfg();
    cfg.b_max = 0.1;
    StepConfig step{7.0, 7};
    CHECK_THROWS_AS(
        check_terminal_invariance(nearly_clean(1, 0.0), {0.3, 0.45}, m, cfg, step),
        ContractError);
    cfg = terminal_cfg();
    CHECK_THROWS_AS(
        check_terminal_invariance(nearly_clean(1, 0.0), {0.6, 0.45}, m, cfg, step),
        ContractError);
}

TEST_CASE("decay certificate on a uniformly isolated closed loop") {
    NetworkModel m = pair_model();
    TerminalConfig cfg = terminal_cfg();
    StepConfig step{7.0, 14};
    ControlVector q_safe = ControlVector::constant(2, cfg.b_max);

    ClosedLoopTrace trace;
    trace.times.push_back(0.0);
    trace.states.push_back(nearly_clean(2, 0.05));
    for (int j = 0; j < 6; ++j) {
        trace.controls.push_back(q_safe);
        trace.betas.push_back({0.3, 0.45});
        trace.states.push_back(
            psi_step(trace.states.back(), q_safe, trace.betas.back(), m, step));
        trace.times.push_back(7.0 * (j + 1));
    }

    DecayCertificate cert = certify_decay(trace, m, cfg);
    CHECK(cert.valid);
    CHECK(cert.steps == 5);
    REQUIRE(cert.per_step_margins.size() == 6);
    for (double margin : cert.per_step_margins) CHECK(margin >= -kMarginTol);
    CHECK(cert.v_floor > 0.0);
    CHECK(cert.v_floor < 1.0);
    CHECK(cert.c_t == doctest::Approx(std::pow(1.0 / cert.v_floor, 6)).epsilon(1e-12));
    CHECK(cert.bound_satisfied);
}

TEST_CASE("decay certificate is invalid when margins are violated") {
    NetworkModel m = pair_model();
    TerminalConfig cfg = terminal_cfg();
    StepConfig step{7.0, 14};
    ControlVector q0 = ControlVector::zero(2);  // uncontrolled: abscissa > -alpha

    ClosedLoopTrace trace;
    trace.times = {0.0, 7.0};
    trace.states.push_back(nearly_clean(2, 0.01));
    trace.controls.push_back(q0);
    trace.betas.push_back({0.3, 0.45});
    trace.states.push_back(psi_step(trace.states[0], q0, {0.3, 0.45}, m, step));

    DecayCertificate cert = certify_decay(trace, m, cfg);
    CHECK_FALSE(cert.valid);
    CHECK(cert.per_step_margins[0] < 0.0);
}

TEST_CASE("certify_decay refuses traces with missing provenance") {
    NetworkModel m = pair_model();
    ClosedLoopTrace trace;
    trace.times = {0.0, 7.0};
    trace.states = {nearly_clean(2, 0.01), nearly_clean(2, 0.005)};
    // controls/betas missing
    CHECK_THROWS_AS(certify_decay(trace, m, terminal_cfg()), ContractError);
}

TEST_CASE("continuation: state already in the terminal set skips phase 1") {
    NetworkModel m = pair_model();
    TerminalConfig cfg = terminal_cfg();
    StepConfig step{7.0, 14};
    Continuation cont =
        build_continuation(nearly_clean(2, 0.01), {}, {}, m, cfg, step);
    CHECK(cont.phase1.empty());
    CHECK(cont.c_h == doctest::Approx(1.0));
    CHECK(cont.c == doctest::Approx(cont.c_inf).epsilon(1e-12));
    CHECK(cont.c_inf >= 1.0);
    CHECK((cont.q_safe.qa.array() == cfg.b_max).all());
}

TEST_CASE("continuation constant really bounds the two-phase trajectory") {
    // A pessimistic worst-case transmission shrinks X_f to low susceptible
    // levels, so the state must burn through susceptibles before phase 2.
    NetworkModel m = pair_model();
    TerminalConfig cfg = terminal_cfg();
    cfg.beta_max = {3.0, 4.5};
    StepConfig step{7.0, 14};
    TransmissionRate beta{0.3, 0.45};
    EpiState x0 = nearly_clean(2, 0.08);
    REQUIRE_FALSE(in_terminal_set(x0, m, cfg).inside);

    // Build a barely-feasible plan one step at a time: a uniform isolation
    // level q_j shifts the abscissa exactly, so picking
    // q_j = lambda(s_j, 0) + alpha + 0.001 keeps the per-step margin at
    // +0.001 while infections slowly deplete susceptibles.
    std::vector<ControlVector> plan;
    ForecastProfile forecast;
    EpiState cur = x0;
    for (int j = 0; j < 60 && !in_terminal_set(cur, m, cfg).inside; ++j) {
        double lam0 =
            spectral_abscissa(
                build_infected_matrix(cur.s, ControlVector::zero(2), beta, m))
                .lambda_max;
        double level = std::max(0.0, lam0 + cfg.alpha + 1e-3);
        plan.push_back(ControlVector::constant(2, level));
        forecast.push_back(beta);
        cur = psi_step(cur, plan.back(), beta, m, step);
    }
    REQUIRE(in_terminal_set(cur, m, cfg).inside);
    REQUIRE(!plan.empty());

    Continuation cont = build_continuation(x0, plan, forecast, m, cfg, step);
    CHECK(cont.phase1.size() == plan.size());
    CHECK(cont.c_h > 1.0);
    CHECK(cont.c_inf >= 1.0);
    CHECK(cont.c == doctest::Approx(cont.c_h * cont.c_inf).epsilon(1e-12));

    // Simulate phase 1 then several phase-2 steps; the sampled decay bound
    // with the combined constant must hold throughout.
    double y0 = x0.infected_norm1();
    EpiState sim = x0;
    double t = 0.0;
    for (size_t j = 0; j < cont.phase1.size(); ++j) {
        sim = psi_step(sim, cont.phase1[j], cont.phase1_forecast[j], m, step);
        t += step.dt_sample;
        CHECK(sim.infected_norm1() <=
              cont.c * std::exp(-cfg.alpha * t) * y0 * (1.0 + 1e-9));
    }
    for (int j = 0; j < 8; ++j) {
        sim = psi_step(sim, cont.q_safe, beta, m, step);
        t += step.dt_sample;
        CHECK(sim.infected_norm1() <=
              cont.c * std::exp(-cfg.alpha * t) * y0 * (1.0 + 1e-9));
    }
}

TEST_CASE("continuation rejects plans that miss the terminal set") {
    NetworkModel m = pair_model();
    TerminalConfig cfg = terminal_cfg();
    cfg.beta_max = {3.0, 4.5};
    StepConfig step{7.0, 14};
    EpiState x0 = nearly_clean(2, 0.01);
    std::vector<ControlVector> weak(2, ControlVector::constant(2, 0.5));
    ForecastProfile fc(2, {0.3, 0.45});
    CHECK_THROWS_AS(build_continuation(x0, weak, fc, m, cfg, step), ContractError);
}
