#include "epimpc/certify.hpp"

#include <cmath>

namespace epimpc {

namespace {

ControlVector safe_control(const NetworkModel& model, const TerminalConfig& cfg) {
    return ControlVector::constant(model.n, cfg.b_max);
}

}  // namespace

TerminalCheck in_terminal_set(const EpiState& state, const NetworkModel& model,
                              const TerminalConfig& cfg) {
    cfg.validate();
    check_dimensions(state, model);
    InfectedMatrix m =
        build_infected_matrix(state.s, safe_control(model, cfg), cfg.beta_max, model);
    double lambda = spectral_abscissa(m).lambda_max;
    TerminalCheck check;
    check.margin = -cfg.alpha - lambda;
    check.inside = check.margin >= -kMarginTol;
    return check;
}

bool check_terminal_invariance(const EpiState& state, const TransmissionRate& beta,
                               const NetworkModel& model, const TerminalConfig& cfg,
                               const StepConfig& step) {
    if (!in_terminal_set(state, model, cfg).inside)
        throw ContractError("check_terminal_invariance: state not in X_f");
    if (beta.beta_a > cfg.beta_max.beta_a + 1e-12 ||
        beta.beta_s > cfg.beta_max.beta_s + 1e-12)
        throw ContractError("check_terminal_invariance: beta exceeds beta_max");
    EpiState next = psi_step(state, safe_control(model, cfg), beta, model, step);
    return in_terminal_set(next, model, cfg).inside;
}

DecayCertificate certify_decay(const ClosedLoopTrace& trace,
                               const NetworkModel& model,
                               const TerminalConfig& cfg) {
    cfg.validate();
    const size_t n_steps = trace.steps();
    if (n_steps == 0 || trace.states.size() != n_steps + 1 ||
        trace.betas.size() != n_steps || trace.times.size() != n_steps + 1)
        throw ContractError("certify_decay: trace missing per-step provenance");

    DecayCertificate cert;
    cert.alpha = cfg.alpha;
    cert.steps = static_cast<int>(n_steps) - 1;
    cert.per_step_margins.reserve(n_steps);

    double v_floor = std::numeric_limits<double>::infinity();
    bool margins_ok = true;
    for (size_t m = 0; m < n_steps; ++m) {
        InfectedMatrix mat = build_infected_matrix(trace.states[m].s, trace.controls[m],
                                                   trace.betas[m], model);
        SpectralResult spec = spectral_abscissa(mat);
        double margin = -cfg.alpha - spec.lambda_max;
        cert.per_step_margins.push_back(margin);
        if (margin < -kMarginTol) margins_ok = false;
        if (spec.left_vec)
            v_floor = std::min(v_floor, spec.left_vec->minCoeff());
        else
            v_floor = 0.0;
    }
    cert.v_floor = std::isfinite(v_floor) ? v_floor : 0.0;
    cert.valid = margins_ok && cert.v_floor > 0;
    if (cert.v_floor > 0)
        cert.c_t = std::pow(1.0 / cert.v_floor, cert.steps + 1);

    if (cert.valid) {
        cert.bound_satisfied = true;
        const double y0 = trace.states.front().infected_norm1();
        const double t0 = trace.times.front();
        for (size_t m = 0; m < trace.states.size(); ++m) {
            double bound = cert.c_t * std::exp(-cfg.alpha * (trace.times[m] - t0)) * y0;
            if (trace.states[m].infected_norm1() > bound * (1.0 + 1e-9)) {
                cert.bound_satisfied = false;
                break;
            }
        }
    }
    return cert;
}

Continuation build_continuation(const EpiState& state,
                                const std::vector<ControlVector>& planned,
                                const ForecastProfile& forecast,
                                const NetworkModel& model,
                                const TerminalConfig& cfg, const StepConfig& step) {
    cfg.validate();
    Continuation cont;
    cont.q_safe = safe_control(model, cfg);

    TerminalCheck here = in_terminal_set(state, model, cfg);
    EpiState phase2_start = state;
    if (!here.inside) {
        if (planned.size() != forecast.size() || planned.empty())
            throw ContractError("build_continuation: plan/forecast length mismatch");
        std::vector<EpiState> traj = rollout(state, planned, forecast, model, step);
        if (!in_terminal_set(traj.back(), model, cfg).inside)
            throw ContractError("build_continuation: terminal state not in X_f");

        double v_floor = std::numeric_limits<double>::infinity();
        for (size_t j = 0; j < planned.size(); ++j) {
            InfectedMatrix m =
                build_infected_matrix(traj[j].s, planned[j], forecast[j], model);
            v_floor = std::min(v_floor, perron_left_vector(m).minCoeff());
        }
        cont.phase1 = planned;
        cont.phase1_forecast = forecast;
        cont.c_h = std::pow(1.0 / v_floor, static_cast<double>(planned.size()) + 1.0);
        phase2_start = traj.back();
    }

    InfectedMatrix m_star =
        build_infected_matrix(phase2_start.s, cont.q_safe, cfg.beta_max, model);
    cont.c_inf = 1.0 / perron_left_vector(m_star).minCoeff();
    cont.c = cont.c_h * cont.c_inf;
    return cont;
}

}  // namespace epimpc
