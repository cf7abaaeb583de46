#pragma once

#include <vector>

#include "epimpc/integrator.hpp"
#include "epimpc/spectral.hpp"

namespace epimpc {

/// Terminal set and decay-certificate parameters.
struct TerminalConfig {
    double alpha = 0.023;        ///< target decay rate, 1/day
    double b_max = 2.0;          ///< control bound B, 1/day
    TransmissionRate beta_max;   ///< worst-case transmission

    void validate() const {
        if (!(alpha > 0)) throw ContractError("TerminalConfig: alpha must be > 0");
        if (!(b_max > 0)) throw ContractError("TerminalConfig: b_max must be > 0");
    }
};

/// Margins are accepted down to -1e-9 to absorb eigensolver tolerance.
constexpr double kMarginTol = 1e-9;

struct TerminalCheck {
    bool inside = false;
    double margin = 0.0;  ///< -alpha - lambda_max(M(s, q_safe | beta_max))
};

/// Closed-loop record with full per-step provenance: states at every
/// sampling instant, plus the control and transmission applied on each
/// interval. states.size() == controls.size() + 1.
struct ClosedLoopTrace {
    std::vector<double> times;
    std::vector<EpiState> states;
    std::vector<ControlVector> controls;
    std::vector<TransmissionRate> betas;

    size_t steps() const { return controls.size(); }
};

struct DecayCertificate {
    double alpha = 0.0;
    double v_floor = 0.0;  ///< min Perron left-vector entry across steps
    double c_t = 0.0;      ///< (1/v_floor)^(steps+1)
    int steps = 0;         ///< M_tot, index of the last sampling interval
    std::vector<double> per_step_margins;  ///< -alpha - lambda_max(M_m)
    bool valid = false;             ///< all margins >= -kMarginTol and v_floor > 0
    bool bound_satisfied = false;   ///< ||y(t_m)||_1 <= c_t e^{-a(t_m-t_0)} ||y(t_0)||_1
};

/// Two-phase stabilizing continuation from a feasible plan.
struct Continuation {
    std::vector<ControlVector> phase1;  ///< empty when the state starts in X_f
    ForecastProfile phase1_forecast;
    ControlVector q_safe;
    double c_h = 1.0;
    double c_inf = 1.0;
    double c = 1.0;
};

/// Membership in X_f = { x : lambda_max(M(s(x), q_safe | beta_max)) <= -alpha }.
TerminalCheck in_terminal_set(const EpiState& state, const NetworkModel& model,
                              const TerminalConfig& cfg);

/// Asserts positive invariance of X_f under q_safe for beta <= beta_max.
/// Requires state in X_f; returns membership of the successor.
bool check_terminal_invariance(const EpiState& state, const TransmissionRate& beta,
                               const NetworkModel& model, const TerminalConfig& cfg,
                               const StepConfig& step);

/// Recomputes every M_m, its abscissa and Perron vector from the trace,
/// and verifies the sampled exponential-decay bound.
DecayCertificate certify_decay(const ClosedLoopTrace& trace,
                               const NetworkModel& model,
                               const TerminalConfig& cfg);

/// Builds the two-phase continuation policy (stored plan, then q_safe) and
/// the global constant C = C_H * C_inf. Requires the plan's terminal state
/// in X_f. When the initial state is already in X_f, phase 1 is skipped and
/// C = C_inf.
Continuation build_continuation(const EpiState& state,
                                const std::vector<ControlVector>& planned,
                                const ForecastProfile& forecast,
                                const NetworkModel& model,
                                const TerminalConfig& cfg, const StepConfig& step);

}  // namespace epimpc
