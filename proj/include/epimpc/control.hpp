#pragma once

#include <optional>
#include <vector>

#include "epimpc/certify.hpp"

namespace epimpc {

/// Augmented-Lagrangian / projected-gradient solver knobs.
struct SolverConfig {
    int max_outer = 6;          ///< augmented-Lagrangian outer iterations
    int max_inner = 25;         ///< projected-gradient inner iterations
    double fd_step = 1e-6;      ///< relative finite-difference step
    double penalty_init = 10.0;
    double penalty_growth = 5.0;
    double tol = 1e-6;          ///< stationarity tolerance

    void validate() const {
        if (max_outer < 1 || max_inner < 1 || !(fd_step > 0) || !(penalty_init > 0) ||
            !(penalty_growth > 1) || !(tol > 0))
            throw ContractError("SolverConfig: invalid solver parameters");
    }
};

struct MpcConfig {
    int horizon = 7;            ///< H, prediction steps
    double alpha = 0.023;       ///< decay target, 1/day
    double rho = 0.1;           ///< control-effort weight
    double b_max = 2.0;         ///< B
    Eigen::VectorXd terminal_cost_diag;  ///< diagonal of P (4n); empty = (0,I,I,0)
    double rho_smooth = 0.0;    ///< smoothing weight, 0 disables
    double rate_limit = 0.0;    ///< max per-interval increase in any q, 0 disables
    SolverConfig solver;
    StepConfig step;

    void validate() const {
        if (horizon < 1) throw ContractError("MpcConfig: horizon must be >= 1");
        if (rho < 0 || rho_smooth < 0 || rate_limit < 0)
            throw ContractError("MpcConfig: weights must be nonnegative");
        if (terminal_cost_diag.size() > 0 && (terminal_cost_diag.array() < 0).any())
            throw ContractError("MpcConfig: terminal_cost_diag must be >= 0");
        solver.validate();
        step.validate();
    }

    /// Diagonal of P for a given node count; defaults to penalizing only the
    /// infected compartments.
    Eigen::VectorXd terminal_diag(Eigen::Index n) const;
};

enum class Provenance { optimized, warm_start_fallback };

struct MpcSolution {
    std::vector<ControlVector> controls;   ///< length H
    std::vector<EpiState> predicted;       ///< length H+1
    ForecastProfile forecast;              ///< forecast used, length H
    double cost = 0.0;
    std::vector<double> margins;           ///< per-step -alpha - lambda_max
    double terminal_margin = 0.0;
    bool feasible = false;
    Provenance provenance = Provenance::optimized;
};

struct MyopicResult {
    ControlVector control;
    double margin = 0.0;    ///< -alpha - lambda_max at the returned control
    bool violated = false;  ///< spectral constraint unreachable under rate limit
};

/// Stage cost: sum_i w_i k_i + (rho/2) sum_i w_i (qa_i^2 + qs_i^2).
double stage_cost(const EpiState& state, const ControlVector& control,
                  const NetworkModel& model, const MpcConfig& cfg);

/// Discretized horizon cost: sum_j l(x_j, q_j) dt + 0.5 x_H' P x_H, plus the
/// one-sided smoothing penalty when rho_smooth > 0 (applied_prev is the
/// q_{-1} baseline; zero baseline when absent).
double total_cost(const std::vector<EpiState>& trajectory,
                  const std::vector<ControlVector>& controls,
                  const NetworkModel& model, const MpcConfig& cfg,
                  const ControlVector* applied_prev = nullptr);

/// Shifted previous solution appended with q_safe, or the smallest uniform
/// constant sequence satisfying the first-step spectral constraint (found
/// by bisection on [0, B]). Throws InfeasibleError at cold start when no
/// uniform rate works and the state is outside X_f.
std::vector<ControlVector> warm_start(const MpcSolution* prev, const EpiState& state,
                                      const ForecastProfile& forecast,
                                      const NetworkModel& model, const MpcConfig& cfg,
                                      const TerminalConfig& tcfg);

/// Solves the finite-horizon MPC problem. Falls back to the feasible warm
/// start whenever the optimizer fails to improve on it or leaves the
/// feasible set.
MpcSolution solve_mpc(const EpiState& state, const ForecastProfile& forecast,
                      const MpcSolution* prev, const ControlVector* applied_prev,
                      const NetworkModel& model, const MpcConfig& cfg,
                      const TerminalConfig& tcfg);

/// Minimizes the instantaneous cost under the spectral constraint at the
/// measured state. When the rate-limited feasible set is empty, returns the
/// maximum admissible update with violated = true.
MyopicResult solve_myopic(const EpiState& state, const TransmissionRate& beta_now,
                          const ControlVector* applied_prev, const NetworkModel& model,
                          const MpcConfig& cfg, const TerminalConfig& tcfg);

/// Feasibility of a full plan against spectral, terminal, box, and rate
/// constraints. Used for the Eq.-(9)-style shifted-candidate verification.
struct PlanCheck {
    std::vector<double> margins;
    double terminal_margin = 0.0;
    bool spectral_ok = false;
    bool terminal_ok = false;
    bool bounds_ok = false;
    bool feasible = false;  ///< spectral && terminal && bounds
};

PlanCheck check_plan(const EpiState& state, const std::vector<ControlVector>& plan,
                     const ForecastProfile& forecast, const ControlVector* applied_prev,
                     const NetworkModel& model, const MpcConfig& cfg,
                     const TerminalConfig& tcfg);

}  // namespace epimpc
