#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "epimpc/control.hpp"

namespace epimpc {

enum class ForecastMode { perfect, persistence };
enum class PolicyMode { pure, smoothing, rate_limited };
enum class ControllerKind { mpc, myopic };

/// Initial-condition rule: a small asymptomatic seed placed in the
/// largest-population nodes, s = 1 - x^a there.
struct SeedRule {
    double fraction = 0.001;
    int nodes = 2;
};

struct Scenario {
    std::string name;
    int duration_weeks = 20;
    double dt_days = 7.0;
    int substeps = 7;
    std::vector<TransmissionRate> beta_schedule;  ///< one entry per sampling interval
    TransmissionRate beta_max;                    ///< shock folded in at load
    ForecastMode forecast_mode = ForecastMode::perfect;
    PolicyMode policy_mode = PolicyMode::pure;
    ControllerKind controller = ControllerKind::mpc;
    MpcConfig mpc;
    std::optional<EpiState> initial_state;
    SeedRule seed;

    void validate() const;
};

struct RunMetrics {
    double peak_prevalence_persons = 0.0;  ///< max_t sum_i N_i (xa_i + xs_i)
    double cumulative_burden = 0.0;        ///< trapezoidal integral of sum_i w_i k_i
    bool certificate_valid = false;
    int violation_count = 0;
};

struct RunRecord {
    std::string name;
    ClosedLoopTrace trace;
    std::vector<double> margins;              ///< realized per applied step
    std::vector<bool> candidate_feasible;     ///< shifted-candidate checks (MPC, m >= 1)
    std::vector<Provenance> provenance;       ///< MPC only
    DecayCertificate certificate;
    RunMetrics metrics;
};

struct ComparisonRow {
    std::string name;
    double peak_prevalence = 0.0;
    double cumulative_burden = 0.0;
    bool certificate_valid = false;
    int violation_count = 0;
    double relative_burden = 1.0;  ///< vs the first record
};

/// Deterministic synthetic network: dominant-diagonal contact matrix with a
/// commuter ring plus sparse extra links, log-uniform populations.
NetworkModel synth_network(int n, std::uint64_t seed, const EpiParams& params);

/// Finds beta with beta_a = ratio * beta_s such that
/// lambda_max(M(1, 0 | beta)) equals growth_target (bisection on beta_s).
TransmissionRate calibrate(const NetworkModel& model, double growth_target,
                           double ratio);

/// Measured-state receding-horizon loop; applies only the first action.
RunRecord run_closed_loop(const Scenario& scenario, const NetworkModel& model);

std::vector<ComparisonRow> compare(const std::vector<RunRecord>& records);

/// Initial state from an explicit state or the seed rule.
EpiState initial_state_for(const Scenario& scenario, const NetworkModel& model);

/// Terminal configuration implied by a scenario.
TerminalConfig terminal_config(const Scenario& scenario);

}  // namespace epimpc
