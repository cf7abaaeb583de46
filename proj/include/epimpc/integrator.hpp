#pragma once

#include <vector>

#include "epimpc/netmodel.hpp"

namespace epimpc {

/// Fixed-step RK4 configuration for one sampling interval.
struct StepConfig {
    double dt_sample = 7.0;  ///< sampling interval, days
    int substeps = 7;        ///< RK4 substeps per sampling interval

    void validate() const {
        if (!(dt_sample > 0)) throw ContractError("StepConfig: dt_sample must be > 0");
        if (substeps < 1) throw ContractError("StepConfig: substeps must be >= 1");
    }
};

/// One-sample-interval discrete map under piecewise-constant inputs.
/// Checks susceptible monotonicity and compartment bounds after every
/// substep; a violation raises NumericalError asking for more substeps.
EpiState psi_step(const EpiState& state, const ControlVector& control,
                  const TransmissionRate& beta, const NetworkModel& model,
                  const StepConfig& cfg);

/// Applies psi_step for j = 0..H-1. Returns H+1 states, trajectory[0] = state.
std::vector<EpiState> rollout(const EpiState& state,
                              const std::vector<ControlVector>& controls,
                              const ForecastProfile& forecast,
                              const NetworkModel& model, const StepConfig& cfg);

}  // namespace epimpc
