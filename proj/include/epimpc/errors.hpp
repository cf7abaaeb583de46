#pragma once

#include <stdexcept>
#include <string>

namespace epimpc {

// Broken preconditions and dimension mismatches.
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

// Eigensolver non-convergence, integrator step-size failures. Never silent.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Cold-start or rate-limit infeasibility of a control problem.
struct InfeasibleError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed config files or CSV inputs.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace epimpc
