#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "epimpc/errors.hpp"

namespace epimpc {

/// Epidemiological rate constants. All rates are per day.
struct EpiParams {
    double eps = 0.32;       ///< symptom-onset rate
    double r_a = 0.2;        ///< asymptomatic recovery rate
    double r_s = 0.2;        ///< symptomatic recovery rate
    double r_q = 0.2;        ///< isolated recovery rate
    double beta_max_a = 1.0; ///< global upper bound on asymptomatic transmission
    double beta_max_s = 1.0; ///< global upper bound on symptomatic transmission

    void validate() const;
};

/// Transmission rates on one interval, 1/day.
struct TransmissionRate {
    double beta_a = 0.0;
    double beta_s = 0.0;
};

/// Per-node isolation rates (q^a, q^s), 1/day.
struct ControlVector {
    Eigen::VectorXd qa;
    Eigen::VectorXd qs;

    Eigen::Index n() const { return qa.size(); }
    static ControlVector zero(Eigen::Index n);
    static ControlVector constant(Eigen::Index n, double value);
};

/// Full network state at one instant: per-node proportions.
struct EpiState {
    Eigen::VectorXd s;   ///< susceptible
    Eigen::VectorXd xa;  ///< asymptomatic infected
    Eigen::VectorXd xs;  ///< symptomatic infected
    Eigen::VectorXd k;   ///< isolated

    Eigen::Index n() const { return s.size(); }

    /// Infected subsystem state y = (x^a, x^s), stacked.
    Eigen::VectorXd infected() const;
    /// ||y||_1 of the infected subsystem.
    double infected_norm1() const;
};

/// Node populations, cost weights, contact-flow matrix, rate constants.
struct NetworkModel {
    Eigen::Index n = 0;
    Eigen::VectorXd populations;  ///< N_i, persons
    Eigen::VectorXd weights;      ///< w_i = N_i / sum_j N_j
    Eigen::MatrixXd flow;         ///< A, effective contact rates, 1/day
    EpiParams params;
};

using ForecastProfile = std::vector<TransmissionRate>;

struct ValidationReport {
    bool ok = true;
    std::vector<std::string> violations;
};

/// Builds a model from populations + flow, deriving weights. Throws
/// ContractError listing every violated invariant.
NetworkModel make_network(const Eigen::VectorXd& populations,
                          const Eigen::MatrixXd& flow, const EpiParams& params);

/// Report-style invariant check: strong connectivity, nonnegativity,
/// weight normalization, positive rates.
ValidationReport validate_model(const NetworkModel& model);

/// True iff the directed graph of nonzero entries of a is strongly connected.
bool strongly_connected(const Eigen::MatrixXd& a);

/// Force of infection per node: sum_j a_ij (b^a xa_j + b^s xs_j).
Eigen::VectorXd infection_force(const EpiState& state, const NetworkModel& model,
                                const TransmissionRate& beta);

/// Continuous-time SIQR vector field; returns the state derivative.
EpiState vector_field(const EpiState& state, const ControlVector& control,
                      const TransmissionRate& beta, const NetworkModel& model);

/// Throws ContractError on dimension mismatch against model.n.
void check_dimensions(const EpiState& state, const NetworkModel& model);
void check_dimensions(const ControlVector& control, const NetworkModel& model);

/// Throws ContractError if the state leaves [0,1] or per-node mass exceeds 1.
void check_state_box(const EpiState& state, double tol = 1e-9);

}  // namespace epimpc
