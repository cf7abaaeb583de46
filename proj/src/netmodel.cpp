#include "epimpc/netmodel.hpp"

#include <cmath>
#include <sstream>
#include <vector>

namespace epimpc {

void EpiParams::validate() const {
    if (!(eps > 0) || !(r_a > 0) || !(r_s > 0) || !(r_q > 0))
        throw ContractError("EpiParams: all rates must be positive");
    if (!(beta_max_a > 0) || !(beta_max_s > 0))
        throw ContractError("EpiParams: transmission bounds must be positive");
}

ControlVector ControlVector::zero(Eigen::Index n) {
    return {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)};
}

ControlVector ControlVector::constant(Eigen::Index n, double value) {
    return {Eigen::VectorXd::Constant(n, value), Eigen::VectorXd::Constant(n, value)};
}

Eigen::VectorXd EpiState::infected() const {
    Eigen::VectorXd y(2 * n());
    y << xa, xs;
    return y;
}

double EpiState::infected_norm1() const {
    return xa.lpNorm<1>() + xs.lpNorm<1>();
}

bool strongly_connected(const Eigen::MatrixXd& a) {
    const Eigen::Index n = a.rows();
    if (n == 0 || a.cols() != n) return false;
    if (n == 1) return true;
    // Reachability from node 0 along a and along a^T covers strong connectivity.
    auto reach = [n](auto edge) {
        std::vector<char> seen(static_cast<size_t>(n), 0);
        std::vector<Eigen::Index> stack{0};
        seen[0] = 1;
        while (!stack.empty()) {
            Eigen::Index u = stack.back();
            stack.pop_back();
            for (Eigen::Index v = 0; v < n; ++v) {
                if (!seen[static_cast<size_t>(v)] && edge(u, v)) {
                    seen[static_cast<size_t>(v)] = 1;
                    stack.push_back(v);
                }
            }
        }
        for (char c : seen)
            if (!c) return false;
        return true;
    };
    bool fwd = reach([&](Eigen::Index u, Eigen::Index v) { return a(v, u) != 0.0; });
    bool bwd = reach([&](Eigen::Index u, Eigen::Index v) { return a(u, v) != 0.0; });
    return fwd && bwd;
}

ValidationReport validate_model(const NetworkModel& model) {
    ValidationReport rep;
    auto fail = [&rep](const std::string& msg) {
        rep.ok = false;
        rep.violations.push_back(msg);
    };
    if (model.n <= 0) fail("node count must be positive");
    if (model.populations.size() != model.n || model.weights.size() != model.n ||
        model.flow.rows() != model.n || model.flow.cols() != model.n) {
        fail("dimension mismatch between populations, weights, and flow");
        return rep;
    }
    if ((model.populations.array() <= 0).any()) fail("populations must be positive");
    if ((model.flow.array() < 0).any()) fail("flow matrix has negative entries");
    double total = model.populations.sum();
    Eigen::VectorXd expected = model.populations / total;
    if (std::abs(model.weights.sum() - 1.0) > 1e-12 ||
        (model.weights - expected).lpNorm<Eigen::Infinity>() > 1e-12)
        fail("weights do not equal N_i / sum N_j (weights)");
    if (!strongly_connected(model.flow))
        fail("flow matrix graph is not strongly connected (strong connectivity)");
    try {
        model.params.validate();
    } catch (const ContractError& e) {
        fail(e.what());
    }
    return rep;
}

NetworkModel make_network(const Eigen::VectorXd& populations,
                          const Eigen::MatrixXd& flow, const EpiParams& params) {
    NetworkModel model;
    model.n = populations.size();
    model.populations = populations;
    model.weights = populations / populations.sum();
    model.flow = flow;
    model.params = params;
    ValidationReport rep = validate_model(model);
    if (!rep.ok) {
        std::ostringstream os;
        os << "make_network:";
        for (const auto& v : rep.violations) os << " [" << v << "]";
        throw ContractError(os.str());
    }
    return model;
}

void check_dimensions(const EpiState& state, const NetworkModel& model) {
    if (state.s.size() != model.n || state.xa.size() != model.n ||
        state.xs.size() != model.n || state.k.size() != model.n)
        throw ContractError("EpiState dimension mismatch with model");
}

void check_dimensions(const ControlVector& control, const NetworkModel& model) {
    if (control.qa.size() != model.n || control.qs.size() != model.n)
        throw ContractError("ControlVector dimension mismatch with model");
}

void check_state_box(const EpiState& state, double tol) {
    auto in_box = [tol](const Eigen::VectorXd& v) {
        return (v.array() >= -tol).all() && (v.array() <= 1.0 + tol).all();
    };
    if (!in_box(state.s) || !in_box(state.xa) || !in_box(state.xs) || !in_box(state.k))
        throw ContractError("EpiState component outside [0,1]");
    Eigen::VectorXd mass = state.s + state.xa + state.xs + state.k;
    if ((mass.array() > 1.0 + tol).any())
        throw ContractError("EpiState per-node mass exceeds 1");
}

Eigen::VectorXd infection_force(const EpiState& state, const NetworkModel& model,
                                const TransmissionRate& beta) {
    check_dimensions(state, model);
    return model.flow * (beta.beta_a * state.xa + beta.beta_s * state.xs);
}

EpiState vector_field(const EpiState& state, const ControlVector& control,
                      const TransmissionRate& beta, const NetworkModel& model) {
    check_dimensions(state, model);
    check_dimensions(control, model);
    const EpiParams& p = model.params;
    Eigen::VectorXd force = infection_force(state, model, beta);
    Eigen::VectorXd incidence = state.s.cwiseProduct(force);

    EpiState d;
    d.s = -incidence;
    d.xa = incidence -
           (Eigen::VectorXd::Constant(model.n, p.eps + p.r_a) + control.qa)
               .cwiseProduct(state.xa);
    d.xs = p.eps * state.xa -
           (Eigen::VectorXd::Constant(model.n, p.r_s) + control.qs)
               .cwiseProduct(state.xs);
    d.k = control.qa.cwiseProduct(state.xa) + control.qs.cwiseProduct(state.xs) -
          p.r_q * state.k;
    return d;
}

}  // namespace epimpc
