#include "epimpc/integrator.hpp"

namespace epimpc {

namespace {

EpiState axpy(const EpiState& x, double h, const EpiState& d) {
    return {x.s + h * d.s, x.xa + h * d.xa, x.xs + h * d.xs, x.k + h * d.k};
}

void check_substep(const EpiState& before, const EpiState& after) {
    if ((after.s.array() > before.s.array()).any())
        throw NumericalError(
            "psi_step: susceptible monotonicity violated; increase substeps");
    auto bad = [](const Eigen::VectorXd& v) {
        return (v.array() < 0).any() || (v.array() > 1.0).any();
    };
    if (bad(after.s) || bad(after.xa) || bad(after.xs) || bad(after.k))
        throw NumericalError(
            "psi_step: compartment left [0,1]; increase substeps");
}

}  // namespace

EpiState psi_step(const EpiState& state, const ControlVector& control,
                  const TransmissionRate& beta, const NetworkModel& model,
                  const StepConfig& cfg) {
    cfg.validate();
    check_dimensions(state, model);
    check_dimensions(control, model);
    const double h = cfg.dt_sample / cfg.substeps;

    EpiState x = state;
    for (int step = 0; step < cfg.substeps; ++step) {
        EpiState k1 = vector_field(x, control, beta, model);
        EpiState k2 = vector_field(axpy(x, h / 2, k1), control, beta, model);
        EpiState k3 = vector_field(axpy(x, h / 2, k2), control, beta, model);
        EpiState k4 = vector_field(axpy(x, h, k3), control, beta, model);
        EpiState next;
        next.s = x.s + (h / 6) * (k1.s + 2 * k2.s + 2 * k3.s + k4.s);
        next.xa = x.xa + (h / 6) * (k1.xa + 2 * k2.xa + 2 * k3.xa + k4.xa);
        next.xs = x.xs + (h / 6) * (k1.xs + 2 * k2.xs + 2 * k3.xs + k4.xs);
        next.k = x.k + (h / 6) * (k1.k + 2 * k2.k + 2 * k3.k + k4.k);
        check_substep(x, next);
        x = std::move(next);
    }
    return x;
}

std::vector<EpiState> rollout(const EpiState& state,
                              const std::vector<ControlVector>& controls,
                              const ForecastProfile& forecast,
                              const NetworkModel& model, const StepConfig& cfg) {
    if (controls.size() != forecast.size())
        throw ContractError("rollout: controls and forecast lengths differ");
    std::vector<EpiState> traj;
    traj.reserve(controls.size() + 1);
    traj.push_back(state);
    for (size_t j = 0; j < controls.size(); ++j)
        traj.push_back(psi_step(traj.back(), controls[j], forecast[j], model, cfg));
    return traj;
}

}  // namespace epimpc
