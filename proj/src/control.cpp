#include "epimpc/control.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace epimpc {

namespace {

using Plan = std::vector<ControlVector>;

struct Eval {
    std::vector<EpiState> traj;
    std::vector<double> margins;
    double terminal_margin = 0.0;
    double cost = 0.0;
    bool ok = true;  ///< false when the rollout left the integrator's validity box
};

/// Shared workspace for repeated plan evaluations. Spectral solves are
/// warm-started from the previous solve at the same horizon index.
class PlanEvaluator {
public:
    PlanEvaluator(const EpiState& x0, const ForecastProfile& forecast,
                  const ControlVector* applied_prev, const NetworkModel& model,
                  const MpcConfig& cfg, const TerminalConfig& tcfg)
        : x0_(x0), forecast_(forecast), applied_prev_(applied_prev), model_(model),
          cfg_(cfg), tcfg_(tcfg),
          q_safe_(ControlVector::constant(model.n, tcfg.b_max)),
          warm_(forecast.size() + 1) {}

    size_t horizon() const { return forecast_.size(); }

    /// Evaluates the plan. When base is given, states and margins for steps
    /// before `from` are copied from it (only q[from..] may differ).
    Eval evaluate(const Plan& q, const Eval* base = nullptr, size_t from = 0) {
        const size_t h = horizon();
        Eval e;
        e.traj.reserve(h + 1);
        e.margins.reserve(h);
        size_t start = (base && from > 0) ? std::min(from, h) : 0;
        if (start > 0) {
            e.traj.assign(base->traj.begin(),
                          base->traj.begin() + static_cast<long>(start) + 1);
            e.margins.assign(base->margins.begin(),
                             base->margins.begin() + static_cast<long>(start));
        } else {
            e.traj.push_back(x0_);
        }
        for (size_t j = start; j < h; ++j) {
            InfectedMatrix m =
                build_infected_matrix(e.traj[j].s, q[j], forecast_[j], model_);
            double lambda = metzler_abscissa(m.m, &warm_[j]).lambda_max;
            e.margins.push_back(-cfg_.alpha - lambda);
            e.traj.push_back(psi_step(e.traj[j], q[j], forecast_[j], model_, cfg_.step));
        }
        InfectedMatrix mt =
            build_infected_matrix(e.traj[h].s, q_safe_, tcfg_.beta_max, model_);
        e.terminal_margin =
            -tcfg_.alpha - metzler_abscissa(mt.m, &warm_[h]).lambda_max;
        e.cost = total_cost(e.traj, q, model_, cfg_, applied_prev_);
        return e;
    }

    /// Evaluation for optimizer trial points: a rollout that leaves the
    /// integrator's validity box marks the trial as unusable instead of
    /// propagating the failure.
    Eval try_evaluate(const Plan& q, const Eval* base = nullptr, size_t from = 0) {
        try {
            return evaluate(q, base, from);
        } catch (const NumericalError&) {
            Eval bad;
            bad.ok = false;
            return bad;
        }
    }

    /// Sequential clip into the box and (one-sided) rate-limit chain.
    void project(Plan& q) const {
        const double inf = std::numeric_limits<double>::infinity();
        for (size_t j = 0; j < q.size(); ++j) {
            for (int block = 0; block < 2; ++block) {
                Eigen::VectorXd& cur = block == 0 ? q[j].qa : q[j].qs;
                const Eigen::VectorXd* prev = nullptr;
                if (j > 0)
                    prev = block == 0 ? &q[j - 1].qa : &q[j - 1].qs;
                else if (applied_prev_)
                    prev = block == 0 ? &applied_prev_->qa : &applied_prev_->qs;
                for (Eigen::Index i = 0; i < cur.size(); ++i) {
                    double ub = cfg_.b_max;
                    if (cfg_.rate_limit > 0 && prev)
                        ub = std::min(ub, (*prev)(i) + cfg_.rate_limit);
                    cur(i) = std::clamp(cur(i), 0.0, ub == inf ? cfg_.b_max : ub);
                }
            }
        }
    }

    bool bounds_ok(const Plan& q) const {
        constexpr double tol = 1e-12;
        for (size_t j = 0; j < q.size(); ++j) {
            for (int block = 0; block < 2; ++block) {
                const Eigen::VectorXd& cur = block == 0 ? q[j].qa : q[j].qs;
                const Eigen::VectorXd* prev = nullptr;
                if (j > 0)
                    prev = block == 0 ? &q[j - 1].qa : &q[j - 1].qs;
                else if (applied_prev_)
                    prev = block == 0 ? &applied_prev_->qa : &applied_prev_->qs;
                for (Eigen::Index i = 0; i < cur.size(); ++i) {
                    if (cur(i) < -tol || cur(i) > cfg_.b_max + tol) return false;
                    if (cfg_.rate_limit > 0 && prev &&
                        cur(i) > (*prev)(i) + cfg_.rate_limit + tol)
                        return false;
                }
            }
        }
        return true;
    }

    bool feasible(const Plan& q, const Eval& e) const {
        for (double m : e.margins)
            if (m < -kMarginTol) return false;
        return e.terminal_margin >= -kMarginTol && bounds_ok(q);
    }

private:
    EpiState x0_;
    ForecastProfile forecast_;
    const ControlVector* applied_prev_;
    const NetworkModel& model_;
    const MpcConfig& cfg_;
    const TerminalConfig& tcfg_;
    ControlVector q_safe_;
    std::vector<SpectralWarmStart> warm_;
};

double al_penalty(double g, double mu, double sigma) {
    double t = mu + sigma * g;
    if (t > 0) return (t * t - mu * mu) / (2 * sigma);
    return -mu * mu / (2 * sigma);
}

double al_value(const Eval& e, const Eigen::VectorXd& mu, double sigma) {
    if (!e.ok) return std::numeric_limits<double>::infinity();
    double v = e.cost;
    for (size_t j = 0; j < e.margins.size(); ++j)
        v += al_penalty(-e.margins[j], mu(static_cast<long>(j)), sigma);
    v += al_penalty(-e.terminal_margin, mu(mu.size() - 1), sigma);
    return v;
}

double& plan_entry(Plan& q, Eigen::Index n, size_t var) {
    size_t per_step = static_cast<size_t>(2 * n);
    size_t j = var / per_step;
    size_t r = var % per_step;
    if (r < static_cast<size_t>(n)) return q[j].qa(static_cast<long>(r));
    return q[j].qs(static_cast<long>(r - static_cast<size_t>(n)));
}

/// Central finite differences of the augmented Lagrangian. Perturbing a
/// variable at horizon index j only changes states and margins from j on.
Eigen::VectorXd fd_gradient(PlanEvaluator& ev, Plan& q, const Eval& base,
                            const Eigen::VectorXd& mu, double sigma, Eigen::Index n,
                            double fd_step) {
    const size_t per_step = static_cast<size_t>(2 * n);
    const size_t nvars = per_step * ev.horizon();
    Eigen::VectorXd grad(static_cast<long>(nvars));
    for (size_t var = 0; var < nvars; ++var) {
        size_t j = var / per_step;
        double& slot = plan_entry(q, n, var);
        const double saved = slot;
        const double h = fd_step * std::max(1.0, std::abs(saved));
        slot = saved + h;
        double fp = al_value(ev.try_evaluate(q, &base, j), mu, sigma);
        slot = saved - h;
        double fm = al_value(ev.try_evaluate(q, &base, j), mu, sigma);
        slot = saved;
        // A perturbation that leaves the integrator's validity box yields an
        // infinite value; fall back to a one-sided difference in that case.
        double g;
        if (std::isfinite(fp) && std::isfinite(fm)) {
            g = (fp - fm) / (2 * h);
        } else {
            const double f0 = al_value(base, mu, sigma);
            if (std::isfinite(fp)) g = (fp - f0) / h;
            else if (std::isfinite(fm)) g = (f0 - fm) / h;
            else g = 0.0;
        }
        grad(static_cast<long>(var)) = g;
    }
    return grad;
}

void apply_step(Plan& q, const Eigen::VectorXd& grad, double eta, Eigen::Index n) {
    for (size_t var = 0; var < static_cast<size_t>(grad.size()); ++var)
        plan_entry(q, n, var) -= eta * grad(static_cast<long>(var));
}

double plan_distance(const Plan& a, const Plan& b) {
    double d = 0;
    for (size_t j = 0; j < a.size(); ++j) {
        d = std::max(d, (a[j].qa - b[j].qa).lpNorm<Eigen::Infinity>());
        d = std::max(d, (a[j].qs - b[j].qs).lpNorm<Eigen::Infinity>());
    }
    return d;
}

/// Lifts per-step uniform isolation levels until every spectral margin is
/// nonnegative, propagating lifts backwards through the rate-limit chain.
/// A uniform lift of both q blocks shifts M by -delta I exactly.
bool repair_plan(PlanEvaluator& ev, Plan& q, Eval& e, const MpcConfig& cfg) {
    for (int sweep = 0; sweep < 12; ++sweep) {
        e = ev.evaluate(q);
        bool lifted = false;
        for (size_t j = 0; j < e.margins.size(); ++j) {
            if (e.margins[j] < -kMarginTol) {
                double lift = -e.margins[j] + 1e-9;
                q[j].qa.array() += lift;
                q[j].qs.array() += lift;
                lifted = true;
            }
        }
        if (!lifted && ev.feasible(q, e)) return true;
        if (cfg.rate_limit > 0) {
            for (size_t j = q.size() - 1; j > 0; --j) {
                q[j - 1].qa =
                    q[j - 1].qa.cwiseMax((q[j].qa.array() - cfg.rate_limit).matrix());
                q[j - 1].qs =
                    q[j - 1].qs.cwiseMax((q[j].qs.array() - cfg.rate_limit).matrix());
            }
        }
        ev.project(q);
    }
    e = ev.evaluate(q);
    return ev.feasible(q, e);
}

/// Projected-gradient descent on the augmented Lagrangian.
void inner_minimize(PlanEvaluator& ev, Plan& q, Eval& e, const Eigen::VectorXd& mu,
                    double sigma, const MpcConfig& cfg, Eigen::Index n) {
    const SolverConfig& sc = cfg.solver;
    double eta = 0.25;
    for (int it = 0; it < sc.max_inner; ++it) {
        Eigen::VectorXd grad = fd_gradient(ev, q, e, mu, sigma, n, sc.fd_step);
        double f0 = al_value(e, mu, sigma);
        bool moved = false;
        Plan q_new;
        Eval e_new;
        for (int bt = 0; bt < 30; ++bt) {
            q_new = q;
            apply_step(q_new, grad, eta, n);
            ev.project(q_new);
            e_new = ev.try_evaluate(q_new);
            if (al_value(e_new, mu, sigma) < f0 - 1e-14) {
                moved = true;
                break;
            }
            eta *= 0.5;
            if (eta < 1e-12) break;
        }
        if (!moved) break;
        double step = plan_distance(q, q_new);
        q = std::move(q_new);
        e = std::move(e_new);
        eta = std::min(eta * 2.0, 10.0);
        if (step < sc.tol) break;
    }
}

}  // namespace

Eigen::VectorXd MpcConfig::terminal_diag(Eigen::Index n) const {
    if (terminal_cost_diag.size() == 4 * n) return terminal_cost_diag;
    if (terminal_cost_diag.size() != 0)
        throw ContractError("MpcConfig: terminal_cost_diag must have length 4n");
    Eigen::VectorXd d = Eigen::VectorXd::Zero(4 * n);
    d.segment(n, 2 * n).setOnes();  // penalize only the infected compartments
    return d;
}

double stage_cost(const EpiState& state, const ControlVector& control,
                  const NetworkModel& model, const MpcConfig& cfg) {
    check_dimensions(state, model);
    check_dimensions(control, model);
    double burden = model.weights.dot(state.k);
    double effort = model.weights.dot(control.qa.cwiseAbs2() + control.qs.cwiseAbs2());
    return burden + 0.5 * cfg.rho * effort;
}

double total_cost(const std::vector<EpiState>& trajectory,
                  const std::vector<ControlVector>& controls,
                  const NetworkModel& model, const MpcConfig& cfg,
                  const ControlVector* applied_prev) {
    if (trajectory.size() != controls.size() + 1)
        throw ContractError("total_cost: need H+1 states and H controls");
    const double dt = cfg.step.dt_sample;
    double j = 0;
    for (size_t i = 0; i < controls.size(); ++i)
        j += stage_cost(trajectory[i], controls[i], model, cfg) * dt;

    const EpiState& xh = trajectory.back();
    const Eigen::Index n = model.n;
    Eigen::VectorXd x(4 * n);
    x << xh.s, xh.xa, xh.xs, xh.k;
    j += 0.5 * x.dot(cfg.terminal_diag(n).cwiseProduct(x));

    if (cfg.rho_smooth > 0 && !controls.empty()) {
        Eigen::VectorXd prev_a = applied_prev ? applied_prev->qa
                                              : Eigen::VectorXd::Zero(n);
        Eigen::VectorXd prev_s = applied_prev ? applied_prev->qs
                                              : Eigen::VectorXd::Zero(n);
        for (const ControlVector& c : controls) {
            Eigen::VectorXd da = (c.qa - prev_a).cwiseMax(0.0);
            Eigen::VectorXd ds = (c.qs - prev_s).cwiseMax(0.0);
            j += cfg.rho_smooth *
                 model.weights.dot(da.cwiseAbs2() + ds.cwiseAbs2());
            prev_a = c.qa;
            prev_s = c.qs;
        }
    }
    return j;
}

std::vector<ControlVector> warm_start(const MpcSolution* prev, const EpiState& state,
                                      const ForecastProfile& forecast,
                                      const NetworkModel& model, const MpcConfig& cfg,
                                      const TerminalConfig& tcfg) {
    cfg.validate();
    const size_t h = static_cast<size_t>(cfg.horizon);
    if (forecast.size() != h)
        throw ContractError("warm_start: forecast length must equal the horizon");

    if (prev) {
        if (prev->controls.size() != h)
            throw ContractError("warm_start: previous solution has a different horizon");
        std::vector<ControlVector> shifted(prev->controls.begin() + 1,
                                           prev->controls.end());
        shifted.push_back(ControlVector::constant(model.n, tcfg.b_max));
        return shifted;
    }

    SpectralWarmStart warm;
    auto margin_at = [&](double level) {
        InfectedMatrix m = build_infected_matrix(
            state.s, ControlVector::constant(model.n, level), forecast[0], model);
        return -cfg.alpha - metzler_abscissa(m.m, &warm).lambda_max;
    };
    double level = 0.0;
    if (margin_at(0.0) < 0) {
        if (margin_at(cfg.b_max) < 0) {
            if (!in_terminal_set(state, model, tcfg).inside)
                throw InfeasibleError(
                    "warm_start: no uniform rate in [0,B] satisfies the spectral "
                    "constraint at cold start and the state is outside X_f");
            level = cfg.b_max;
        } else {
            double lo = 0.0, hi = cfg.b_max;
            for (int it = 0; it < 60; ++it) {
                double mid = 0.5 * (lo + hi);
                (margin_at(mid) >= 0 ? hi : lo) = mid;
            }
            level = hi;
        }
    }
    return std::vector<ControlVector>(h, ControlVector::constant(model.n, level));
}

PlanCheck check_plan(const EpiState& state, const std::vector<ControlVector>& plan,
                     const ForecastProfile& forecast, const ControlVector* applied_prev,
                     const NetworkModel& model, const MpcConfig& cfg,
                     const TerminalConfig& tcfg) {
    PlanEvaluator ev(state, forecast, applied_prev, model, cfg, tcfg);
    Eval e = ev.evaluate(plan);
    PlanCheck check;
    check.margins = e.margins;
    check.terminal_margin = e.terminal_margin;
    check.spectral_ok = std::all_of(e.margins.begin(), e.margins.end(),
                                    [](double m) { return m >= -kMarginTol; });
    check.terminal_ok = e.terminal_margin >= -kMarginTol;
    check.bounds_ok = ev.bounds_ok(plan);
    check.feasible = check.spectral_ok && check.terminal_ok && check.bounds_ok;
    return check;
}

MpcSolution solve_mpc(const EpiState& state, const ForecastProfile& forecast,
                      const MpcSolution* prev, const ControlVector* applied_prev,
                      const NetworkModel& model, const MpcConfig& cfg,
                      const TerminalConfig& tcfg) {
    cfg.validate();
    tcfg.validate();
    check_state_box(state);
    const size_t h = static_cast<size_t>(cfg.horizon);
    if (forecast.size() != h)
        throw ContractError("solve_mpc: forecast length must equal the horizon");

    PlanEvaluator ev(state, forecast, applied_prev, model, cfg, tcfg);
    Plan start = warm_start(prev, state, forecast, model, cfg, tcfg);
    ev.project(start);
    Eval e_start;
    if (!repair_plan(ev, start, e_start, cfg))
        throw InfeasibleError(
            "solve_mpc: warm start infeasible and could not be repaired; apply the "
            "maximum admissible update (myopic fallback rule)");

    Plan q = start;
    Eval e = e_start;
    const size_t ncons = h + 1;
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(static_cast<long>(ncons));
    double sigma = cfg.solver.penalty_init;
    for (int outer = 0; outer < cfg.solver.max_outer; ++outer) {
        inner_minimize(ev, q, e, mu, sigma, cfg, model.n);
        double viol = 0;
        for (size_t j = 0; j < h; ++j) {
            double g = -e.margins[j];
            mu(static_cast<long>(j)) = std::max(0.0, mu(static_cast<long>(j)) + sigma * g);
            viol = std::max(viol, g);
        }
        double gt = -e.terminal_margin;
        mu(static_cast<long>(h)) = std::max(0.0, mu(static_cast<long>(h)) + sigma * gt);
        viol = std::max(viol, gt);
        if (viol <= 1e-10) break;
        sigma *= cfg.solver.penalty_growth;
    }

    MpcSolution sol;
    sol.forecast = forecast;
    if (ev.feasible(q, e) && e.cost <= e_start.cost + 1e-12) {
        sol.provenance = Provenance::optimized;
    } else {
        q = start;
        e = e_start;
        sol.provenance = Provenance::warm_start_fallback;
    }
    sol.controls = q;
    sol.predicted = e.traj;
    sol.cost = e.cost;
    sol.margins = e.margins;
    sol.terminal_margin = e.terminal_margin;
    sol.feasible = ev.feasible(q, e);
    return sol;
}

MyopicResult solve_myopic(const EpiState& state, const TransmissionRate& beta_now,
                          const ControlVector* applied_prev, const NetworkModel& model,
                          const MpcConfig& cfg, const TerminalConfig& tcfg) {
    cfg.validate();
    tcfg.validate();
    check_state_box(state);
    const Eigen::Index n = model.n;

    Eigen::VectorXd ub_a = Eigen::VectorXd::Constant(n, cfg.b_max);
    Eigen::VectorXd ub_s = ub_a;
    if (cfg.rate_limit > 0 && applied_prev) {
        ub_a = (applied_prev->qa.array() + cfg.rate_limit).min(cfg.b_max).matrix();
        ub_s = (applied_prev->qs.array() + cfg.rate_limit).min(cfg.b_max).matrix();
    }

    SpectralWarmStart warm;
    auto margin_of = [&](const ControlVector& q) {
        InfectedMatrix m = build_infected_matrix(state.s, q, beta_now, model);
        return -cfg.alpha - metzler_abscissa(m.m, &warm).lambda_max;
    };

    ControlVector q_ub{ub_a, ub_s};
    double m_ub = margin_of(q_ub);
    if (m_ub < -kMarginTol) return {q_ub, m_ub, true};  // maximum admissible update

    ControlVector q = ControlVector::zero(n);
    double m0 = margin_of(q);
    if (m0 >= 0) return {q, m0, false};

    // Feasible start: scale the admissible maximum (lambda_max is
    // nonincreasing in q, so the scaled family brackets the boundary).
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 60; ++it) {
        double mid = 0.5 * (lo + hi);
        ControlVector qm{mid * ub_a, mid * ub_s};
        (margin_of(qm) >= 0 ? hi : lo) = mid;
    }
    q = {hi * ub_a, hi * ub_s};

    // Polish: projected gradient on the augmented Lagrangian of the single
    // spectral constraint, effort cost only (k is fixed at measurement).
    auto cost_of = [&](const ControlVector& c) {
        return stage_cost(state, c, model, cfg);
    };
    auto project = [&](ControlVector& c) {
        c.qa = c.qa.cwiseMax(0.0).cwiseMin(ub_a);
        c.qs = c.qs.cwiseMax(0.0).cwiseMin(ub_s);
    };
    ControlVector best = q;
    double best_cost = cost_of(best);
    double mu = 0.0, sigma = cfg.solver.penalty_init;
    auto al = [&](const ControlVector& c) {
        return cost_of(c) + al_penalty(-margin_of(c), mu, sigma);
    };
    for (int outer = 0; outer < cfg.solver.max_outer; ++outer) {
        double eta = 0.25;
        for (int it = 0; it < 2 * cfg.solver.max_inner; ++it) {
            Eigen::VectorXd grad(2 * n);
            for (Eigen::Index v = 0; v < 2 * n; ++v) {
                double& slot = v < n ? q.qa(v) : q.qs(v - n);
                double saved = slot;
                double step_h = cfg.solver.fd_step * std::max(1.0, std::abs(saved));
                slot = saved + step_h;
                double fp = al(q);
                slot = saved - step_h;
                double fm = al(q);
                slot = saved;
                grad(v) = (fp - fm) / (2 * step_h);
            }
            double f0 = al(q);
            bool moved = false;
            ControlVector q_new;
            for (int bt = 0; bt < 30; ++bt) {
                q_new = q;
                q_new.qa -= eta * grad.head(n);
                q_new.qs -= eta * grad.tail(n);
                project(q_new);
                if (al(q_new) < f0 - 1e-14) {
                    moved = true;
                    break;
                }
                eta *= 0.5;
                if (eta < 1e-12) break;
            }
            if (!moved) break;
            double step = std::max((q_new.qa - q.qa).lpNorm<Eigen::Infinity>(),
                                   (q_new.qs - q.qs).lpNorm<Eigen::Infinity>());
            q = q_new;
            eta = std::min(eta * 2, 10.0);
            if (step < cfg.solver.tol) break;
        }
        double g = -margin_of(q);
        mu = std::max(0.0, mu + sigma * g);
        if (g <= 1e-10) {
            if (cost_of(q) < best_cost) {
                best = q;
                best_cost = cost_of(q);
            }
        }
        sigma *= cfg.solver.penalty_growth;
    }
    double m_best = margin_of(best);
    if (m_best < -kMarginTol) {
        // keep the bisection point, which is feasible by construction
        best = {hi * ub_a, hi * ub_s};
        m_best = margin_of(best);
    }
    return {best, m_best, false};
}

}  // namespace epimpc
