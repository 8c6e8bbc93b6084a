#pragma once

#include <cmath>
#include <cstdio>
#include <cstddef>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "rsmp/bundle.hpp"
#include "rsmp/errors.hpp"
#include "rsmp/model.hpp"

namespace rsmp {

/// Values X(t_k) on the bundle's grid, with what the scheme used on each step.
struct Trajectory {
    std::shared_ptr<const ScenarioSpec> scenario;
    std::vector<double> values;         ///< X(t_0..t_M)
    std::vector<Regime> regimes;        ///< α(t_k), k = 0..M
    std::vector<Regime> step_regimes;   ///< α(t_k−) used by the coefficients on step k
    std::vector<double> controls;       ///< u(t_k) on step k (after projection onto U)
    std::size_t clamp_events = 0;

    const TimeGrid& grid() const { return scenario->grid; }
    double terminal() const { return values.back(); }
    Regime terminal_regime() const { return regimes.back(); }
};

inline constexpr double divergence_bound = 1e12;

namespace detail {

/// Walks the Poisson and regime events of one grid step in time order. Between events
/// it reports segments (actual regime, length) for the compensator drifts.
template <class OnSegment, class OnJump, class OnSwitch>
void walk_step(const PathBundle& bundle, std::size_t k, std::size_t& next_jump, std::size_t& next_switch,
               Regime& actual, OnSegment&& on_segment, OnJump&& on_jump, OnSwitch&& on_switch) {
    const auto& grid = bundle.grid();
    const auto& jumps = bundle.jump_events();
    const auto& switches = bundle.regime().events();
    const double end = grid[k + 1];
    double clock = grid[k];
    for (;;) {
        const bool has_jump = next_jump < jumps.size() && jumps[next_jump].time <= end;
        const bool has_switch = next_switch < switches.size() && switches[next_switch].time <= end;
        if (!has_jump && !has_switch) break;
        // A Poisson event at a switching instant belongs to the regime before the switch.
        if (has_jump && (!has_switch || jumps[next_jump].time <= switches[next_switch].time)) {
            const auto& e = jumps[next_jump++];
            on_segment(actual, e.time - clock);
            clock = e.time;
            on_jump(e);
        } else {
            const auto& e = switches[next_switch++];
            on_segment(actual, e.time - clock);
            clock = e.time;
            on_switch(e);
            actual = e.to;
        }
    }
    on_segment(actual, end - clock);
}

inline void guard(double value, std::size_t step) {
    if (!std::isfinite(value) || std::abs(value) > divergence_bound) throw SimulationDiverged(step, value);
}

}  // namespace detail

/// Euler–Maruyama with left-endpoint coefficients (x, α(t_k−), u frozen on the step).
/// Poisson and regime jumps are applied at their exact times inside the step; the
/// compensator drifts use the regime actually in force on each sub-interval.
inline Trajectory simulate_forward(const ForwardModel& model, const ControlPolicy& policy, const PathBundle& bundle,
                                   double x0) {
    const auto& scenario = bundle.scenario();
    const auto& grid = scenario.grid;
    const auto& gen = scenario.generator;
    const auto& levy = scenario.levy;
    const std::size_t m = grid.steps();
    const std::size_t d = gen.dim();

    Trajectory traj;
    traj.scenario = bundle.scenario_ptr();
    traj.values.resize(m + 1);
    traj.regimes.resize(m + 1);
    traj.step_regimes.resize(m);
    traj.controls.resize(m);
    traj.values[0] = x0;

    Regime actual = bundle.regime().initial_state();
    traj.regimes[0] = actual;
    std::size_t next_jump = 0, next_switch = 0;
    double x = x0;
    for (std::size_t k = 0; k < m; ++k) {
        const double t = grid[k];
        const Regime i = actual;
        const auto [u, clamped] = policy(t, x, i);
        if (clamped) ++traj.clamp_events;
        traj.step_regimes[k] = i;
        traj.controls[k] = u;

        double next = x + eval_or_zero(model.drift, t, x, i, u) * grid.dt(k) +
                      eval_or_zero(model.vol, t, x, i, u) * bundle.brownian_increments()[k];
        detail::walk_step(
            bundle, k, next_jump, next_switch, actual,
            [&](Regime a, double len) {
                if (len <= 0.0) return;
                double comp = 0.0;
                if (model.jump) comp += levy.integrate(a, [&](double z) { return model.jump(t, x, i, u, z); });
                if (model.chain) {
                    for (std::size_t j = 0; j < d; ++j) {
                        const Regime tgt = Regime::from_slot(j);
                        if (tgt == a) continue;
                        comp += model.chain(t, x, i, u, tgt) * gen.rate(a, tgt);
                    }
                }
                next -= comp * len;
            },
            [&](const JumpEvent& e) { next += eval_or_zero(model.jump, t, x, i, u, e.mark); },
            [&](const RegimeEvent& e) { next += eval_or_zero(model.chain, t, x, i, u, e.to); });
        detail::guard(next, k);
        x = next;
        traj.values[k + 1] = x;
        traj.regimes[k + 1] = actual;
    }
    return traj;
}

/// Derivative process x₁ = d/dℓ X^{u+ℓβ} at ℓ = 0: the same Euler scheme applied to the
/// linearized SDE, on the same noise. The control is treated as a given process, so a
/// feedback of u on X is not differentiated.
inline Trajectory simulate_variational(const ForwardModel& model, const ControlPolicy& policy,
                                       const ControlPolicy& direction, const PathBundle& bundle,
                                       const Trajectory& base) {
    if (direction.level() > policy.level())
        throw ValidationError("perturbation direction uses more information than the policy");
    const auto& scenario = bundle.scenario();
    const auto& grid = scenario.grid;
    const auto& gen = scenario.generator;
    const auto& levy = scenario.levy;
    const std::size_t m = grid.steps();
    const std::size_t d = gen.dim();
    if (base.values.size() != m + 1) throw ValidationError("base trajectory does not match the bundle grid");

    Trajectory out;
    out.scenario = bundle.scenario_ptr();
    out.values.assign(m + 1, 0.0);
    out.regimes = base.regimes;
    out.step_regimes = base.step_regimes;
    out.controls.resize(m);

    Regime actual = bundle.regime().initial_state();
    std::size_t next_jump = 0, next_switch = 0;
    double x1 = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        const double t = grid[k];
        const double x = base.values[k];
        const Regime i = base.step_regimes[k];
        const double u = base.controls[k];
        const double beta = direction.raw(t, x, i);
        out.controls[k] = beta;

        auto lin = [&](const auto& fx, const auto& fu, auto... extra) {
            return eval_or_zero(fx, t, x, i, u, extra...) * x1 + eval_or_zero(fu, t, x, i, u, extra...) * beta;
        };
        double next = x1 + lin(model.drift_x, model.drift_u) * grid.dt(k) +
                      lin(model.vol_x, model.vol_u) * bundle.brownian_increments()[k];
        const bool has_jump = model.jump_x || model.jump_u;
        const bool has_chain = model.chain_x || model.chain_u;
        detail::walk_step(
            bundle, k, next_jump, next_switch, actual,
            [&](Regime a, double len) {
                if (len <= 0.0) return;
                double comp = 0.0;
                if (has_jump) comp += levy.integrate(a, [&](double z) { return lin(model.jump_x, model.jump_u, z); });
                if (has_chain) {
                    for (std::size_t j = 0; j < d; ++j) {
                        const Regime tgt = Regime::from_slot(j);
                        if (tgt == a) continue;
                        comp += lin(model.chain_x, model.chain_u, tgt) * gen.rate(a, tgt);
                    }
                }
                next -= comp * len;
            },
            [&](const JumpEvent& e) {
                if (has_jump) next += lin(model.jump_x, model.jump_u, e.mark);
            },
            [&](const RegimeEvent& e) {
                if (has_chain) next += lin(model.chain_x, model.chain_u, e.to);
            });
        detail::guard(next, k);
        x1 = next;
        out.values[k + 1] = x1;
    }
    return out;
}

/// Formats a double with 17 significant digits; −0 prints as 0.
inline std::string format_number(double v) {
    char buf[40];
    if (v == 0.0) v = 0.0;
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// CSV with header `t,X,regime`, one row per grid point.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
    os << "t,X,regime\n";
    const auto& grid = traj.grid();
    for (std::size_t k = 0; k < traj.values.size(); ++k)
        os << format_number(grid[k]) << ',' << format_number(traj.values[k]) << ',' << traj.regimes[k].id << '\n';
}

}  // namespace rsmp
