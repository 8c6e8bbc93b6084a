#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rsmp/bsde.hpp"
#include "rsmp/bundle.hpp"
#include "rsmp/errors.hpp"
#include "rsmp/estimate.hpp"
#include "rsmp/model.hpp"
#include "rsmp/parallel.hpp"
#include "rsmp/regression.hpp"
#include "rsmp/simulate.hpp"

namespace rsmp {

/// A controlled system together with the functional being maximized.
struct Problem {
    ForwardModel forward;
    PerformanceModel performance;
    std::optional<BsdeModel> bsde;
    double x0 = 0.0;
};

struct McOptions {
    unsigned threads = default_threads();
    BsdeOptions bsde{};
};

/// ∫ f dt (left Riemann sum on the grid) + φ(X(T), α(T)) along one trajectory.
/// ψ(Y(0)) is added by the caller because Y(0) is a cross-path quantity.
inline double path_performance(const PerformanceModel& perf, const Trajectory& traj,
                               const BsdeSolution* backward = nullptr) {
    if (perf.running_uses_zkv) throw UnsupportedModel("performance functionals reading Z, K or V are not supported");
    if (perf.running_uses_backward && !backward)
        throw ConfigurationError("performance functional reads Y(t) but no BSDE solution was supplied");
    const auto& grid = traj.grid();
    double total = 0.0;
    if (perf.running) {
        BackwardValues bv;
        for (std::size_t k = 0; k < grid.steps(); ++k) {
            if (perf.running_uses_backward) bv.y = backward->value(k, traj.values[k], traj.regimes[k]);
            total += perf.running(grid[k], traj.values[k], traj.step_regimes[k], bv, traj.controls[k]) * grid.dt(k);
        }
    }
    return total + eval_or_zero(perf.terminal, traj.terminal(), traj.terminal_regime());
}

namespace detail {

inline std::vector<Trajectory> simulate_all(const ForwardModel& model, const ControlPolicy& policy,
                                            std::span<const PathBundle> bundles, double x0, unsigned threads) {
    std::vector<std::unique_ptr<Trajectory>> slots(bundles.size());
    parallel_for(bundles.size(), threads, [&](std::size_t r) {
        slots[r] = std::make_unique<Trajectory>(simulate_forward(model, policy, bundles[r], x0));
    });
    std::vector<Trajectory> out;
    out.reserve(slots.size());
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

/// Per-path performance values of one control plus the ψ(Y(0)) term and its
/// standard error contribution.
struct ArmValues {
    std::vector<double> values;
    double utility_se = 0.0;
    std::size_t clamp_events = 0;
};

inline ArmValues evaluate_arm(const Problem& problem, const ControlPolicy& policy, std::span<const PathBundle> bundles,
                              const McOptions& opt, const BsdeSolution* supplied = nullptr) {
    const auto& perf = problem.performance;
    auto paths = simulate_all(problem.forward, policy, bundles, problem.x0, opt.threads);

    std::optional<BsdeSolution> solved;
    const BsdeSolution* backward = supplied;
    if (perf.needs_bsde() && !backward) {
        if (!problem.bsde) throw ConfigurationError("performance functional needs a BSDE solution but none was supplied");
        solved = solve_bsde(*problem.bsde, paths, opt.bsde);
        backward = &*solved;
    }

    ArmValues arm;
    arm.values.resize(paths.size());
    parallel_for(paths.size(), opt.threads,
                 [&](std::size_t r) { arm.values[r] = path_performance(perf, paths[r], backward); });
    for (const auto& p : paths) arm.clamp_events += p.clamp_events;
    if (perf.utility) {
        const double y0 = backward->y0.mean;
        const double shift = perf.utility(y0);
        for (auto& v : arm.values) v += shift;
        arm.utility_se = std::abs(eval_or_zero(perf.utility_y, y0)) * backward->y0.std_error;
    }
    return arm;
}

inline Estimate combine(const ArmValues& arm) {
    Estimate e = estimate_from(arm.values);
    if (arm.utility_se > 0.0)
        e = Estimate::from_moments(e.mean, std::hypot(e.std_error, arm.utility_se), e.n_paths);
    e.clamp_events = arm.clamp_events;
    if (arm.clamp_events) e.warnings.push_back("control clamped to U " + std::to_string(arm.clamp_events) + " times");
    return e;
}

}  // namespace detail

/// J(u) = E[∫ f dt + φ(X(T), α(T)) + ψ(Y(0))]. When ψ or f read the BSDE and no
/// solution is given, the problem's BSDE is solved on the same bundles.
inline Estimate estimate_performance(const Problem& problem, const ControlPolicy& policy,
                                     std::span<const PathBundle> bundles, const McOptions& opt = {},
                                     const BsdeSolution* backward = nullptr) {
    return detail::combine(detail::evaluate_arm(problem, policy, bundles, opt, backward));
}

/// Per-path values of J for the controls u·(1+δ), all on the same bundles.
inline std::vector<std::vector<double>> performance_sweep_values(const Problem& problem, const ControlPolicy& policy,
                                                                 std::span<const double> deltas,
                                                                 std::span<const PathBundle> bundles,
                                                                 const McOptions& opt = {}) {
    std::vector<std::vector<double>> out;
    for (double delta : deltas) out.push_back(detail::evaluate_arm(problem, scale(policy, 1.0 + delta), bundles, opt).values);
    return out;
}

/// Central difference (J(u+ℓβ) − J(u−ℓβ))/(2ℓ) per path on common bundles; mean and
/// SE of the paired differences.
inline Estimate directional_derivative_crn(const Problem& problem, const ControlPolicy& policy,
                                           const ControlPolicy& direction, double ell,
                                           std::span<const PathBundle> bundles, const McOptions& opt = {}) {
    if (!(ell > 0.0)) throw ValidationError("finite-difference step must be positive");
    const auto up = detail::evaluate_arm(problem, perturb(policy, direction, ell), bundles, opt);
    const auto down = detail::evaluate_arm(problem, perturb(policy, direction, -ell), bundles, opt);
    std::vector<double> diff(bundles.size());
    for (std::size_t r = 0; r < diff.size(); ++r) diff[r] = (up.values[r] - down.values[r]) / (2.0 * ell);
    Estimate e = estimate_from(diff);
    const double utility_se = std::hypot(up.utility_se, down.utility_se) / (2.0 * ell);
    if (utility_se > 0.0) e = Estimate::from_moments(e.mean, std::hypot(e.std_error, utility_se), e.n_paths);
    e.clamp_events = up.clamp_events + down.clamp_events;
    if (e.clamp_events)
        e.warnings.push_back("control clamped to U on a perturbed arm (" + std::to_string(e.clamp_events) + " times)");
    return e;
}

/// The same central difference with each arm on its own bundles. Only meant for
/// comparing against the paired estimator.
inline Estimate directional_derivative_independent(const Problem& problem, const ControlPolicy& policy,
                                                   const ControlPolicy& direction, double ell,
                                                   std::span<const PathBundle> bundles_up,
                                                   std::span<const PathBundle> bundles_down,
                                                   const McOptions& opt = {}) {
    if (!(ell > 0.0)) throw ValidationError("finite-difference step must be positive");
    const Estimate up = detail::combine(detail::evaluate_arm(problem, perturb(policy, direction, ell), bundles_up, opt));
    const Estimate down =
        detail::combine(detail::evaluate_arm(problem, perturb(policy, direction, -ell), bundles_down, opt));
    return Estimate::from_moments((up.mean - down.mean) / (2.0 * ell), std::hypot(up.std_error, down.std_error) / (2.0 * ell),
                                  std::min(up.n_paths, down.n_paths));
}

/// Per-path pathwise derivative ∫(f_x x₁ + f_u β) dt + φ_x(X(T)) x₁(T) [+ ψ'·h_x(X(T)) x₁(T)].
inline std::vector<double> pathwise_derivative_values(const Problem& problem, const ControlPolicy& policy,
                                                      const ControlPolicy& direction,
                                                      std::span<const PathBundle> bundles, const McOptions& opt = {}) {
    const auto& perf = problem.performance;
    if (perf.running_uses_backward || perf.running_uses_zkv)
        throw UnsupportedModel("pathwise derivative needs f independent of (Y, Z, K, V)");
    double utility_weight = 0.0;
    const BsdeModel* bsde = nullptr;
    if (perf.utility) {
        if (!perf.utility_slope || !problem.bsde || !problem.bsde->driver_is_zero())
            throw UnsupportedModel("pathwise derivative supports ψ only when ψ is linear and g = 0");
        utility_weight = *perf.utility_slope;
        bsde = &*problem.bsde;
    }

    std::vector<double> out(bundles.size());
    parallel_for(bundles.size(), opt.threads, [&](std::size_t r) {
        const auto base = simulate_forward(problem.forward, policy, bundles[r], problem.x0);
        const auto x1 = simulate_variational(problem.forward, policy, direction, bundles[r], base);
        const auto& grid = base.grid();
        double total = 0.0;
        const BackwardValues bv;
        for (std::size_t k = 0; k < grid.steps(); ++k) {
            const double t = grid[k];
            const double x = base.values[k];
            const Regime i = base.step_regimes[k];
            const double u = base.controls[k];
            total += (eval_or_zero(perf.running_x, t, x, i, bv, u) * x1.values[k] +
                      eval_or_zero(perf.running_u, t, x, i, bv, u) * x1.controls[k]) *
                     grid.dt(k);
        }
        const double xt = base.terminal();
        const Regime at = base.terminal_regime();
        double terminal_weight = eval_or_zero(perf.terminal_x, xt, at);
        if (bsde) terminal_weight += utility_weight * eval_or_zero(bsde->terminal_x, xt, at);
        out[r] = total + terminal_weight * x1.terminal();
    });
    return out;
}

inline Estimate directional_derivative_pathwise(const Problem& problem, const ControlPolicy& policy,
                                                const ControlPolicy& direction, std::span<const PathBundle> bundles,
                                                const McOptions& opt = {}) {
    return estimate_from(pathwise_derivative_values(problem, policy, direction, bundles, opt));
}

}  // namespace rsmp
