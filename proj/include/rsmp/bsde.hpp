#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rsmp/bundle.hpp"
#include "rsmp/errors.hpp"
#include "rsmp/estimate.hpp"
#include "rsmp/model.hpp"
#include "rsmp/parallel.hpp"
#include "rsmp/quadrature.hpp"
#include "rsmp/regression.hpp"
#include "rsmp/simulate.hpp"

namespace rsmp {

enum class BsdeScheme { explicit_euler, implicit_picard };

struct BsdeOptions {
    BsdeScheme scheme = BsdeScheme::explicit_euler;
    std::size_t basis_degree = 2;  ///< polynomial degree in X, per regime
    double picard_tolerance = 1e-10;
    int picard_max_iterations = 50;
    unsigned threads = default_threads();
};

/// Polynomial in the standardized state (x − center)/scale.
struct RegressionSurface {
    Eigen::VectorXd coef;
    double center = 0.0;
    double scale = 1.0;
    double r_squared = 1.0;
    bool fitted = false;

    double operator()(double x) const {
        const double z = (x - center) / scale;
        double v = 0.0, pw = 1.0;
        for (Eigen::Index j = 0; j < coef.size(); ++j, pw *= z) v += coef(j) * pw;
        return v;
    }
};

/// Backward regression solution: Y(0), and Y(t_k, x, i) surfaces for k < M. The
/// surface at t_M is the terminal condition h itself.
struct BsdeSolution {
    Estimate y0;
    std::shared_ptr<const ScenarioSpec> scenario;
    std::vector<std::vector<RegressionSurface>> surfaces;  ///< [k][regime slot], k = 0..M−1
    TerminalFunction terminal;
    std::vector<std::string> diagnostics;

    double value(std::size_t k, double x, Regime i) const {
        if (k >= surfaces.size()) return eval_or_zero(terminal, x, i);
        const auto& s = surfaces[k].at(i.slot());
        if (!s.fitted) throw DomainError("no BSDE surface for regime " + std::to_string(i.id) + " at step " + std::to_string(k));
        return s(x);
    }

    /// Per-step, per-regime in-sample R² of the continuation regressions.
    std::vector<std::vector<double>> r_squared() const {
        std::vector<std::vector<double>> out;
        for (const auto& step : surfaces) {
            out.emplace_back();
            for (const auto& s : step) out.back().push_back(s.fitted ? s.r_squared : std::nan(""));
        }
        return out;
    }
};

namespace detail {

inline RegressionSurface fit_surface(std::span<const double> x, std::span<const double> y, std::size_t degree) {
    RegressionSurface s;
    const std::size_t n = x.size();
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    s.center = mean;
    s.scale = var > 0.0 ? std::sqrt(var) : 1.0;

    const auto p = static_cast<Eigen::Index>(degree + 1);
    Eigen::MatrixXd design(static_cast<Eigen::Index>(n), p);
    Eigen::VectorXd target(static_cast<Eigen::Index>(n));
    for (std::size_t r = 0; r < n; ++r) {
        const double z = (x[r] - s.center) / s.scale;
        double pw = 1.0;
        for (Eigen::Index j = 0; j < p; ++j, pw *= z) design(static_cast<Eigen::Index>(r), j) = pw;
        target(static_cast<Eigen::Index>(r)) = y[r];
    }
    auto fit = ridge_solve(design, target);
    s.coef = std::move(fit.coef);
    s.r_squared = fit.r2;
    s.fitted = true;
    return s;
}

}  // namespace detail

/// Least-squares Monte Carlo for dY = −g(t, X, α, Y) dt + martingale terms, Y(T) = h(X(T), α(T)).
///
///   Y_M = h(X_M, α_M)
///   C_k = E[Y_{k+1} | X_k, α(t_k)]      (separate polynomial regression per regime)
///   Y_k = C_k + g(t_k, X_k, α_k, C_k) Δt          explicit
///   Y_k = C_k + g(t_k, X_k, α_k, Y_k) Δt          implicit, Picard iterations
///
/// A regime with fewer than 10·(degree+1) paths at a step falls back to the stratum mean.
/// y0.mean is the average regressed Y_0; its standard error is that of the realized
/// values h(X_M) + Σ_k g_k Δt along each path.
inline BsdeSolution solve_bsde(const BsdeModel& model, std::span<const Trajectory> paths, const BsdeOptions& opt = {}) {
    if (model.driver_uses_zkv) throw UnsupportedModel("BSDE solver supports drivers in (t, X, regime, Y) only");
    if (paths.empty()) throw ValidationError("BSDE solver needs at least one path");
    const auto scenario = paths.front().scenario;
    const auto& grid = scenario->grid;
    const std::size_t m = grid.steps();
    const std::size_t d = scenario->generator.dim();
    const std::size_t n = paths.size();
    const std::size_t p = opt.basis_degree + 1;
    if (n < 10 * p)
        throw ValidationError("BSDE solver needs at least 10 paths per basis function (" + std::to_string(n) + " < " +
                              std::to_string(10 * p) + ")");

    BsdeSolution sol;
    sol.scenario = scenario;
    sol.terminal = model.terminal;
    sol.surfaces.assign(m, std::vector<RegressionSurface>(d));
    if (model.experimental) sol.diagnostics.push_back("experimental driver: positivity of Y is only monitored");

    std::vector<double> y(n), cont(n);
    for (std::size_t r = 0; r < n; ++r) y[r] = eval_or_zero(model.terminal, paths[r].terminal(), paths[r].terminal_regime());
    std::vector<double> realized = y;

    auto driver_at = [&](std::size_t k, std::size_t r, double yv) {
        if (!model.driver) return 0.0;
        BackwardValues bv;
        bv.y = yv;
        const auto& path = paths[r];
        const double u = k < path.controls.size() ? path.controls[k] : 0.0;
        try {
            return model.driver(grid[k], path.values[k], path.regimes[k], bv, u);
        } catch (const DomainError& e) {
            throw DomainError(std::string(e.what()) + " (step " + std::to_string(k) + ", path " + std::to_string(r) + ")");
        }
    };

    for (std::size_t kk = m; kk-- > 0;) {
        const double dt = grid.dt(kk);
        for (std::size_t s = 0; s < d; ++s) {
            const Regime reg = Regime::from_slot(s);
            std::vector<std::size_t> members;
            for (std::size_t r = 0; r < n; ++r)
                if (paths[r].regimes[kk] == reg) members.push_back(r);
            if (members.empty()) continue;
            std::vector<double> xs, ys;
            xs.reserve(members.size());
            ys.reserve(members.size());
            for (auto r : members) {
                xs.push_back(paths[r].values[kk]);
                ys.push_back(y[r]);
            }
            RegressionSurface surf;
            if (members.size() >= 10 * p) {
                surf = detail::fit_surface(xs, ys, opt.basis_degree);
            } else {
                surf = detail::fit_surface(xs, ys, 0);
                sol.diagnostics.push_back("step " + std::to_string(kk) + ", regime " + std::to_string(reg.id) +
                                          ": " + std::to_string(members.size()) + " paths, mean fallback");
            }
            for (auto r : members) cont[r] = surf(paths[r].values[kk]);
            sol.surfaces[kk][s] = std::move(surf);
        }

        parallel_for(n, opt.threads, [&](std::size_t r) {
            const double c = cont[r];
            double yk = c + driver_at(kk, r, c) * dt;
            if (opt.scheme == BsdeScheme::implicit_picard && model.driver) {
                int it = 0;
                for (;; ++it) {
                    if (it >= opt.picard_max_iterations)
                        throw NumericalError("Picard iteration did not converge at step " + std::to_string(kk));
                    const double next = c + driver_at(kk, r, yk) * dt;
                    const bool done = std::abs(next - yk) <= opt.picard_tolerance * std::max(1.0, std::abs(next));
                    yk = next;
                    if (done) break;
                }
            }
            realized[r] += yk - c;
            y[r] = yk;
        });
        for (std::size_t r = 0; r < n; ++r)
            if (!std::isfinite(y[r])) throw NumericalError("BSDE value became non-finite at step " + std::to_string(kk));
    }

    const Estimate spread = estimate_from(realized);
    const Estimate level = estimate_from(y);
    sol.y0 = Estimate::from_moments(level.mean, spread.std_error, n);
    return sol;
}

/// Simulates the forward state under `policy` on each bundle, then solves backwards.
inline BsdeSolution solve_bsde(const BsdeModel& model, const ForwardModel& forward, const ControlPolicy& policy,
                               double x0, std::span<const PathBundle> bundles, const BsdeOptions& opt = {}) {
    std::vector<std::unique_ptr<Trajectory>> slots(bundles.size());
    parallel_for(bundles.size(), opt.threads, [&](std::size_t r) {
        slots[r] = std::make_unique<Trajectory>(simulate_forward(forward, policy, bundles[r], x0));
    });
    std::vector<Trajectory> paths;
    paths.reserve(slots.size());
    for (auto& s : slots) paths.push_back(std::move(*s));
    return solve_bsde(model, paths, opt);
}

/// x·E[exp∫₀ᵀc dt] + ∫₀ᵀ E[c₀(t) exp∫₀ᵀc ds] dt for deterministic c, c₀, i.e.
/// (x + ∫₀ᵀc₀ dt)·exp∫₀ᵀc dt.
inline double recursive_utility_value_regime2(double x0, const TimeFunction& c, const TimeFunction& c0, double horizon) {
    if (!(horizon > 0.0)) throw ValidationError("horizon must be positive");
    const double growth = std::exp(integrate(c, 0.0, horizon));
    return x0 * growth + integrate(c0, 0.0, horizon) * growth;
}

}  // namespace rsmp
