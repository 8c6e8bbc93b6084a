#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "rsmp/bsde.hpp"
#include "rsmp/bundle.hpp"
#include "rsmp/errors.hpp"
#include "rsmp/estimate.hpp"
#include "rsmp/mc.hpp"
#include "rsmp/model.hpp"
#include "rsmp/parallel.hpp"
#include "rsmp/simulate.hpp"

namespace rsmp {

/// Adjoint values (a, p, q, r(·), w) at one point. An empty r is zero.
struct AdjointState {
    double a = 0.0;
    double p = 0.0;
    double q = 0.0;
    std::function<double(double zeta)> r;
    std::vector<double> w;  ///< w^j indexed by regime slot; missing entries are zero

    double w_at(Regime j) const { return j.slot() < w.size() ? w[j.slot()] : 0.0; }
};

/// Coefficients and noise laws the Hamiltonian reads.
struct HamiltonianModels {
    const Problem& problem;
    const ScenarioSpec& scenario;
};

namespace detail {

template <class Drv, class Jmp, class Chn>
double hamiltonian_state_part(const HamiltonianModels& m, double t, double x, Regime i, double u,
                              const AdjointState& adj, const Drv& drift, const Drv& vol, const Jmp& jump,
                              const Chn& chain) {
    double h = adj.p * eval_or_zero(drift, t, x, i, u) + adj.q * eval_or_zero(vol, t, x, i, u);
    if (jump && adj.r)
        h += m.scenario.levy.integrate(i, [&](double z) { return adj.r(z) * jump(t, x, i, u, z); });
    if (chain) {
        const auto& gen = m.scenario.generator;
        for (std::size_t j = 0; j < gen.dim(); ++j) {
            const Regime tgt = Regime::from_slot(j);
            if (tgt == i) continue;
            h += chain(t, x, i, u, tgt) * adj.w_at(tgt) * gen.rate(i, tgt);
        }
    }
    return h;
}

}  // namespace detail

/// H = f + a g + p b + q σ + ∫ r γ ν_i(dζ) + Σ_{j≠i} η^j w^j λ_ij.
inline double hamiltonian(double t, double x, Regime i, const BackwardValues& bv, double u, const AdjointState& adj,
                          const HamiltonianModels& m) {
    const auto& pr = m.problem;
    double h = eval_or_zero(pr.performance.running, t, x, i, bv, u);
    if (pr.bsde) h += adj.a * eval_or_zero(pr.bsde->driver, t, x, i, bv, u);
    const auto& fw = pr.forward;
    return h + detail::hamiltonian_state_part(m, t, x, i, u, adj, fw.drift, fw.vol, fw.jump, fw.chain);
}

/// ∂H/∂u from the declared u-partials.
inline double hamiltonian_u(double t, double x, Regime i, const BackwardValues& bv, double u, const AdjointState& adj,
                            const HamiltonianModels& m) {
    const auto& pr = m.problem;
    double h = eval_or_zero(pr.performance.running_u, t, x, i, bv, u);
    if (pr.bsde) h += adj.a * eval_or_zero(pr.bsde->driver_u, t, x, i, bv, u);
    const auto& fw = pr.forward;
    return h + detail::hamiltonian_state_part(m, t, x, i, u, adj, fw.drift_u, fw.vol_u, fw.jump_u, fw.chain_u);
}

/// dA = (f_y + A g_y) dt, A(0) = ψ'(Y(0)). Returns A on the grid; the regimes and
/// controls are those of the forward path. When neither f nor g depends on y the
/// result is the constant A(0).
inline Trajectory simulate_adjoint_A(const Problem& problem, const ControlPolicy& policy, const PathBundle& bundle,
                                     double y0_derivative, const BsdeSolution* backward = nullptr) {
    if (problem.performance.running_uses_zkv || (problem.bsde && problem.bsde->driver_uses_zkv))
        throw UnsupportedModel("adjoint A needs ∂H/∂z, ∇_kH or ∇_vH, which are not supported");
    auto traj = simulate_forward(problem.forward, policy, bundle, problem.x0);
    const auto& grid = traj.grid();
    const auto& running_y = problem.performance.running_y;
    const RunningFunction driver_y = problem.bsde ? problem.bsde->driver_y : RunningFunction{};
    if (!running_y && !driver_y) {
        std::fill(traj.values.begin(), traj.values.end(), y0_derivative);
        return traj;
    }
    std::vector<double> a(traj.values.size());
    a[0] = y0_derivative;
    BackwardValues bv;
    for (std::size_t k = 0; k < grid.steps(); ++k) {
        const double x = traj.values[k];
        bv.y = backward ? backward->value(k, x, traj.regimes[k]) : std::nan("");
        const double t = grid[k];
        const Regime i = traj.step_regimes[k];
        const double u = traj.controls[k];
        const double rate = eval_or_zero(running_y, t, x, i, bv, u) + a[k] * eval_or_zero(driver_y, t, x, i, bv, u);
        a[k + 1] = a[k] + rate * grid.dt(k);
        if (!std::isfinite(a[k + 1]))
            throw ConfigurationError("adjoint A is not finite at step " + std::to_string(k) +
                                     "; a BSDE solution is needed when f or g depends on y");
    }
    traj.values = std::move(a);
    return traj;
}

// ---------------------------------------------------------------------------
// Linear-quadratic closed forms
// ---------------------------------------------------------------------------

struct GammaCoefficients {
    double c3[2];
    double c4[2];
    double lambda12;
    double lambda21;

    static GammaCoefficients from(const LqSpec& spec) {
        spec.validate();
        if (spec.regimes() != 2) throw ValidationError("Γ is defined for two regimes");
        return {{spec.c3[0], spec.c3[1]},
                {spec.c4[0], spec.c4[1]},
                spec.generator.rate(Regime{1}, Regime{2}),
                spec.generator.rate(Regime{2}, Regime{1})};
    }

    void validate() const {
        if (!(lambda12 >= 0.0) || !(lambda21 >= 0.0) || !(lambda12 + lambda21 > 0.0))
            throw ValidationError("Γ needs non-negative rates with λ12 + λ21 > 0");
    }
};

/// Γ(t,T,i) = C₄(i) + C₃(i)(T−t) + C₃(j,i) λ_ij/Λ (T−t)
///          + λ_ij {C₄(j,i)Λ − C₃(j,i)}/Λ² (1 − e^{Λ(t−T)}),  j ≠ i, Λ = λ12 + λ21,
/// with C_n(j,i) = C_n(j) − C_n(i).
inline double gamma(double t, double horizon, Regime i, const GammaCoefficients& c) {
    c.validate();
    if (!(t >= 0.0) || t > horizon) throw DomainError("Γ needs 0 <= t <= T");
    if (i != 1 && i != 2) throw ValidationError("Γ is defined for regimes 1 and 2");
    const std::size_t s = i.slot(), o = 1 - s;
    const double rate = s == 0 ? c.lambda12 : c.lambda21;
    const double big = c.lambda12 + c.lambda21;
    const double c3d = c.c3[o] - c.c3[s];
    const double c4d = c.c4[o] - c.c4[s];
    const double tau = horizon - t;
    return c.c4[s] + c.c3[s] * tau + c3d * rate / big * tau +
           rate * (c4d * big - c3d) / (big * big) * (1.0 - std::exp(big * (t - horizon)));
}

inline double gamma(double t, Regime i, const LqSpec& spec) {
    return gamma(t, spec.horizon, i, GammaCoefficients::from(spec));
}

inline constexpr double singular_threshold = 1e-10;

/// u*(t, i) = −C₁(i) / (2C₂(i) + 2Γ(t,T,i)(σ²(t) + ∫γ²ν)).
inline double optimal_control_lq(double t, Regime i, const LqSpec& spec) {
    const double den = 2.0 * spec.at(spec.c2, i) + 2.0 * gamma(t, i, spec) * spec.noise_energy(t);
    if (std::abs(den) < singular_threshold)
        throw SingularControl("u* denominator vanishes at t=" + format_number(t) + ", regime " + std::to_string(i.id));
    return -spec.at(spec.c1, i) / den;
}

/// u* as a feedback on (t, α(t−)), projected onto the spec's value set.
inline ControlPolicy lq_optimal_policy(const LqSpec& spec) {
    spec.validate();
    return ControlPolicy([spec](const InfoSnapshot& s) { return optimal_control_lq(s.t(), s.regime(), spec); },
                         InfoLevel::regime_only, spec.value_set, "u*");
}

/// κ(t) = 2C₄(α(T))X(T) + 2∫ₜᵀ C₃(α(s))X(s) ds, left Riemann sum on the path's grid.
inline double lq_kappa(const Trajectory& traj, const LqSpec& spec, double t) {
    const auto& grid = traj.grid();
    if (!(t >= 0.0) || t > grid.horizon()) throw DomainError("κ(t) needs t in [0, T]");
    double integral = 0.0;
    if (t < grid.horizon()) {
        const std::size_t first = grid.step_containing(t);
        for (std::size_t k = first; k < grid.steps(); ++k) {
            const double from = k == first ? t : grid[k];
            integral += spec.at(spec.c3, traj.regimes[k]) * traj.values[k] * (grid[k + 1] - from);
        }
    }
    return 2.0 * spec.at(spec.c4, traj.terminal_regime()) * traj.terminal() + 2.0 * integral;
}

struct ConditionalAdjoints {
    double q;
    std::function<double(double zeta)> r;
};

/// E[q̃(t)|F_t] = 2uσ(t)Γ(t,T,i),  E[r̃(t,ζ)|F_t] = 2uγ(t,ζ)Γ(t,T,i).
inline ConditionalAdjoints lq_conditional_adjoints(double u, double t, Regime i, const LqSpec& spec) {
    const double g = gamma(t, i, spec);
    ConditionalAdjoints out{2.0 * u * spec.sigma(t) * g, {}};
    if (spec.gamma) {
        auto gam = spec.gamma;
        out.r = [gam, u, t, g](double z) { return 2.0 * u * gam(t, z) * g; };
    } else {
        out.r = [](double) { return 0.0; };
    }
    return out;
}

// ---------------------------------------------------------------------------
// Stationarity verifier
// ---------------------------------------------------------------------------

struct AdjointQuery {
    double t;
    double x;
    Regime regime;
    double u;
    std::size_t step;
    const Trajectory* path;
};

struct AdjointSource {
    enum class Kind { lq_analytic, user };
    Kind kind = Kind::user;
    std::function<AdjointState(const AdjointQuery&)> adjoints;
};

inline AdjointSource lq_adjoint_source(const LqSpec& spec) {
    spec.validate();
    if (spec.regimes() != 2) throw ValidationError("LQ conditional adjoints are defined for two regimes");
    return {AdjointSource::Kind::lq_analytic, [spec](const AdjointQuery& q) {
                const auto c = lq_conditional_adjoints(q.u, q.t, q.regime, spec);
                AdjointState s;
                s.q = c.q;
                s.r = c.r;
                return s;
            }};
}

inline AdjointSource user_adjoint_source(std::function<AdjointState(const AdjointQuery&)> fn) {
    return {AdjointSource::Kind::user, std::move(fn)};
}

enum class Conditioning { full, regime_only, deterministic };

struct StationarityOptions {
    std::size_t buckets = 16;
    double sigmas = 3.0;
    double floor = 1e-12;
    Conditioning conditioning = Conditioning::full;
    unsigned threads = default_threads();
};

struct BucketResult {
    std::size_t bucket;
    double t_lo;
    double t_hi;
    int regime;  ///< 0 when regimes are pooled
    Estimate estimate;
    double max_abs;
    bool stationary;
};

struct StationarityReport {
    std::vector<BucketResult> buckets;
    double sigmas;
    bool pass() const {
        return std::all_of(buckets.begin(), buckets.end(), [](const auto& b) { return b.stationary; });
    }
    /// Largest |mean|/SE over populated buckets (infinite when SE = 0 and mean ≠ 0).
    double worst_ratio() const {
        double worst = 0.0;
        for (const auto& b : buckets) {
            if (b.estimate.n_paths == 0) continue;
            const double m = std::abs(b.estimate.mean);
            const double r = b.estimate.std_error > 0.0 ? m / b.estimate.std_error
                             : m > 0.0                 ? std::numeric_limits<double>::infinity()
                                                       : 0.0;
            worst = std::max(worst, r);
        }
        return worst;
    }
};

/// Per time bucket and regime, the mean of ∂H/∂u(t_k) over every grid point of every
/// path that falls in the stratum. Paths are the independent units: the SE is the
/// ratio-estimator SE of (Σ_k ∂H/∂u, #points) per path. Under full information the
/// verdict also sees max_abs, the largest pointwise |∂H/∂u|.
inline StationarityReport stationarity_check(const Problem& problem, const ControlPolicy& policy,
                                             const AdjointSource& source, std::span<const PathBundle> bundles,
                                             const StationarityOptions& opt = {},
                                             const BsdeSolution* backward = nullptr) {
    if (!source.adjoints) throw ConfigurationError("stationarity check needs an adjoint source");
    if (bundles.empty()) throw ValidationError("stationarity check needs at least one bundle");
    if (opt.buckets == 0) throw ValidationError("stationarity check needs at least one time bucket");
    if (problem.performance.running_uses_zkv) throw UnsupportedModel("f reading Z, K or V is not supported");
    if (problem.performance.running_uses_backward && !backward)
        throw ConfigurationError("f reads Y(t) but no BSDE solution was supplied");

    const auto& scenario = bundles.front().scenario();
    const auto& grid = scenario.grid;
    const std::size_t d = opt.conditioning == Conditioning::deterministic ? 1 : scenario.generator.dim();
    const std::size_t strata = opt.buckets * d;
    const double horizon = grid.horizon();
    const HamiltonianModels models{problem, scenario};
    auto stratum_of = [&](std::size_t k, Regime r) {
        const auto b = std::min(opt.buckets - 1, static_cast<std::size_t>(grid[k] / horizon * static_cast<double>(opt.buckets)));
        return b * d + (d == 1 ? 0 : r.slot());
    };

    const std::size_t n = bundles.size();
    std::vector<double> sums(n * strata, 0.0), counts(n * strata, 0.0), peaks(n * strata, 0.0);
    parallel_for(n, opt.threads, [&](std::size_t r) {
        const auto traj = simulate_forward(problem.forward, policy, bundles[r], problem.x0);
        BackwardValues bv;
        for (std::size_t k = 0; k < grid.steps(); ++k) {
            const double t = grid[k], x = traj.values[k], u = traj.controls[k];
            const Regime i = traj.step_regimes[k];
            if (backward) bv.y = backward->value(k, x, traj.regimes[k]);
            const auto adj = source.adjoints(AdjointQuery{t, x, i, u, k, &traj});
            const double g = hamiltonian_u(t, x, i, bv, u, adj, models);
            const std::size_t s = r * strata + stratum_of(k, i);
            sums[s] += g;
            counts[s] += 1.0;
            peaks[s] = std::max(peaks[s], std::abs(g));
        }
    });

    StationarityReport report;
    report.sigmas = opt.sigmas;
    const double width = horizon / static_cast<double>(opt.buckets);
    std::vector<double> s_col(n), c_col(n), resid(n);
    for (std::size_t st = 0; st < strata; ++st) {
        double peak = 0.0;
        std::size_t used = 0;
        for (std::size_t r = 0; r < n; ++r) {
            s_col[r] = sums[r * strata + st];
            c_col[r] = counts[r * strata + st];
            peak = std::max(peak, peaks[r * strata + st]);
            if (c_col[r] > 0.0) ++used;
        }
        BucketResult b{st / d, (st / d) * width, (st / d + 1) * width, d == 1 ? 0 : static_cast<int>(st % d) + 1, {}, peak,
                       true};
        const double total_count = pairwise_sum(c_col);
        if (total_count > 0.0) {
            const double mean = pairwise_sum(s_col) / total_count;
            for (std::size_t r = 0; r < n; ++r) resid[r] = s_col[r] - mean * c_col[r];
            double ss = 0.0;
            for (double e : resid) ss += e * e;
            const double nn = static_cast<double>(n);
            const double se = n > 1 ? std::sqrt(ss / (nn * (nn - 1.0))) / (total_count / nn) : 0.0;
            b.estimate = Estimate::from_moments(mean, se, used);
            b.stationary = b.estimate.within(opt.sigmas, opt.floor);
        }
        report.buckets.push_back(std::move(b));
    }
    return report;
}

}  // namespace rsmp
