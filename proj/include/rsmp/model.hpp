#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rsmp/errors.hpp"
#include "rsmp/levy.hpp"
#include "rsmp/regime.hpp"

namespace rsmp {

// ---------------------------------------------------------------------------
// Information available to the controller
// ---------------------------------------------------------------------------

enum class InfoLevel { deterministic = 0, regime_only = 1, full = 2 };

/// What a control rule may look at. Fields above the policy's information level are
/// withheld and reading them throws InformationLeak.
class InfoSnapshot {
public:
    static InfoSnapshot filtered(InfoLevel level, double t, double x, Regime regime) {
        InfoSnapshot s;
        s.level_ = level;
        s.t_ = t;
        if (level >= InfoLevel::regime_only) s.regime_ = regime;
        if (level >= InfoLevel::full) s.x_ = x;
        return s;
    }

    double t() const noexcept { return t_; }
    InfoLevel level() const noexcept { return level_; }

    double x() const {
        if (!x_) throw InformationLeak("control rule read the state under a restricted information level");
        return *x_;
    }
    Regime regime() const {
        if (!regime_) throw InformationLeak("control rule read the regime under deterministic information");
        return *regime_;
    }

private:
    InfoLevel level_ = InfoLevel::deterministic;
    double t_ = 0.0;
    std::optional<double> x_;
    std::optional<Regime> regime_;
};

/// Admissible control values U: a closed interval, possibly unbounded.
struct ValueSet {
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();

    static ValueSet reals() { return {}; }
    static ValueSet interval(double lo, double hi) {
        if (!(lo <= hi)) throw ValidationError("value set interval must satisfy lo <= hi");
        return {lo, hi};
    }
    bool bounded() const noexcept { return std::isfinite(lo) || std::isfinite(hi); }
};

class ControlPolicy {
public:
    using Rule = std::function<double(const InfoSnapshot&)>;

    struct Value {
        double u;
        bool clamped;
    };

    ControlPolicy(Rule rule, InfoLevel level, ValueSet values = ValueSet::reals(), std::string name = {})
        : rule_(std::move(rule)), level_(level), values_(values), name_(std::move(name)) {
        if (!rule_) throw ValidationError("control policy needs a rule");
    }

    static ControlPolicy constant(double c) {
        return ControlPolicy([c](const InfoSnapshot&) { return c; }, InfoLevel::deterministic, ValueSet::reals(),
                             "constant");
    }

    /// β(t) = θ·1{t > t0}, optionally only while the chain sits in `only_in`.
    static ControlPolicy bump(double t0, double theta, std::optional<Regime> only_in = std::nullopt) {
        if (only_in) {
            const Regime r = *only_in;
            return ControlPolicy([=](const InfoSnapshot& s) { return (s.t() > t0 && s.regime() == r) ? theta : 0.0; },
                                 InfoLevel::regime_only, ValueSet::reals(), "bump");
        }
        return ControlPolicy([=](const InfoSnapshot& s) { return s.t() > t0 ? theta : 0.0; },
                             InfoLevel::deterministic, ValueSet::reals(), "bump");
    }

    /// Unclamped rule value.
    double raw(double t, double x, Regime regime) const {
        return rule_(InfoSnapshot::filtered(level_, t, x, regime));
    }

    /// Rule value projected onto U.
    Value operator()(double t, double x, Regime regime) const {
        const double u = raw(t, x, regime);
        if (!values_.bounded()) return {u, false};
        const double c = std::clamp(u, values_.lo, values_.hi);
        return {c, c != u};
    }

    InfoLevel level() const noexcept { return level_; }
    const ValueSet& value_set() const noexcept { return values_; }
    const std::string& name() const noexcept { return name_; }
    const Rule& rule() const noexcept { return rule_; }

private:
    Rule rule_;
    InfoLevel level_;
    ValueSet values_;
    std::string name_;
};

/// u + ℓβ, projected onto the value set of `policy`.
inline ControlPolicy perturb(const ControlPolicy& policy, const ControlPolicy& direction, double ell) {
    if (direction.level() > policy.level())
        throw ValidationError("perturbation direction uses more information than the policy");
    if (ell == 0.0) return policy;
    const auto base = policy.rule();
    const auto dir = direction.rule();
    const InfoLevel dir_level = direction.level();
    return ControlPolicy(
        [=](const InfoSnapshot& s) {
            const double x = s.level() == InfoLevel::full ? s.x() : 0.0;
            const Regime r = s.level() >= InfoLevel::regime_only ? s.regime() : Regime{1};
            return base(s) + ell * dir(InfoSnapshot::filtered(dir_level, s.t(), x, r));
        },
        policy.level(), policy.value_set(), policy.name() + "+perturbation");
}

/// Multiplies a policy by a constant factor (same information level and value set).
inline ControlPolicy scale(const ControlPolicy& policy, double factor) {
    const auto base = policy.rule();
    return ControlPolicy([=](const InfoSnapshot& s) { return factor * base(s); }, policy.level(),
                         policy.value_set(), policy.name());
}

// ---------------------------------------------------------------------------
// Coefficients. An empty std::function means "identically zero".
// ---------------------------------------------------------------------------

using StateCoefficient = std::function<double(double t, double x, Regime i, double u)>;
using JumpCoefficient = std::function<double(double t, double x, Regime i, double u, double zeta)>;
using ChainCoefficient = std::function<double(double t, double x, Regime i, double u, Regime target)>;

template <class F, class... Args>
double eval_or_zero(const F& fn, Args&&... args) {
    return fn ? fn(std::forward<Args>(args)...) : 0.0;
}

/// dX = b dt + σ dB + ∫γ Ñ_α(dζ,dt) + η·dΦ̃, with partials in x and u.
struct ForwardModel {
    StateCoefficient drift, drift_x, drift_u;
    StateCoefficient vol, vol_x, vol_u;
    JumpCoefficient jump, jump_x, jump_u;
    ChainCoefficient chain, chain_x, chain_u;
};

/// Values of the backward component fed to f and g. The k-argument is carried as
/// the finite list of integral functionals a driver declares; every preset here
/// leaves it empty.
struct BackwardValues {
    double y = 0.0;
    double z = 0.0;
    std::vector<double> k_functionals;
    std::vector<double> v;
};

using RunningFunction = std::function<double(double t, double x, Regime i, const BackwardValues& bv, double u)>;
using TerminalFunction = std::function<double(double x, Regime i)>;
using UtilityFunction = std::function<double(double y)>;

/// J(u) = E[∫ f dt + φ(X(T), α(T)) + ψ(Y(0))].
struct PerformanceModel {
    RunningFunction running, running_x, running_u, running_y;
    TerminalFunction terminal, terminal_x;
    UtilityFunction utility, utility_y;

    bool running_uses_backward = false;  ///< f reads Y(t)
    bool running_uses_zkv = false;       ///< f reads Z, K or V
    std::optional<double> utility_slope;  ///< set when ψ(y) = slope·y + const

    bool needs_bsde() const { return running_uses_backward || running_uses_zkv || static_cast<bool>(utility); }
};

/// dY = −g dt + Z dB + ∫K Ñ_α + V·dΦ̃,  Y(T) = h(X(T), α(T)).
struct BsdeModel {
    RunningFunction driver, driver_x, driver_y, driver_u;
    TerminalFunction terminal, terminal_x;

    bool driver_uses_zkv = false;
    bool experimental = false;  ///< e.g. log drivers, whose positivity is only monitored

    bool driver_is_zero() const noexcept { return !driver; }
};

// ---------------------------------------------------------------------------
// Partial-derivative consistency
// ---------------------------------------------------------------------------

struct ProbePoint {
    double t;
    double x;
    Regime regime;
    double u;
    double y;
    double zeta;
};

namespace detail {

inline double relative_gap(double declared, double fd) {
    return std::abs(declared - fd) / std::max(1.0, std::abs(fd));
}

template <class F>
double central_difference(F&& fn, double at, double h) {
    return (fn(at + h) - fn(at - h)) / (2.0 * h);
}

}  // namespace detail

/// Largest relative gap between a declared partial and a central difference (step h)
/// over the probe set. Undeclared partials are checked as zero.
inline double max_partial_error(const ForwardModel& m, const std::vector<ProbePoint>& probes, std::size_t regimes,
                                double h = 1e-5) {
    double worst = 0.0;
    auto check_state = [&](const StateCoefficient& f, const StateCoefficient& fx, const StateCoefficient& fu) {
        if (!f) return;
        for (const auto& p : probes) {
            const double dx = detail::central_difference([&](double x) { return f(p.t, x, p.regime, p.u); }, p.x, h);
            const double du = detail::central_difference([&](double u) { return f(p.t, p.x, p.regime, u); }, p.u, h);
            worst = std::max(worst, detail::relative_gap(eval_or_zero(fx, p.t, p.x, p.regime, p.u), dx));
            worst = std::max(worst, detail::relative_gap(eval_or_zero(fu, p.t, p.x, p.regime, p.u), du));
        }
    };
    check_state(m.drift, m.drift_x, m.drift_u);
    check_state(m.vol, m.vol_x, m.vol_u);
    if (m.jump) {
        for (const auto& p : probes) {
            const double dx = detail::central_difference(
                [&](double x) { return m.jump(p.t, x, p.regime, p.u, p.zeta); }, p.x, h);
            const double du = detail::central_difference(
                [&](double u) { return m.jump(p.t, p.x, p.regime, u, p.zeta); }, p.u, h);
            worst = std::max(worst, detail::relative_gap(eval_or_zero(m.jump_x, p.t, p.x, p.regime, p.u, p.zeta), dx));
            worst = std::max(worst, detail::relative_gap(eval_or_zero(m.jump_u, p.t, p.x, p.regime, p.u, p.zeta), du));
        }
    }
    if (m.chain) {
        for (const auto& p : probes) {
            for (std::size_t j = 0; j < regimes; ++j) {
                const Regime tgt = Regime::from_slot(j);
                const double dx = detail::central_difference(
                    [&](double x) { return m.chain(p.t, x, p.regime, p.u, tgt); }, p.x, h);
                const double du = detail::central_difference(
                    [&](double u) { return m.chain(p.t, p.x, p.regime, u, tgt); }, p.u, h);
                worst = std::max(worst, detail::relative_gap(eval_or_zero(m.chain_x, p.t, p.x, p.regime, p.u, tgt), dx));
                worst = std::max(worst, detail::relative_gap(eval_or_zero(m.chain_u, p.t, p.x, p.regime, p.u, tgt), du));
            }
        }
    }
    return worst;
}

namespace detail {

inline double running_partial_error(const RunningFunction& f, const RunningFunction& fx, const RunningFunction& fu,
                                    const RunningFunction& fy, const std::vector<ProbePoint>& probes, double h) {
    double worst = 0.0;
    if (!f) return worst;
    for (const auto& p : probes) {
        BackwardValues bv;
        bv.y = p.y;
        const double dx = central_difference([&](double x) { return f(p.t, x, p.regime, bv, p.u); }, p.x, h);
        const double du = central_difference([&](double u) { return f(p.t, p.x, p.regime, bv, u); }, p.u, h);
        const double dy = central_difference(
            [&](double y) {
                BackwardValues b2 = bv;
                b2.y = y;
                return f(p.t, p.x, p.regime, b2, p.u);
            },
            p.y, h);
        worst = std::max(worst, relative_gap(eval_or_zero(fx, p.t, p.x, p.regime, bv, p.u), dx));
        worst = std::max(worst, relative_gap(eval_or_zero(fu, p.t, p.x, p.regime, bv, p.u), du));
        worst = std::max(worst, relative_gap(eval_or_zero(fy, p.t, p.x, p.regime, bv, p.u), dy));
    }
    return worst;
}

inline double terminal_partial_error(const TerminalFunction& f, const TerminalFunction& fx,
                                     const std::vector<ProbePoint>& probes, double h) {
    double worst = 0.0;
    if (!f) return worst;
    for (const auto& p : probes) {
        const double dx = central_difference([&](double x) { return f(x, p.regime); }, p.x, h);
        worst = std::max(worst, relative_gap(eval_or_zero(fx, p.x, p.regime), dx));
    }
    return worst;
}

}  // namespace detail

inline double max_partial_error(const PerformanceModel& m, const std::vector<ProbePoint>& probes, double h = 1e-5) {
    double worst = detail::running_partial_error(m.running, m.running_x, m.running_u, m.running_y, probes, h);
    worst = std::max(worst, detail::terminal_partial_error(m.terminal, m.terminal_x, probes, h));
    if (m.utility) {
        for (const auto& p : probes) {
            const double dy = detail::central_difference(m.utility, p.y, h);
            worst = std::max(worst, detail::relative_gap(eval_or_zero(m.utility_y, p.y), dy));
        }
    }
    return worst;
}

inline double max_partial_error(const BsdeModel& m, const std::vector<ProbePoint>& probes, double h = 1e-5) {
    double worst = detail::running_partial_error(m.driver, m.driver_x, m.driver_u, m.driver_y, probes, h);
    return std::max(worst, detail::terminal_partial_error(m.terminal, m.terminal_x, probes, h));
}

// ---------------------------------------------------------------------------
// Linear-quadratic application
// ---------------------------------------------------------------------------

/// Coefficients of the regime-switching LQ problem
///   dX = u(σ(t) dB + ∫γ(t,ζ) Ñ(dζ,dt)),  X(0) = 0,
///   J  = E[∫ C₁u + C₂u² + C₃X² dt + C₄(α(T)) X(T)²].
/// Per-regime vectors are indexed by Regime::slot().
struct LqSpec {
    std::vector<double> c1, c2, c3, c4;
    std::function<double(double t)> sigma;
    std::function<double(double t, double zeta)> gamma;
    LevyMeasureSpec levy;
    GeneratorMatrix generator;
    double horizon;
    ValueSet value_set = ValueSet::reals();

    std::size_t regimes() const noexcept { return generator.dim(); }

    void validate() const {
        const std::size_t d = regimes();
        if (c1.size() != d || c2.size() != d || c3.size() != d || c4.size() != d)
            throw ValidationError("LQ coefficients must have one entry per regime");
        if (!sigma) throw ValidationError("LQ specification needs σ(t)");
        if (levy.regimes() != d) throw ValidationError("LQ Lévy specification has the wrong number of regimes");
        if (!levy.regime_independent())
            throw ValidationError("LQ model assumes the same Poisson random measure in every regime");
        if (!(horizon > 0.0)) throw ValidationError("LQ horizon must be positive");
    }

    /// σ²(t) + ∫γ²(t,ζ) ν(dζ).
    double noise_energy(double t) const {
        const double s = sigma(t);
        double e = s * s;
        if (gamma) e += levy.integrate(Regime{1}, [&](double z) {
            const double g = gamma(t, z);
            return g * g;
        });
        return e;
    }

    double at(const std::vector<double>& c, Regime i) const { return c.at(i.slot()); }
};

/// The corollary constants C₁=(−1,0), C₂=(0,−½), C₃=(0,1), C₄=(½,1).
inline LqSpec corollary_lq_spec(GeneratorMatrix generator, double horizon,
                                std::function<double(double)> sigma = [](double) { return 1.0; },
                                std::function<double(double, double)> gamma = {},
                                std::optional<LevyMeasureSpec> levy = std::nullopt) {
    return LqSpec{{-1.0, 0.0},
                  {0.0, -0.5},
                  {0.0, 1.0},
                  {0.5, 1.0},
                  std::move(sigma),
                  std::move(gamma),
                  levy ? *levy : LevyMeasureSpec::none(2),
                  std::move(generator),
                  horizon};
}

struct LqModels {
    ForwardModel forward;
    PerformanceModel performance;
    BsdeModel bsde;  ///< trivial: g = 0, h = 0
};

inline LqModels application1_preset(const LqSpec& spec) {
    spec.validate();
    LqModels m;
    auto sigma = spec.sigma;
    m.forward.vol = [sigma](double t, double, Regime, double u) { return u * sigma(t); };
    m.forward.vol_u = [sigma](double t, double, Regime, double) { return sigma(t); };
    if (spec.gamma) {
        auto gamma = spec.gamma;
        m.forward.jump = [gamma](double t, double, Regime, double u, double z) { return u * gamma(t, z); };
        m.forward.jump_u = [gamma](double t, double, Regime, double, double z) { return gamma(t, z); };
    }

    const auto c1 = spec.c1, c2 = spec.c2, c3 = spec.c3, c4 = spec.c4;
    m.performance.running = [=](double, double x, Regime i, const BackwardValues&, double u) {
        const auto s = i.slot();
        return c1.at(s) * u + c2.at(s) * u * u + c3.at(s) * x * x;
    };
    m.performance.running_x = [=](double, double x, Regime i, const BackwardValues&, double) {
        return 2.0 * c3.at(i.slot()) * x;
    };
    m.performance.running_u = [=](double, double, Regime i, const BackwardValues&, double u) {
        return c1.at(i.slot()) + 2.0 * c2.at(i.slot()) * u;
    };
    m.performance.terminal = [=](double x, Regime i) { return c4.at(i.slot()) * x * x; };
    m.performance.terminal_x = [=](double x, Regime i) { return 2.0 * c4.at(i.slot()) * x; };
    return m;
}

// ---------------------------------------------------------------------------
// Recursive-utility application
// ---------------------------------------------------------------------------

using TimeFunction = std::function<double(double t)>;

struct RecursiveUtilityParams {
    double x0;
    std::vector<double> mu;     ///< appreciation rate per regime
    std::vector<double> sigma;  ///< volatility per regime
    std::function<double(double t, double zeta)> gamma;
    LevyMeasureSpec levy;
    TimeFunction c1, c2;  ///< regime-1 driver −c₁ y ln y + c₂ y
    TimeFunction c, c0;   ///< regime-2 driver c y + c₀
};

struct RecursiveUtilityModels {
    ForwardModel forward;
    BsdeModel bsde;
    double x0;
};

inline RecursiveUtilityModels application2_preset(const RecursiveUtilityParams& p) {
    if (!(p.x0 > 0.0)) throw ValidationError("initial wealth must be positive");
    if (p.mu.size() != 2 || p.sigma.size() != 2 || p.levy.regimes() != 2)
        throw ValidationError("recursive-utility model is defined for two regimes");
    if (!p.c1 || !p.c2 || !p.c || !p.c0) throw ValidationError("recursive-utility driver needs c1, c2, c, c0");

    RecursiveUtilityModels m;
    m.x0 = p.x0;
    const auto mu = p.mu, sig = p.sigma;
    m.forward.drift = [mu](double, double, Regime i, double u) { return u * mu.at(i.slot()); };
    m.forward.drift_u = [mu](double, double, Regime i, double) { return mu.at(i.slot()); };
    m.forward.vol = [sig](double, double, Regime i, double u) { return u * sig.at(i.slot()); };
    m.forward.vol_u = [sig](double, double, Regime i, double) { return sig.at(i.slot()); };
    if (p.gamma) {
        auto gamma = p.gamma;
        m.forward.jump = [gamma](double t, double, Regime, double u, double z) { return u * gamma(t, z); };
        m.forward.jump_u = [gamma](double t, double, Regime, double, double z) { return gamma(t, z); };
    }

    const auto c1 = p.c1, c2 = p.c2, c = p.c, c0 = p.c0;
    m.bsde.terminal = [](double x, Regime) { return x; };
    m.bsde.terminal_x = [](double, Regime) { return 1.0; };
    m.bsde.driver = [=](double t, double, Regime i, const BackwardValues& bv, double) {
        if (i == 1) {
            if (!(bv.y > 0.0)) throw DomainError("log driver evaluated at non-positive utility");
            return -c1(t) * bv.y * std::log(bv.y) + c2(t) * bv.y;
        }
        if (i == 2) return c(t) * bv.y + c0(t);
        throw ValidationError("recursive-utility driver is defined for regimes 1 and 2");
    };
    m.bsde.driver_y = [=](double t, double, Regime i, const BackwardValues& bv, double) {
        if (i == 1) {
            if (!(bv.y > 0.0)) throw DomainError("log driver evaluated at non-positive utility");
            return -c1(t) * (std::log(bv.y) + 1.0) + c2(t);
        }
        return c(t);
    };
    m.bsde.experimental = true;
    return m;
}

}  // namespace rsmp
