#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rsmp/errors.hpp"
#include "rsmp/grid.hpp"
#include "rsmp/rng.hpp"

namespace rsmp {

/// A state of the Markov chain, numbered 1..D.
struct Regime {
    int id = 1;

    constexpr std::size_t slot() const noexcept { return static_cast<std::size_t>(id - 1); }
    static constexpr Regime from_slot(std::size_t s) noexcept { return Regime{static_cast<int>(s) + 1}; }

    friend constexpr auto operator<=>(Regime, Regime) = default;
    friend constexpr bool operator==(Regime, Regime) = default;
    friend constexpr bool operator==(Regime a, int b) noexcept { return a.id == b; }
};

/// Rate matrix of a continuous-time Markov chain: off-diagonal intensities λ_ij ≥ 0,
/// rows summing to zero.
class GeneratorMatrix {
public:
    explicit GeneratorMatrix(Eigen::MatrixXd rates) : rates_(std::move(rates)) { validate(); }

    static GeneratorMatrix two_state(double rate_12, double rate_21) {
        Eigen::MatrixXd m(2, 2);
        m << -rate_12, rate_12, rate_21, -rate_21;
        return GeneratorMatrix(std::move(m));
    }

    /// A D-state chain with all rates zero; no regime ever changes.
    static GeneratorMatrix frozen(std::size_t dim) {
        return GeneratorMatrix(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim),
                                                     static_cast<Eigen::Index>(dim)));
    }

    std::size_t dim() const noexcept { return static_cast<std::size_t>(rates_.rows()); }
    double rate(Regime from, Regime to) const { return rates_(idx(from), idx(to)); }
    double exit_rate(Regime i) const { return -rates_(idx(i), idx(i)); }
    const Eigen::MatrixXd& matrix() const noexcept { return rates_; }

    bool contains(Regime r) const noexcept { return r.id >= 1 && static_cast<std::size_t>(r.id) <= dim(); }

    void require(Regime r) const {
        if (!contains(r))
            throw ValidationError("regime " + std::to_string(r.id) + " outside 1.." + std::to_string(dim()));
    }

private:
    static Eigen::Index idx(Regime r) { return static_cast<Eigen::Index>(r.slot()); }

    void validate() const {
        if (rates_.rows() != rates_.cols()) throw ValidationError("generator must be square");
        if (rates_.rows() < 2) throw ValidationError("generator needs at least two states");
        if (!rates_.allFinite()) throw ValidationError("generator has non-finite entries");
        const double scale = rates_.cwiseAbs().maxCoeff();
        for (Eigen::Index i = 0; i < rates_.rows(); ++i) {
            for (Eigen::Index j = 0; j < rates_.cols(); ++j) {
                if (i != j && rates_(i, j) < 0.0)
                    throw ValidationError("negative off-diagonal rate at (" + std::to_string(i + 1) + "," +
                                          std::to_string(j + 1) + ")");
            }
            if (std::abs(rates_.row(i).sum()) > 1e-12 * scale)
                throw ValidationError("generator row " + std::to_string(i + 1) + " does not sum to zero");
        }
    }

    Eigen::MatrixXd rates_;
};

struct RegimeEvent {
    double time;
    Regime from;
    Regime to;

    bool operator==(const RegimeEvent&) const = default;
};

/// A realized chain trajectory on [0, T]: right-continuous, jumps at `events`.
class RegimePath {
public:
    RegimePath(Regime initial, std::vector<RegimeEvent> events, double horizon)
        : initial_(initial), events_(std::move(events)), horizon_(horizon) {
        if (!(horizon_ > 0.0)) throw ValidationError("regime path horizon must be positive");
        Regime cur = initial_;
        double last = 0.0;
        for (const auto& e : events_) {
            if (!(e.time > last) || e.time > horizon_)
                throw ValidationError("regime jump times must be strictly increasing in (0, T]");
            if (e.from != cur) throw ValidationError("regime events do not chain");
            if (e.from == e.to) throw ValidationError("regime event without a change of state");
            cur = e.to;
            last = e.time;
        }
    }

    Regime initial_state() const noexcept { return initial_; }
    const std::vector<RegimeEvent>& events() const noexcept { return events_; }
    double horizon() const noexcept { return horizon_; }
    Regime final_state() const noexcept { return events_.empty() ? initial_ : events_.back().to; }

    /// α(t), right-continuous.
    Regime state_at(double t) const {
        auto it = std::upper_bound(events_.begin(), events_.end(), t,
                                   [](double v, const RegimeEvent& e) { return v < e.time; });
        return it == events_.begin() ? initial_ : std::prev(it)->to;
    }

    /// α(t−); α(0−) is taken to be α(0).
    Regime state_before(double t) const {
        auto it = std::lower_bound(events_.begin(), events_.end(), t,
                                   [](const RegimeEvent& e, double v) { return e.time < v; });
        return it == events_.begin() ? initial_ : std::prev(it)->to;
    }

    bool operator==(const RegimePath&) const = default;

private:
    Regime initial_;
    std::vector<RegimeEvent> events_;
    double horizon_;
};

/// Exact event-driven simulation: exponential holding times with rate −λ_ii, next state
/// drawn with probability λ_ij / (−λ_ii). An absorbing state stops the path.
inline RegimePath sample_regime_path(const GeneratorMatrix& gen, Regime init, double horizon, Engine& rng) {
    gen.require(init);
    if (!(horizon > 0.0)) throw ValidationError("horizon must be positive");
    std::vector<RegimeEvent> events;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Regime cur = init;
    double t = 0.0;
    for (;;) {
        const double q = gen.exit_rate(cur);
        if (q <= 0.0) break;
        t += std::exponential_distribution<double>(q)(rng);
        if (t > horizon) break;
        double target = unif(rng) * q;
        Regime next = cur;
        for (std::size_t j = 0; j < gen.dim(); ++j) {
            const Regime cand = Regime::from_slot(j);
            if (cand == cur) continue;
            const double r = gen.rate(cur, cand);
            if (r <= 0.0) continue;
            next = cand;
            if (target < r) break;
            target -= r;
        }
        events.push_back({t, cur, next});
        cur = next;
    }
    return RegimePath(init, std::move(events), horizon);
}

namespace detail {

inline Eigen::MatrixXd uniformized_exponential(const Eigen::MatrixXd& rates, double elapsed) {
    const auto d = rates.rows();
    const double q = rates.diagonal().cwiseAbs().maxCoeff();
    if (q == 0.0 || elapsed == 0.0) return Eigen::MatrixXd::Identity(d, d);

    // Halve until q·τ ≤ 1 so the Poisson weights neither underflow nor need many terms.
    int squarings = 0;
    double tau = elapsed;
    while (q * tau > 1.0) {
        tau *= 0.5;
        ++squarings;
    }
    const Eigen::MatrixXd jump = Eigen::MatrixXd::Identity(d, d) + rates / q;
    const double mean = q * tau;
    double weight = std::exp(-mean);
    double mass = weight;
    Eigen::MatrixXd power = Eigen::MatrixXd::Identity(d, d);
    Eigen::MatrixXd result = weight * power;
    for (int n = 1; 1.0 - mass > 1e-17 && n < 200; ++n) {
        power = power * jump;
        weight *= mean / n;
        mass += weight;
        result += weight * power;
    }
    for (int s = 0; s < squarings; ++s) result = result * result;
    return result;
}

}  // namespace detail

/// exp(elapsed·Λ). Closed form for two states, uniformization otherwise.
inline Eigen::MatrixXd transition_matrix(const GeneratorMatrix& gen, double elapsed) {
    if (!(elapsed >= 0.0)) throw DomainError("transition_matrix: elapsed time must be non-negative");
    if (gen.dim() == 2) {
        const double a = gen.rate(Regime{1}, Regime{2});
        const double b = gen.rate(Regime{2}, Regime{1});
        const double total = a + b;
        Eigen::MatrixXd p(2, 2);
        if (total == 0.0) return Eigen::MatrixXd::Identity(2, 2);
        const double decay = std::exp(-total * elapsed);
        p(0, 0) = (b + a * decay) / total;
        p(0, 1) = 1.0 - p(0, 0);
        p(1, 1) = (a + b * decay) / total;
        p(1, 0) = 1.0 - p(1, 1);
        return p;
    }
    return detail::uniformized_exponential(gen.matrix(), elapsed);
}

/// Jump-counting processes of a regime path, sampled on a grid:
///   J^{ij}(t_k)  jumps i→j up to t_k,
///   Φ_j(t_k)     jumps into j,
///   λ_j(t_k)     compensator Σ_{i≠j} λ_ij · (time spent in i up to t_k).
class ChainIncrements {
public:
    ChainIncrements(std::size_t dim, std::size_t points)
        : dim_(dim), points_(points), pair_(dim * dim * points, 0.0), into_(dim * points, 0.0),
          comp_(dim * points, 0.0) {}

    std::size_t dim() const noexcept { return dim_; }
    std::size_t points() const noexcept { return points_; }

    double jumps(Regime i, Regime j, std::size_t k) const { return pair_[(i.slot() * dim_ + j.slot()) * points_ + k]; }
    double into(Regime j, std::size_t k) const { return into_[j.slot() * points_ + k]; }
    double compensator(Regime j, std::size_t k) const { return comp_[j.slot() * points_ + k]; }
    /// Φ̃_j(t_k) = Φ_j(t_k) − λ_j(t_k).
    double compensated(Regime j, std::size_t k) const { return into(j, k) - compensator(j, k); }

private:
    friend ChainIncrements chain_increments(const RegimePath&, const GeneratorMatrix&, const TimeGrid&);

    std::size_t dim_;
    std::size_t points_;
    std::vector<double> pair_;
    std::vector<double> into_;
    std::vector<double> comp_;
};

inline ChainIncrements chain_increments(const RegimePath& path, const GeneratorMatrix& gen, const TimeGrid& grid) {
    gen.require(path.initial_state());
    if (grid.horizon() < path.horizon())
        throw ValidationError("chain_increments: grid does not cover the path horizon");
    const std::size_t d = gen.dim();
    const std::size_t m = grid.size();
    ChainIncrements out(d, m);

    std::vector<double> occupation(d, 0.0);
    std::vector<double> counts(d * d, 0.0);
    Regime cur = path.initial_state();
    double clock = 0.0;
    std::size_t next_event = 0;
    const auto& events = path.events();

    for (std::size_t k = 0; k < m; ++k) {
        const double t = grid[k];
        while (next_event < events.size() && events[next_event].time <= t) {
            const auto& e = events[next_event++];
            occupation[cur.slot()] += e.time - clock;
            clock = e.time;
            counts[e.from.slot() * d + e.to.slot()] += 1.0;
            cur = e.to;
        }
        occupation[cur.slot()] += t - clock;
        clock = t;

        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) out.pair_[(i * d + j) * m + k] = counts[i * d + j];
        for (std::size_t j = 0; j < d; ++j) {
            double into = 0.0;
            double comp = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                if (i == j) continue;
                into += counts[i * d + j];
                comp += gen.matrix()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * occupation[i];
            }
            out.into_[j * m + k] = into;
            out.comp_[j * m + k] = comp;
        }
    }
    return out;
}

}  // namespace rsmp
