#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "rsmp/grid.hpp"
#include "rsmp/levy.hpp"
#include "rsmp/parallel.hpp"
#include "rsmp/regime.hpp"
#include "rsmp/rng.hpp"

namespace rsmp {

/// Everything a scenario needs except the seed.
struct ScenarioSpec {
    TimeGrid grid;
    GeneratorMatrix generator;
    LevyMeasureSpec levy;
    Regime initial_regime{1};
};

struct JumpEvent {
    double time;
    double mark;
    Regime regime;  ///< α(time−), the regime whose measure produced the event

    bool operator==(const JumpEvent&) const = default;
};

/// One Monte Carlo scenario: Brownian increments on the grid, Markov-modulated Poisson
/// events and the regime path. Controls never enter here, so the same bundle can drive
/// any number of controls (common random numbers).
class PathBundle {
public:
    PathBundle(std::shared_ptr<const ScenarioSpec> scenario, std::vector<double> brownian,
               std::vector<JumpEvent> jumps, RegimePath regime, std::uint64_t seed)
        : scenario_(std::move(scenario)), brownian_(std::move(brownian)), jumps_(std::move(jumps)),
          regime_(std::move(regime)), seed_(seed) {}

    const ScenarioSpec& scenario() const noexcept { return *scenario_; }
    const std::shared_ptr<const ScenarioSpec>& scenario_ptr() const noexcept { return scenario_; }
    const TimeGrid& grid() const noexcept { return scenario_->grid; }
    const std::vector<double>& brownian_increments() const noexcept { return brownian_; }
    const std::vector<JumpEvent>& jump_events() const noexcept { return jumps_; }
    const RegimePath& regime() const noexcept { return regime_; }
    std::uint64_t seed() const noexcept { return seed_; }

    /// B(t_k) from the cumulative increments.
    double brownian_at(std::size_t k) const {
        double b = 0.0;
        for (std::size_t i = 0; i < k; ++i) b += brownian_[i];
        return b;
    }

    bool operator==(const PathBundle& o) const {
        return grid() == o.grid() && brownian_ == o.brownian_ && jumps_ == o.jumps_ && regime_ == o.regime_ &&
               seed_ == o.seed_;
    }

private:
    std::shared_ptr<const ScenarioSpec> scenario_;
    std::vector<double> brownian_;
    std::vector<JumpEvent> jumps_;
    RegimePath regime_;
    std::uint64_t seed_;
};

inline PathBundle generate_bundle(const std::shared_ptr<const ScenarioSpec>& scenario, std::uint64_t seed) {
    const auto& grid = scenario->grid;
    const auto& gen = scenario->generator;
    const auto& levy = scenario->levy;
    if (levy.regimes() != gen.dim()) throw ValidationError("Lévy specification and generator disagree on regime count");
    const double horizon = grid.horizon();

    Engine regime_rng = make_engine(seed, Substream::regime);
    RegimePath path = sample_regime_path(gen, scenario->initial_regime, horizon, regime_rng);

    // Poisson events regime by regime over the constancy intervals; restarting the
    // exponential clock at each switch is exact by memorylessness.
    Engine poisson_rng = make_engine(seed, Substream::poisson);
    std::vector<JumpEvent> jumps;
    Regime cur = path.initial_state();
    double start = 0.0;
    auto fill = [&](double end) {
        const auto& comp = levy.at(cur);
        if (comp.intensity <= 0.0) return;
        std::exponential_distribution<double> wait(comp.intensity);
        double t = start;
        for (;;) {
            t += wait(poisson_rng);
            if (t > end) break;
            jumps.push_back({t, comp.law.sample(poisson_rng), cur});
        }
    };
    for (const auto& e : path.events()) {
        fill(e.time);
        start = e.time;
        cur = e.to;
    }
    fill(horizon);

    Engine brownian_rng = make_engine(seed, Substream::brownian);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> dB(grid.steps());
    for (std::size_t k = 0; k < dB.size(); ++k) dB[k] = std::sqrt(grid.dt(k)) * normal(brownian_rng);

    return PathBundle(scenario, std::move(dB), std::move(jumps), std::move(path), seed);
}

inline PathBundle generate_bundle(const ScenarioSpec& spec, std::uint64_t seed) {
    return generate_bundle(std::make_shared<const ScenarioSpec>(spec), seed);
}

/// Bundles 0..n-1 seeded by path_seed(master, k).
inline std::vector<PathBundle> generate_bundles(const ScenarioSpec& spec, std::size_t n, std::uint64_t master_seed,
                                                unsigned threads = default_threads()) {
    auto scenario = std::make_shared<const ScenarioSpec>(spec);
    std::vector<std::unique_ptr<PathBundle>> slots(n);
    parallel_for(n, threads, [&](std::size_t k) {
        slots[k] = std::make_unique<PathBundle>(generate_bundle(scenario, path_seed(master_seed, k)));
    });
    std::vector<PathBundle> out;
    out.reserve(n);
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

}  // namespace rsmp
