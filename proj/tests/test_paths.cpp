#include <cmath>
#include <memory>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "rsmp/bundle.hpp"
#include "rsmp/estimate.hpp"
#include "rsmp/levy.hpp"
#include "rsmp/model.hpp"
#include "rsmp/simulate.hpp"

using namespace rsmp;

namespace {

ScenarioSpec scenario(double horizon, std::size_t steps, GeneratorMatrix gen, LevyMeasureSpec levy,
                      Regime init = Regime{1}) {
    return ScenarioSpec{TimeGrid::uniform(horizon, steps), std::move(gen), std::move(levy), init};
}

ForwardModel linear_in_u(double sigma, double jump_scale) {
    ForwardModel m;
    m.vol = [sigma](double, double, Regime, double u) { return u * sigma; };
    m.vol_u = [sigma](double, double, Regime, double) { return sigma; };
    if (jump_scale != 0.0) {
        m.jump = [jump_scale](double, double, Regime, double u, double z) { return u * jump_scale * z; };
        m.jump_u = [jump_scale](double, double, Regime, double, double z) { return jump_scale * z; };
    }
    return m;
}

}  // namespace

TEST(JumpLaw, Validation) {
    EXPECT_THROW(JumpLaw::point(0.0), ValidationError);
    EXPECT_THROW(JumpLaw::discrete({1.0, 2.0}, {0.5}), ValidationError);
    EXPECT_THROW(JumpLaw::discrete({1.0, 2.0}, {0.5, 0.6}), ValidationError);
    EXPECT_THROW(JumpLaw::uniform(-1.0, 1.0), ValidationError);
    EXPECT_THROW(JumpLaw::uniform(2.0, 1.0), ValidationError);
    EXPECT_THROW(LevyMeasureSpec({{-1.0, JumpLaw::point(1.0)}}), ValidationError);
}

TEST(JumpLaw, QuadratureMoments) {
    const auto u = JumpLaw::uniform(0.5, 1.5);
    EXPECT_NEAR(u.expectation([](double z) { return z * z; }), (1.5 * 1.5 * 1.5 - 0.125) / 3.0, 1e-14);
    const auto d = JumpLaw::discrete({-1.0, 2.0}, {0.25, 0.75});
    EXPECT_NEAR(d.expectation([](double z) { return z; }), 1.25, 1e-15);
    const auto levy = LevyMeasureSpec::same_for_all(2, 3.0, d);
    EXPECT_NEAR(levy.second_moment(Regime{2}), 3.0 * (0.25 + 3.0), 1e-14);
    EXPECT_TRUE(levy.regime_independent());
    EXPECT_THROW(levy.at(Regime{3}), ValidationError);
}

TEST(JumpLaw, SamplerNeverReturnsZero) {
    Engine rng(1);
    const auto u = JumpLaw::uniform(1e-300, 1e-299);
    for (int i = 0; i < 1000; ++i) EXPECT_NE(u.sample(rng), 0.0);
}

TEST(Bundle, NoIntensityMeansNoJumps) {
    const auto spec = scenario(1.0, 10, GeneratorMatrix::two_state(1, 1), LevyMeasureSpec::none(2));
    for (const auto& b : generate_bundles(spec, 100, 5)) EXPECT_TRUE(b.jump_events().empty());
}

TEST(Bundle, PoissonMeanCount) {
    const auto spec =
        scenario(1.0, 4, GeneratorMatrix::frozen(2), LevyMeasureSpec::same_for_all(2, 2.0, JumpLaw::point(1.0)));
    const auto bundles = generate_bundles(spec, 100000, 17);
    std::vector<double> counts;
    for (const auto& b : bundles) counts.push_back(static_cast<double>(b.jump_events().size()));
    const auto e = estimate_from(counts);
    EXPECT_LT(std::abs(e.mean - 2.0), 3.0 * e.std_error);
}

TEST(Bundle, MarkovModulatedIntensity) {
    const LevyMeasureSpec levy({{0.0, JumpLaw::point(1.0)}, {5.0, JumpLaw::point(-1.0)}});
    const auto spec = scenario(2.0, 8, GeneratorMatrix::two_state(1.0, 1.0), levy);
    for (const auto& b : generate_bundles(spec, 2000, 3)) {
        for (const auto& e : b.jump_events()) {
            EXPECT_EQ(e.regime, 2);
            EXPECT_EQ(b.regime().state_before(e.time), 2);
            EXPECT_EQ(e.mark, -1.0);
        }
    }
}

TEST(Bundle, SameSeedSameBundle) {
    const auto spec = scenario(1.0, 20, GeneratorMatrix::two_state(1, 2),
                               LevyMeasureSpec::same_for_all(2, 3.0, JumpLaw::uniform(0.1, 0.5)));
    EXPECT_EQ(generate_bundle(spec, 99), generate_bundle(spec, 99));
    EXPECT_FALSE(generate_bundle(spec, 99) == generate_bundle(spec, 100));
    const auto a = generate_bundles(spec, 64, 7, 1);
    const auto b = generate_bundles(spec, 64, 7, 4);
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a[k], b[k]);
}

TEST(Bundle, BrownianIncrementVariance) {
    const auto spec = scenario(1.0, 4, GeneratorMatrix::frozen(2), LevyMeasureSpec::none(2));
    std::vector<double> sq;
    for (const auto& b : generate_bundles(spec, 50000, 1)) sq.push_back(b.brownian_increments()[1] * b.brownian_increments()[1]);
    const auto e = estimate_from(sq);
    EXPECT_LT(std::abs(e.mean - 0.25), 3.0 * e.std_error);
}

TEST(SimulateForward, ZeroCoefficientsKeepInitialValue) {
    const auto spec = scenario(1.0, 10, GeneratorMatrix::two_state(1, 1),
                               LevyMeasureSpec::same_for_all(2, 2.0, JumpLaw::point(1.0)));
    const auto b = generate_bundle(spec, 3);
    const auto t = simulate_forward(ForwardModel{}, ControlPolicy::constant(1.0), b, 2.5);
    for (double v : t.values) EXPECT_EQ(v, 2.5);
}

TEST(SimulateForward, ZeroControlInLqDynamics) {
    const auto spec = scenario(1.0, 10, GeneratorMatrix::two_state(1, 1),
                               LevyMeasureSpec::same_for_all(2, 2.0, JumpLaw::uniform(0.2, 1.0)));
    const auto b = generate_bundle(spec, 4);
    const auto t = simulate_forward(linear_in_u(1.0, 1.0), ControlPolicy::constant(0.0), b, 0.0);
    for (double v : t.values) EXPECT_EQ(v, 0.0);
}

TEST(SimulateForward, ConstantDriftIsExact) {
    ForwardModel m;
    m.drift = [](double, double, Regime, double) { return 1.0; };
    const ScenarioSpec spec{TimeGrid({0.0, 0.1, 0.35, 0.7, 1.0}), GeneratorMatrix::frozen(2), LevyMeasureSpec::none(2)};
    const auto t = simulate_forward(m, ControlPolicy::constant(0.0), generate_bundle(spec, 1), 0.0);
    EXPECT_NEAR(t.terminal(), 1.0, 1e-15);
    EXPECT_EQ(t.values.front(), 0.0);
}

TEST(SimulateForward, JumpsAndCompensatorAreExact) {
    ForwardModel m;
    m.jump = [](double, double, Regime, double, double z) { return z; };
    const auto spec =
        scenario(1.0, 3, GeneratorMatrix::frozen(2), LevyMeasureSpec::same_for_all(2, 2.0, JumpLaw::point(0.5)));
    for (const auto& b : generate_bundles(spec, 50, 8)) {
        const auto t = simulate_forward(m, ControlPolicy::constant(0.0), b, 0.0);
        EXPECT_NEAR(t.terminal(), 0.5 * static_cast<double>(b.jump_events().size()) - 1.0, 1e-12);
    }
}

TEST(SimulateForward, ChainTermExcludesCurrentState) {
    ForwardModel m;
    m.chain = [](double, double, Regime, double, Regime) { return 1.0; };
    const ScenarioSpec spec{TimeGrid::uniform(1.0, 4), GeneratorMatrix::two_state(2.0, 3.0), LevyMeasureSpec::none(2)};
    for (const auto& b : generate_bundles(spec, 50, 5)) {
        const auto t = simulate_forward(m, ControlPolicy::constant(0.0), b, 0.0);
        const auto inc = chain_increments(b.regime(), spec.generator, spec.grid);
        const double expected = inc.compensated(Regime{1}, 4) + inc.compensated(Regime{2}, 4);
        EXPECT_NEAR(t.terminal(), expected, 1e-12);
    }
}

TEST(SimulateForward, CompensatedJumpsHaveMeanZero) {
    const auto spec = scenario(1.0, 10, GeneratorMatrix::two_state(1, 1),
                               LevyMeasureSpec::same_for_all(2, 3.0, JumpLaw::uniform(0.5, 1.5)));
    ForwardModel m;
    m.jump = [](double, double, Regime, double, double z) { return z; };
    std::vector<double> v;
    for (const auto& b : generate_bundles(spec, 40000, 12))
        v.push_back(simulate_forward(m, ControlPolicy::constant(0.0), b, 0.0).terminal());
    const auto e = estimate_from(v);
    EXPECT_LT(std::abs(e.mean), 3.0 * e.std_error);
}

TEST(SimulateForward, DivergenceCarriesStep) {
    ForwardModel m;
    m.drift = [](double, double x, Regime, double) { return 1e3 * (1.0 + std::abs(x)); };
    const auto spec = scenario(1.0, 100, GeneratorMatrix::frozen(2), LevyMeasureSpec::none(2));
    try {
        simulate_forward(m, ControlPolicy::constant(0.0), generate_bundle(spec, 1), 1.0);
        FAIL();
    } catch (const SimulationDiverged& e) {
        EXPECT_LT(e.step(), 100u);
    }
}

TEST(SimulateForward, ClampingIsCounted) {
    const auto spec = scenario(1.0, 10, GeneratorMatrix::frozen(2), LevyMeasureSpec::none(2));
    const ControlPolicy p([](const InfoSnapshot&) { return 5.0; }, InfoLevel::deterministic, ValueSet::interval(-1, 1));
    const auto t = simulate_forward(linear_in_u(1.0, 0.0), p, generate_bundle(spec, 1), 0.0);
    EXPECT_EQ(t.clamp_events, 10u);
    for (double u : t.controls) EXPECT_EQ(u, 1.0);
}

TEST(SimulateForward, SeedDeterminism) {
    const auto spec = scenario(1.0, 50, GeneratorMatrix::two_state(1, 1),
                               LevyMeasureSpec::same_for_all(2, 2.0, JumpLaw::uniform(0.1, 0.4)));
    const auto a = simulate_forward(linear_in_u(1.0, 1.0), ControlPolicy::constant(0.3), generate_bundle(spec, 5), 0.0);
    const auto b = simulate_forward(linear_in_u(1.0, 1.0), ControlPolicy::constant(0.3), generate_bundle(spec, 5), 0.0);
    EXPECT_EQ(a.values, b.values);
}

TEST(SimulateForward, GridRefinementWeakSanity) {
    ForwardModel m;
    m.drift = [](double, double x, Regime i, double) { return i == 1 ? -x : 0.5; };
    m.vol = [](double, double, Regime, double) { return 0.3; };
    std::vector<double> coarse, fine;
    const auto gen = GeneratorMatrix::two_state(1.0, 2.0);
    const ScenarioSpec s1{TimeGrid::uniform(1.0, 20), gen, LevyMeasureSpec::none(2)};
    const ScenarioSpec s2{TimeGrid::uniform(1.0, 40), gen, LevyMeasureSpec::none(2)};
    for (const auto& b : generate_bundles(s1, 100000, 3))
        coarse.push_back(simulate_forward(m, ControlPolicy::constant(0), b, 1.0).terminal());
    for (const auto& b : generate_bundles(s2, 100000, 4))
        fine.push_back(simulate_forward(m, ControlPolicy::constant(0), b, 1.0).terminal());
    const auto c = estimate_from(coarse), f = estimate_from(fine);
    EXPECT_LT(std::abs(c.mean - f.mean), 3.0 * std::hypot(c.std_error, f.std_error) + 0.01);
}

TEST(SimulateVariational, ZeroDirection) {
    const auto spec = scenario(1.0, 10, GeneratorMatrix::two_state(1, 1),
                               LevyMeasureSpec::same_for_all(2, 2.0, JumpLaw::point(1.0)));
    const auto b = generate_bundle(spec, 2);
    const auto m = linear_in_u(1.0, 1.0);
    const auto base = simulate_forward(m, ControlPolicy::constant(0.4), b, 0.0);
    const auto x1 = simulate_variational(m, ControlPolicy::constant(0.4), ControlPolicy::constant(0.0), b, base);
    for (double v : x1.values) EXPECT_EQ(v, 0.0);
}

TEST(SimulateVariational, UnitDirectionIsBrownianPath) {
    const auto spec = scenario(1.0, 16, GeneratorMatrix::two_state(1, 1), LevyMeasureSpec::none(2));
    const auto b = generate_bundle(spec, 6);
    const auto m = linear_in_u(1.0, 0.0);
    const auto base = simulate_forward(m, ControlPolicy::constant(0.2), b, 0.0);
    const auto x1 = simulate_variational(m, ControlPolicy::constant(0.2), ControlPolicy::constant(1.0), b, base);
    for (std::size_t k = 0; k <= 16; ++k) EXPECT_NEAR(x1.values[k], b.brownian_at(k), 1e-14);
}

TEST(SimulateVariational, MatchesFiniteDifference) {
    ForwardModel m;
    m.drift = [](double, double x, Regime i, double u) { return -0.5 * x + u * (i == 1 ? 1.0 : 2.0); };
    m.drift_x = [](double, double, Regime, double) { return -0.5; };
    m.drift_u = [](double, double, Regime i, double) { return i == 1 ? 1.0 : 2.0; };
    m.vol = [](double, double x, Regime, double u) { return 0.2 * x + u; };
    m.vol_x = [](double, double, Regime, double) { return 0.2; };
    m.vol_u = [](double, double, Regime, double) { return 1.0; };
    m.jump = [](double, double x, Regime, double u, double z) { return z * (0.1 * x + u); };
    m.jump_x = [](double, double, Regime, double, double z) { return 0.1 * z; };
    m.jump_u = [](double, double, Regime, double, double z) { return z; };
    m.chain = [](double, double x, Regime, double u, Regime j) { return j == 2 ? 0.3 * x + u : -0.2 * u; };
    m.chain_x = [](double, double, Regime, double, Regime j) { return j == 2 ? 0.3 : 0.0; };
    m.chain_u = [](double, double, Regime, double, Regime j) { return j == 2 ? 1.0 : -0.2; };
    const auto spec = scenario(1.0, 50, GeneratorMatrix::two_state(1.0, 2.0),
                               LevyMeasureSpec::same_for_all(2, 2.0, JumpLaw::uniform(-0.5, -0.1)));
    const auto u = ControlPolicy::constant(0.7);
    const auto beta = ControlPolicy::bump(0.3, 1.0);
    const double ell = 1e-3;
    for (const auto& b : generate_bundles(spec, 20, 77)) {
        const auto base = simulate_forward(m, u, b, 1.0);
        const auto x1 = simulate_variational(m, u, beta, b, base);
        const double up = simulate_forward(m, perturb(u, beta, ell), b, 1.0).terminal();
        const double dn = simulate_forward(m, perturb(u, beta, -ell), b, 1.0).terminal();
        EXPECT_NEAR((up - dn) / (2 * ell), x1.terminal(), 1e-8);
    }
}

TEST(SimulateVariational, LinearInDirection) {
    const auto spec = scenario(1.0, 30, GeneratorMatrix::two_state(1, 1),
                               LevyMeasureSpec::same_for_all(2, 2.0, JumpLaw::uniform(0.1, 0.3)));
    const auto m = linear_in_u(1.3, 0.8);
    const auto u = ControlPolicy::constant(0.5);
    const auto b1 = ControlPolicy::bump(0.2, 1.0), b2 = ControlPolicy::bump(0.6, -2.0);
    const ControlPolicy both([&](const InfoSnapshot& s) { return b1.rule()(s) + b2.rule()(s); },
                             InfoLevel::deterministic);
    for (const auto& b : generate_bundles(spec, 10, 1)) {
        const auto base = simulate_forward(m, u, b, 0.0);
        const auto a = simulate_variational(m, u, b1, b, base);
        const auto c = simulate_variational(m, u, b2, b, base);
        const auto s = simulate_variational(m, u, both, b, base);
        for (std::size_t k = 0; k < s.values.size(); ++k) EXPECT_NEAR(s.values[k], a.values[k] + c.values[k], 1e-13);
    }
}

TEST(SimulateVariational, DirectionMayNotSeeMore) {
    const auto spec = scenario(1.0, 4, GeneratorMatrix::two_state(1, 1), LevyMeasureSpec::none(2));
    const auto b = generate_bundle(spec, 1);
    const auto m = linear_in_u(1.0, 0.0);
    const auto base = simulate_forward(m, ControlPolicy::constant(0.0), b, 0.0);
    EXPECT_THROW(simulate_variational(m, ControlPolicy::constant(0.0), ControlPolicy::bump(0.0, 1.0, Regime{1}), b, base),
                 ValidationError);
}

TEST(TrajectoryCsv, HeaderAndPrecision) {
    const auto spec = scenario(1.0, 3, GeneratorMatrix::frozen(2), LevyMeasureSpec::none(2));
    const auto t = simulate_forward(ForwardModel{}, ControlPolicy::constant(0), generate_bundle(spec, 1), 0.1);
    std::ostringstream os;
    write_trajectory_csv(os, t);
    EXPECT_EQ(os.str().substr(0, 11), "t,X,regime\n");
    EXPECT_NE(os.str().find("0.10000000000000001"), std::string::npos);
}
