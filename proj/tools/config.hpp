#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rsmp/rsmp.hpp"

namespace rsmp::cli {

using Json = nlohmann::ordered_json;

/// Every accepted key with its default. A user config may only contain keys that
/// appear here; null defaults mark optional values.
inline Json default_config() {
    return Json::parse(R"({
  "preset": "application1",
  "grid": {"horizon": 1.0, "steps": 200},
  "chain": {"generator": [[-1.0, 1.0], [1.0, -1.0]], "initial_regime": 1},
  "jumps": {"intensity": 0.0, "law": {"type": "point", "size": 1.0, "lo": null, "hi": null}},
  "application1": {
    "c1": [-1.0, 0.0], "c2": [0.0, -0.5], "c3": [0.0, 1.0], "c4": [0.5, 1.0],
    "sigma": 1.0, "gamma": 0.0
  },
  "application2": {
    "x0": 1.0, "mu": [0.05, 0.02], "sigma": [0.2, 0.3], "gamma": 0.0,
    "c1": 0.1, "c2": 0.2, "c": 0.5, "c0": 1.0
  },
  "control": {"kind": "optimal", "value": 0.0, "scale": 1.0, "bounds": null},
  "mc": {"paths": 20000, "seed": 1, "ell": 0.001},
  "verifier": {"buckets": 16, "sigmas": 3.0, "floor": 1e-12, "conditioning": "full"},
  "sweep": {"deltas": [-0.2, -0.1, 0.0, 0.1, 0.2]},
  "closed_form": {"points": 11},
  "bsde": {"scheme": "explicit", "degree": 2, "surface_paths": 10},
  "simulate": {"paths": 5}
})");
}

namespace detail {

inline bool same_kind(const Json& def, const Json& val) {
    if (def.is_null()) return true;
    if (def.is_number()) return val.is_number();
    return def.type() == val.type();
}

inline void merge_strict(Json& into, const Json& from, const std::string& path) {
    if (!from.is_object()) throw ConfigurationError("config section '" + path + "' must be an object");
    for (const auto& [key, value] : from.items()) {
        const std::string where = path.empty() ? key : path + "." + key;
        if (!into.contains(key)) throw ConfigurationError("unknown config key '" + where + "'");
        auto& slot = into[key];
        if (!same_kind(slot, value)) throw ConfigurationError("config key '" + where + "' has the wrong type");
        if (slot.is_object())
            merge_strict(slot, value, where);
        else
            slot = value;
    }
}

inline double number(const Json& j, const char* where) {
    if (!j.is_number()) throw ConfigurationError(std::string("config key '") + where + "' must be a number");
    return j.get<double>();
}

inline std::vector<double> numbers(const Json& j, const char* where, std::size_t size) {
    if (!j.is_array() || j.size() != size)
        throw ConfigurationError(std::string("config key '") + where + "' must be an array of " + std::to_string(size) +
                                 " numbers");
    std::vector<double> out;
    for (const auto& v : j) out.push_back(number(v, where));
    return out;
}

inline std::size_t count(const Json& j, const char* where) {
    if (!j.is_number_integer() || j.get<long long>() <= 0)
        throw ConfigurationError(std::string("config key '") + where + "' must be a positive integer");
    return static_cast<std::size_t>(j.get<long long>());
}

}  // namespace detail

inline Json resolve_config(const Json& user) {
    Json cfg = default_config();
    detail::merge_strict(cfg, user, "");
    return cfg;
}

inline std::string config_hash(const Json& resolved) { return hex64(fnv1a(resolved.dump())); }

/// Typed view of a resolved configuration.
struct Experiment {
    Json resolved;
    std::string preset;
    std::shared_ptr<const ScenarioSpec> scenario;
    std::optional<LqSpec> lq;
    std::optional<RecursiveUtilityParams> utility;
    Problem problem;
    ControlPolicy control = ControlPolicy::constant(0.0);
    std::size_t paths = 0;
    std::uint64_t seed = 0;
    double ell = 1e-3;
    StationarityOptions verifier;
    BsdeOptions bsde;
    std::vector<double> deltas;
    std::size_t closed_form_points = 0;
    std::size_t surface_paths = 0;
    std::size_t simulate_paths = 0;
};

inline GeneratorMatrix build_generator(const Json& j) {
    if (!j.is_array() || j.empty()) throw ConfigurationError("config key 'chain.generator' must be a square matrix");
    const auto d = static_cast<Eigen::Index>(j.size());
    Eigen::MatrixXd m(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
        const auto row = detail::numbers(j[static_cast<std::size_t>(i)], "chain.generator", j.size());
        for (Eigen::Index k = 0; k < d; ++k) m(i, k) = row[static_cast<std::size_t>(k)];
    }
    try {
        return GeneratorMatrix(m);
    } catch (const ValidationError& e) {
        throw ConfigurationError(std::string("chain.generator: ") + e.what());
    }
}

inline JumpLaw build_law(const Json& j) {
    const auto type = j.at("type").get<std::string>();
    try {
        if (type == "point") return JumpLaw::point(detail::number(j.at("size"), "jumps.law.size"));
        if (type == "uniform")
            return JumpLaw::uniform(detail::number(j.at("lo"), "jumps.law.lo"), detail::number(j.at("hi"), "jumps.law.hi"));
    } catch (const ValidationError& e) {
        throw ConfigurationError(std::string("jumps.law: ") + e.what());
    }
    throw ConfigurationError("config key 'jumps.law.type' must be 'point' or 'uniform', got '" + type + "'");
}

inline ValueSet build_bounds(const Json& j) {
    if (j.is_null()) return ValueSet::reals();
    const auto b = detail::numbers(j, "control.bounds", 2);
    if (!(b[0] <= b[1])) throw ConfigurationError("config key 'control.bounds' must satisfy lo <= hi");
    return ValueSet::interval(b[0], b[1]);
}

inline Experiment build_experiment(const Json& resolved) {
    Experiment ex;
    ex.resolved = resolved;
    ex.preset = resolved.at("preset").get<std::string>();
    if (ex.preset != "application1" && ex.preset != "application2")
        throw ConfigurationError("config key 'preset' must be 'application1' or 'application2', got '" + ex.preset + "'");

    const auto& grid = resolved.at("grid");
    const double horizon = detail::number(grid.at("horizon"), "grid.horizon");
    if (!(horizon > 0.0)) throw ConfigurationError("config key 'grid.horizon' must be positive");
    const std::size_t steps = detail::count(grid.at("steps"), "grid.steps");
    auto generator = build_generator(resolved.at("chain").at("generator"));
    const auto init = static_cast<int>(detail::count(resolved.at("chain").at("initial_regime"), "chain.initial_regime"));
    if (!generator.contains(Regime{init})) throw ConfigurationError("config key 'chain.initial_regime' is out of range");
    const double intensity = detail::number(resolved.at("jumps").at("intensity"), "jumps.intensity");
    if (!(intensity >= 0.0)) throw ConfigurationError("config key 'jumps.intensity' must be non-negative");
    const auto levy = LevyMeasureSpec::same_for_all(generator.dim(), intensity, build_law(resolved.at("jumps").at("law")));
    ex.scenario = std::make_shared<const ScenarioSpec>(
        ScenarioSpec{TimeGrid::uniform(horizon, steps), generator, levy, Regime{init}});
    if (generator.dim() != 2) throw ConfigurationError("config key 'chain.generator': both presets use two regimes");

    const auto& control = resolved.at("control");
    const auto kind = control.at("kind").get<std::string>();
    const ValueSet bounds = build_bounds(control.at("bounds"));

    if (ex.preset == "application1") {
        const auto& a = resolved.at("application1");
        const double sigma = detail::number(a.at("sigma"), "application1.sigma");
        const double gamma_scale = detail::number(a.at("gamma"), "application1.gamma");
        LqSpec spec{detail::numbers(a.at("c1"), "application1.c1", 2),
                    detail::numbers(a.at("c2"), "application1.c2", 2),
                    detail::numbers(a.at("c3"), "application1.c3", 2),
                    detail::numbers(a.at("c4"), "application1.c4", 2),
                    [sigma](double) { return sigma; },
                    {},
                    levy,
                    generator,
                    horizon,
                    bounds};
        if (gamma_scale != 0.0) spec.gamma = [gamma_scale](double, double z) { return gamma_scale * z; };
        try {
            spec.validate();
        } catch (const ValidationError& e) {
            throw ConfigurationError(std::string("application1: ") + e.what());
        }
        const auto m = application1_preset(spec);
        ex.problem = Problem{m.forward, m.performance, m.bsde, 0.0};
        ex.lq = spec;
    } else {
        const auto& a = resolved.at("application2");
        auto constant = [](double v) { return TimeFunction([v](double) { return v; }); };
        const double gamma_scale = detail::number(a.at("gamma"), "application2.gamma");
        RecursiveUtilityParams p{detail::number(a.at("x0"), "application2.x0"),
                                 detail::numbers(a.at("mu"), "application2.mu", 2),
                                 detail::numbers(a.at("sigma"), "application2.sigma", 2),
                                 {},
                                 levy,
                                 constant(detail::number(a.at("c1"), "application2.c1")),
                                 constant(detail::number(a.at("c2"), "application2.c2")),
                                 constant(detail::number(a.at("c"), "application2.c")),
                                 constant(detail::number(a.at("c0"), "application2.c0"))};
        if (gamma_scale != 0.0) p.gamma = [gamma_scale](double, double z) { return gamma_scale * z; };
        try {
            const auto m = application2_preset(p);
            PerformanceModel perf;
            perf.utility = [](double y) { return y; };
            perf.utility_y = [](double) { return 1.0; };
            perf.utility_slope = 1.0;
            ex.problem = Problem{m.forward, perf, m.bsde, m.x0};
        } catch (const ValidationError& e) {
            throw ConfigurationError(std::string("application2: ") + e.what());
        }
        ex.utility = p;
    }

    const double value = detail::number(control.at("value"), "control.value");
    const double factor = detail::number(control.at("scale"), "control.scale");
    if (kind == "constant") {
        ex.control = ControlPolicy([value](const InfoSnapshot&) { return value; }, InfoLevel::deterministic, bounds,
                                   "constant");
    } else if (kind == "optimal") {
        if (!ex.lq) throw ConfigurationError("config key 'control.kind': 'optimal' needs preset application1");
        ex.control = scale(lq_optimal_policy(*ex.lq), factor);
    } else {
        throw ConfigurationError("config key 'control.kind' must be 'optimal' or 'constant', got '" + kind + "'");
    }

    const auto& mc = resolved.at("mc");
    ex.paths = detail::count(mc.at("paths"), "mc.paths");
    if (!mc.at("seed").is_number_integer() || mc.at("seed").get<long long>() < 0)
        throw ConfigurationError("config key 'mc.seed' must be a non-negative integer");
    ex.seed = mc.at("seed").get<std::uint64_t>();
    ex.ell = detail::number(mc.at("ell"), "mc.ell");
    if (!(ex.ell > 0.0)) throw ConfigurationError("config key 'mc.ell' must be positive");

    const auto& v = resolved.at("verifier");
    ex.verifier.buckets = detail::count(v.at("buckets"), "verifier.buckets");
    ex.verifier.sigmas = detail::number(v.at("sigmas"), "verifier.sigmas");
    ex.verifier.floor = detail::number(v.at("floor"), "verifier.floor");
    const auto cond = v.at("conditioning").get<std::string>();
    if (cond == "full")
        ex.verifier.conditioning = Conditioning::full;
    else if (cond == "regime_only")
        ex.verifier.conditioning = Conditioning::regime_only;
    else if (cond == "deterministic")
        ex.verifier.conditioning = Conditioning::deterministic;
    else
        throw ConfigurationError("config key 'verifier.conditioning' must be 'full', 'regime_only' or 'deterministic'");

    for (const auto& d : resolved.at("sweep").at("deltas")) ex.deltas.push_back(detail::number(d, "sweep.deltas"));
    ex.closed_form_points = detail::count(resolved.at("closed_form").at("points"), "closed_form.points");

    const auto& b = resolved.at("bsde");
    const auto scheme = b.at("scheme").get<std::string>();
    if (scheme == "explicit")
        ex.bsde.scheme = BsdeScheme::explicit_euler;
    else if (scheme == "implicit")
        ex.bsde.scheme = BsdeScheme::implicit_picard;
    else
        throw ConfigurationError("config key 'bsde.scheme' must be 'explicit' or 'implicit'");
    ex.bsde.basis_degree = detail::count(b.at("degree"), "bsde.degree");
    ex.surface_paths = detail::count(b.at("surface_paths"), "bsde.surface_paths");
    ex.simulate_paths = detail::count(resolved.at("simulate").at("paths"), "simulate.paths");
    return ex;
}

}  // namespace rsmp::cli
