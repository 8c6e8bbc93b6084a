#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace rsmp {

/// Sum with a fixed binary tree shape, so the result depends only on the order of the
/// input and not on how the values were produced.
inline double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 8) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

struct Estimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t n_paths = 0;
    std::pair<double, double> ci95{0.0, 0.0};
    std::size_t clamp_events = 0;
    std::vector<std::string> warnings;

    static Estimate from_moments(double mean, double std_error, std::size_t n) {
        Estimate e;
        e.mean = mean;
        e.std_error = std_error;
        e.n_paths = n;
        e.ci95 = {mean - 1.96 * std_error, mean + 1.96 * std_error};
        return e;
    }

    /// |mean| in units of std_error, with an absolute floor for exact zeros.
    bool within(double sigmas, double floor = 0.0) const {
        return std::abs(mean) <= sigmas * std_error + floor;
    }
};

/// Sample mean and standard error (n−1 denominator) of per-path values.
inline Estimate estimate_from(std::span<const double> values) {
    const std::size_t n = values.size();
    if (n == 0) return {};
    const double mean = pairwise_sum(values) / static_cast<double>(n);
    if (n == 1) return Estimate::from_moments(mean, 0.0, 1);
    std::vector<double> sq(n);
    for (std::size_t i = 0; i < n; ++i) sq[i] = (values[i] - mean) * (values[i] - mean);
    const double var = pairwise_sum(sq) / static_cast<double>(n - 1);
    return Estimate::from_moments(mean, std::sqrt(var / static_cast<double>(n)), n);
}

/// FNV-1a, used to stamp artifacts with the configuration that produced them.
inline std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xF];
    return s;
}

/// {name, mean, se, ci95, n, seed, config_hash}
inline nlohmann::ordered_json to_json(const std::string& name, const Estimate& e, std::uint64_t seed,
                                      const std::string& config_hash) {
    nlohmann::ordered_json j;
    j["name"] = name;
    j["mean"] = e.mean;
    j["se"] = e.std_error;
    j["ci95"] = {e.ci95.first, e.ci95.second};
    j["n"] = e.n_paths;
    j["seed"] = seed;
    j["config_hash"] = config_hash;
    if (e.clamp_events) j["clamp_events"] = e.clamp_events;
    if (!e.warnings.empty()) j["warnings"] = e.warnings;
    return j;
}

}  // namespace rsmp
