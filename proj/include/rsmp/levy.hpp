#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "rsmp/errors.hpp"
#include "rsmp/regime.hpp"
#include "rsmp/rng.hpp"

namespace rsmp {

namespace detail {

/// Gauss–Legendre nodes and weights on [-1, 1], Newton iteration on P_n.
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre(std::size_t n) {
    std::vector<double> x(n), w(n);
    for (std::size_t i = 0; i < (n + 1) / 2; ++i) {
        double z = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (static_cast<double>(n) + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = 0.0;
            for (std::size_t j = 1; j <= n; ++j) {
                const double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p2) / static_cast<double>(j);
            }
            dp = static_cast<double>(n) * (z * p0 - p1) / (z * z - 1.0);
            const double dz = p0 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-16) break;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = w[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    return {x, w};
}

}  // namespace detail

/// Distribution of a jump size ζ ∈ ℝ∖{0}. Carries a sampler and a quadrature rule
/// (exact for atoms, 24-point Gauss–Legendre for uniform laws) used for ∫ F(ζ) ν(dζ).
class JumpLaw {
public:
    enum class Kind { atoms, uniform };

    static JumpLaw point(double size) { return discrete({size}, {1.0}); }

    static JumpLaw discrete(std::vector<double> sizes, std::vector<double> probabilities) {
        if (sizes.empty() || sizes.size() != probabilities.size())
            throw ValidationError("jump law: sizes and probabilities must be non-empty and of equal length");
        double total = 0.0;
        for (std::size_t i = 0; i < sizes.size(); ++i) {
            if (sizes[i] == 0.0 || !std::isfinite(sizes[i])) throw ValidationError("jump law: sizes must be finite and non-zero");
            if (!(probabilities[i] >= 0.0)) throw ValidationError("jump law: probabilities must be non-negative");
            total += probabilities[i];
        }
        if (std::abs(total - 1.0) > 1e-12) throw ValidationError("jump law: probabilities must sum to 1");
        JumpLaw law;
        law.kind_ = Kind::atoms;
        law.nodes_ = std::move(sizes);
        law.weights_ = std::move(probabilities);
        law.cumulative_.resize(law.weights_.size());
        std::partial_sum(law.weights_.begin(), law.weights_.end(), law.cumulative_.begin());
        return law;
    }

    static JumpLaw uniform(double lo, double hi) {
        if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi))
            throw ValidationError("jump law: uniform bounds must satisfy lo < hi");
        if (lo <= 0.0 && hi >= 0.0) throw ValidationError("jump law: uniform support must exclude 0");
        JumpLaw law;
        law.kind_ = Kind::uniform;
        law.lo_ = lo;
        law.hi_ = hi;
        auto [x, w] = detail::gauss_legendre(24);
        for (std::size_t i = 0; i < x.size(); ++i) {
            law.nodes_.push_back(0.5 * (lo + hi) + 0.5 * (hi - lo) * x[i]);
            law.weights_.push_back(0.5 * w[i]);
        }
        return law;
    }

    Kind kind() const noexcept { return kind_; }

    double sample(Engine& rng) const {
        if (kind_ == Kind::uniform) {
            double z = 0.0;
            while (z == 0.0) z = std::uniform_real_distribution<double>(lo_, hi_)(rng);
            return z;
        }
        const double v = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), v);
        const auto i = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()), nodes_.size() - 1);
        return nodes_[i];
    }

    /// E[fn(ζ)].
    template <class F>
    double expectation(F&& fn) const {
        double s = 0.0;
        for (std::size_t i = 0; i < nodes_.size(); ++i) s += weights_[i] * fn(nodes_[i]);
        return s;
    }

    const std::vector<double>& nodes() const noexcept { return nodes_; }
    const std::vector<double>& weights() const noexcept { return weights_; }
    double lower() const noexcept { return lo_; }
    double upper() const noexcept { return hi_; }

private:
    JumpLaw() = default;

    Kind kind_ = Kind::atoms;
    std::vector<double> nodes_;
    std::vector<double> weights_;
    std::vector<double> cumulative_;
    double lo_ = 0.0;
    double hi_ = 0.0;
};

/// Finite-activity Lévy measures ν_i(dζ) = intensity_i · law_i(dζ), one per regime.
class LevyMeasureSpec {
public:
    struct Component {
        double intensity;
        JumpLaw law;
    };

    explicit LevyMeasureSpec(std::vector<Component> components) : components_(std::move(components)) {
        if (components_.empty()) throw ValidationError("Lévy specification needs at least one regime");
        for (const auto& c : components_)
            if (!(c.intensity >= 0.0) || !std::isfinite(c.intensity))
                throw ValidationError("Lévy intensities must be finite and non-negative");
    }

    static LevyMeasureSpec none(std::size_t regimes) {
        return LevyMeasureSpec(std::vector<Component>(regimes, Component{0.0, JumpLaw::point(1.0)}));
    }

    static LevyMeasureSpec same_for_all(std::size_t regimes, double intensity, JumpLaw law) {
        return LevyMeasureSpec(std::vector<Component>(regimes, Component{intensity, std::move(law)}));
    }

    std::size_t regimes() const noexcept { return components_.size(); }
    const Component& at(Regime i) const {
        if (i.id < 1 || i.slot() >= components_.size())
            throw ValidationError("Lévy specification has no regime " + std::to_string(i.id));
        return components_[i.slot()];
    }
    double intensity(Regime i) const { return at(i).intensity; }

    /// ∫ fn(ζ) ν_i(dζ).
    template <class F>
    double integrate(Regime i, F&& fn) const {
        const auto& c = at(i);
        if (c.intensity == 0.0) return 0.0;
        return c.intensity * c.law.expectation(std::forward<F>(fn));
    }

    /// m2_i = ∫ ζ² ν_i(dζ).
    double second_moment(Regime i) const {
        return integrate(i, [](double z) { return z * z; });
    }

    bool regime_independent() const {
        for (const auto& c : components_) {
            const auto& f = components_.front();
            if (c.intensity != f.intensity || c.law.nodes() != f.law.nodes() || c.law.weights() != f.law.weights())
                return false;
        }
        return true;
    }

private:
    std::vector<Component> components_;
};

}  // namespace rsmp
