#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "rsmp/errors.hpp"

namespace rsmp {

/// Strictly increasing simulation times 0 = t_0 < t_1 < ... < t_M = T.
class TimeGrid {
public:
    explicit TimeGrid(std::vector<double> points) : points_(std::move(points)) {
        if (points_.size() < 2) throw ValidationError("time grid needs at least two points");
        if (points_.front() != 0.0) throw ValidationError("time grid must start at 0");
        for (std::size_t k = 1; k < points_.size(); ++k) {
            if (!(points_[k] > points_[k - 1]) || !std::isfinite(points_[k]))
                throw ValidationError("time grid must be strictly increasing and finite (index " +
                                      std::to_string(k) + ")");
        }
    }

    static TimeGrid uniform(double horizon, std::size_t steps) {
        if (!(horizon > 0.0)) throw ValidationError("horizon must be positive");
        if (steps == 0) throw ValidationError("grid needs at least one step");
        std::vector<double> pts(steps + 1);
        for (std::size_t k = 0; k <= steps; ++k)
            pts[k] = horizon * static_cast<double>(k) / static_cast<double>(steps);
        pts.back() = horizon;
        return TimeGrid(std::move(pts));
    }

    std::size_t steps() const noexcept { return points_.size() - 1; }
    std::size_t size() const noexcept { return points_.size(); }
    double horizon() const noexcept { return points_.back(); }
    double operator[](std::size_t k) const { return points_[k]; }
    double dt(std::size_t k) const { return points_[k + 1] - points_[k]; }
    const std::vector<double>& points() const noexcept { return points_; }

    /// Index k of the step [t_k, t_{k+1}) containing t; the last step also owns T.
    std::size_t step_containing(double t) const {
        if (t <= points_.front()) return 0;
        if (t >= points_.back()) return steps() - 1;
        auto it = std::upper_bound(points_.begin(), points_.end(), t);
        return static_cast<std::size_t>(it - points_.begin()) - 1;
    }

    bool operator==(const TimeGrid&) const = default;

private:
    std::vector<double> points_;
};

}  // namespace rsmp
