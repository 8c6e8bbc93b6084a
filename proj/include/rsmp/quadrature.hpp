#pragma once

#include <cstddef>

#include "rsmp/levy.hpp"

namespace rsmp {

/// Composite 24-point Gauss–Legendre rule on [a, b].
template <class F>
double integrate(F&& fn, double a, double b, std::size_t panels = 32) {
    if (a == b) return 0.0;
    static const auto rule = detail::gauss_legendre(24);
    const auto& [x, w] = rule;
    const double h = (b - a) / static_cast<double>(panels);
    double total = 0.0;
    for (std::size_t p = 0; p < panels; ++p) {
        const double mid = a + (static_cast<double>(p) + 0.5) * h;
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) s += w[i] * fn(mid + 0.5 * h * x[i]);
        total += 0.5 * h * s;
    }
    return total;
}

}  // namespace rsmp
