#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace oracle {

/// exp(A) by scaling and squaring of a degree-20 Taylor polynomial.
inline Eigen::MatrixXd expm(const Eigen::MatrixXd& a) {
    const double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
    int s = 0;
    while (norm / std::pow(2.0, s) > 0.5) ++s;
    const Eigen::MatrixXd scaled = a / std::pow(2.0, s);
    Eigen::MatrixXd term = Eigen::MatrixXd::Identity(a.rows(), a.cols());
    Eigen::MatrixXd sum = term;
    for (int k = 1; k <= 20; ++k) {
        term = term * scaled / k;
        sum += term;
    }
    for (int i = 0; i < s; ++i) sum = sum * sum;
    return sum;
}

struct TwoStateLq {
    double c3[2];
    double c4[2];
    double l12;
    double l21;
};

/// C₄(i) + C₃(i)(T−t) + ∫ₜᵀ C₄(j,i)(λ_ij P_ii − λ_ji P_ij)(r−t) dr
///                    + ∫ₜᵀ∫ₜˢ C₃(j,i)(λ_ij P_ii − λ_ji P_ij)(r−t) dr ds,
/// with P from expm and both integrals by adaptive Gauss–Kronrod.
inline double gamma_quadrature(double t, double horizon, int regime, const TwoStateLq& c) {
    const int s = regime - 1, o = 1 - s;
    Eigen::MatrixXd q(2, 2);
    q << -c.l12, c.l12, c.l21, -c.l21;
    const double out_rate = s == 0 ? c.l12 : c.l21;
    const double in_rate = s == 0 ? c.l21 : c.l12;
    auto flow = [&](double r) {
        const Eigen::MatrixXd p = expm(q * (r - t));
        return out_rate * p(s, s) - in_rate * p(s, o);
    };
    using boost::math::quadrature::gauss_kronrod;
    const double c4d = c.c4[o] - c.c4[s];
    const double c3d = c.c3[o] - c.c3[s];
    if (horizon == t) return c.c4[s];
    const double single = gauss_kronrod<double, 31>::integrate(flow, t, horizon, 10, 1e-12);
    // ∫ₜᵀ∫ₜˢ f dr ds = ∫ₜᵀ (T−r) f(r) dr
    const double nested = gauss_kronrod<double, 31>::integrate([&](double r) { return (horizon - r) * flow(r); }, t,
                                                               horizon, 10, 1e-12);
    return c.c4[s] + c.c3[s] * (horizon - t) + c4d * single + c3d * nested;
}

/// Linear BSDE dY = −(c(t)Y + c₀(t))dt + dM, Y(T) = X(T) with E[X(T)] = x:
/// Y(0) = x·e^{∫₀ᵀc} + ∫₀ᵀ c₀(t) e^{∫₀ᵗc} dt.
template <class C, class C0>
double linear_bsde_y0(double x, C c, C0 c0, double horizon) {
    using boost::math::quadrature::gauss_kronrod;
    auto growth = [&](double up) { return up == 0.0 ? 0.0 : gauss_kronrod<double, 31>::integrate(c, 0.0, up, 10, 1e-12); };
    const double source =
        gauss_kronrod<double, 31>::integrate([&](double t) { return c0(t) * std::exp(growth(t)); }, 0.0, horizon, 10, 1e-12);
    return x * std::exp(growth(horizon)) + source;
}

/// J for the LQ model in a regime that never switches, constant control c, X(0)=0,
/// on a uniform grid of m steps with left Riemann sums. E[X(t)²] = c²Σt with Σ the
/// noise energy, so
///   J = Σ_k (C₁c + C₂c² + C₃c²Σt_k)Δt + C₄c²ΣT.
inline double lq_constant_control_value(double c, double energy, double c1, double c2, double c3, double c4,
                                        double horizon, std::size_t m) {
    const double dt = horizon / static_cast<double>(m);
    double total = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        const double t = dt * static_cast<double>(k);
        total += (c1 * c + c2 * c * c + c3 * c * c * energy * t) * dt;
    }
    return total + c4 * c * c * energy * horizon;
}

struct Synthetic {
    std::vector<double> x;
    std::vector<double> y;
};

/// y = a + b·x + q·x² + N(0, noise²), x ~ U(−2, 2).
inline Synthetic quadratic_data(std::size_t n, double a, double b, double q, double noise, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(-2.0, 2.0);
    std::normal_distribution<double> eps(0.0, noise);
    Synthetic s;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = ux(rng);
        s.x.push_back(x);
        s.y.push_back(a + b * x + q * x * x + (noise > 0.0 ? eps(rng) : 0.0));
    }
    return s;
}

}  // namespace oracle
