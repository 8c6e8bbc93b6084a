#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rsmp/errors.hpp"
#include "rsmp/regime.hpp"

namespace rsmp {

struct BasisFunction {
    std::string name;
    std::function<double(double t, double x, Regime i)> fn;
};

/// Features of (t, X, regime) for least-squares conditional expectations.
class RegressionBasis {
public:
    explicit RegressionBasis(std::vector<BasisFunction> functions) : functions_(std::move(functions)) {
        if (functions_.empty()) throw ValidationError("regression basis is empty");
    }

    /// {1, X, X², 1{α=i}, 1{α=i}·X for i = 2..D}. Regime 1 is the reference level.
    static RegressionBasis standard(std::size_t regimes) {
        std::vector<BasisFunction> f = {
            {"1", [](double, double, Regime) { return 1.0; }},
            {"X", [](double, double x, Regime) { return x; }},
            {"X^2", [](double, double x, Regime) { return x * x; }},
        };
        for (std::size_t s = 1; s < regimes; ++s) {
            const Regime r = Regime::from_slot(s);
            const std::string tag = std::to_string(r.id);
            f.push_back({"1{regime=" + tag + "}", [r](double, double, Regime i) { return i == r ? 1.0 : 0.0; }});
            f.push_back({"1{regime=" + tag + "}X", [r](double, double x, Regime i) { return i == r ? x : 0.0; }});
        }
        return RegressionBasis(std::move(f));
    }

    /// {1, X, ..., X^degree}.
    static RegressionBasis polynomial(std::size_t degree) {
        std::vector<BasisFunction> f;
        for (std::size_t p = 0; p <= degree; ++p)
            f.push_back({"X^" + std::to_string(p), [p](double, double x, Regime) {
                             double v = 1.0;
                             for (std::size_t q = 0; q < p; ++q) v *= x;
                             return v;
                         }});
        return RegressionBasis(std::move(f));
    }

    std::size_t size() const noexcept { return functions_.size(); }
    const std::vector<BasisFunction>& functions() const noexcept { return functions_; }

    template <class Out>
    void evaluate(double t, double x, Regime i, Out&& out) const {
        for (std::size_t j = 0; j < functions_.size(); ++j) out(static_cast<Eigen::Index>(j)) = functions_[j].fn(t, x, i);
    }

private:
    std::vector<BasisFunction> functions_;
};

struct RegressionSample {
    double t;
    double x;
    Regime regime;
    double target;
};

/// A fitted linear combination of basis functions.
class FittedFunction {
public:
    FittedFunction(RegressionBasis basis, Eigen::VectorXd coefficients, Eigen::VectorXd std_errors, double r_squared)
        : basis_(std::move(basis)), coef_(std::move(coefficients)), se_(std::move(std_errors)), r2_(r_squared) {}

    double operator()(double t, double x, Regime i) const {
        double v = 0.0;
        const auto& fs = basis_.functions();
        for (std::size_t j = 0; j < fs.size(); ++j) v += coef_(static_cast<Eigen::Index>(j)) * fs[j].fn(t, x, i);
        return v;
    }

    const Eigen::VectorXd& coefficients() const noexcept { return coef_; }
    const Eigen::VectorXd& standard_errors() const noexcept { return se_; }
    double r_squared() const noexcept { return r2_; }
    const RegressionBasis& basis() const noexcept { return basis_; }

private:
    RegressionBasis basis_;
    Eigen::VectorXd coef_;
    Eigen::VectorXd se_;
    double r2_;
};

namespace detail {

struct RidgeFit {
    Eigen::VectorXd coef;
    Eigen::VectorXd se;
    double r2;
};

/// Ridge least squares with λ = 1e-8·trace(AᵀA)/p, followed by two iterated-Tikhonov
/// refinement steps. The refinement removes the shrinkage on well-determined
/// directions and leaves null-space components at zero.
inline RidgeFit ridge_solve(const Eigen::MatrixXd& design, const Eigen::VectorXd& target) {
    const Eigen::Index n = design.rows();
    const Eigen::Index p = design.cols();
    const Eigen::MatrixXd gram = design.transpose() * design;
    const double trace = gram.trace();
    if (!(trace > 0.0) || !std::isfinite(trace)) throw NumericalError("regression design matrix is zero or non-finite");
    const double lambda = 1e-8 * trace / static_cast<double>(p);
    const Eigen::MatrixXd regularized = gram + lambda * Eigen::MatrixXd::Identity(p, p);
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(regularized);
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 0.0))
        throw NumericalError("regression design is rank deficient after regularization");

    const Eigen::VectorXd rhs = design.transpose() * target;
    Eigen::VectorXd coef = ldlt.solve(rhs);
    for (int it = 0; it < 2; ++it) coef += ldlt.solve(rhs - gram * coef);
    if (!coef.allFinite()) throw NumericalError("regression produced non-finite coefficients");

    const Eigen::VectorXd resid = target - design * coef;
    const double ssr = resid.squaredNorm();
    const double mean = target.mean();
    const double sst = (target.array() - mean).matrix().squaredNorm();
    const double r2 = sst > 0.0 ? 1.0 - ssr / sst : (ssr <= 1e-24 * static_cast<double>(n) ? 1.0 : 0.0);

    Eigen::VectorXd se = Eigen::VectorXd::Zero(p);
    if (n > p) {
        const double sigma2 = ssr / static_cast<double>(n - p);
        const Eigen::MatrixXd cov = sigma2 * ldlt.solve(Eigen::MatrixXd::Identity(p, p));
        se = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
    }
    return {std::move(coef), std::move(se), r2};
}

}  // namespace detail

/// Least-squares estimate of E[target | features]. Needs at least 10 samples per basis function.
inline FittedFunction conditional_expectation(std::span<const RegressionSample> samples, const RegressionBasis& basis) {
    const auto p = static_cast<Eigen::Index>(basis.size());
    const auto n = static_cast<Eigen::Index>(samples.size());
    if (n < 10 * p)
        throw ValidationError("conditional_expectation needs at least 10 samples per basis function (" +
                              std::to_string(n) + " < " + std::to_string(10 * p) + ")");
    Eigen::MatrixXd design(n, p);
    Eigen::VectorXd target(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto& s = samples[static_cast<std::size_t>(r)];
        basis.evaluate(s.t, s.x, s.regime, design.row(r));
        target(r) = s.target;
    }
    auto fit = detail::ridge_solve(design, target);
    return FittedFunction(basis, std::move(fit.coef), std::move(fit.se), fit.r2);
}

}  // namespace rsmp
