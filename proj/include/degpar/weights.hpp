#pragma once

// The regularized weight family rho_eps^a(y) = (eps^2 + y^2)^(a/2), its exact
// cell integrals and moments, the critical Sobolev exponents, and a dyadic
// estimator of the Muckenhoupt A2 constant.

#include "degpar/error.hpp"

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

namespace degpar {

struct WeightSpec {
    double a = 0.0;
    double eps = 0.0;

    /// The weight rho_eps^{-a}; its product with this one is identically 1.
    [[nodiscard]] WeightSpec conjugate() const { return {-a, eps}; }
    [[nodiscard]] bool regularized() const { return eps > 0.0; }
};

inline double positive_part(double a) { return std::max(a, 0.0); }

/// Checks eps in [0,1); with `for_solver` also requires a > -1.
inline void validate(const WeightSpec& w, bool for_solver = false) {
    DEGPAR_REQUIRE(std::isfinite(w.a) && std::isfinite(w.eps), InvalidArgument,
                   "weight parameters must be finite");
    DEGPAR_REQUIRE(w.eps >= 0.0 && w.eps < 1.0, InvalidArgument, "eps must lie in [0,1)");
    if (for_solver) {
        DEGPAR_REQUIRE(w.a > -1.0, InvalidArgument, "solver weights require a > -1");
    }
}

inline double eval_weight(const WeightSpec& w, double y) {
    DEGPAR_REQUIRE(std::isfinite(y), InvalidArgument, "eval_weight: y must be finite");
    if (w.eps == 0.0) {
        if (y == 0.0) {
            if (w.a > 0.0) return 0.0;
            if (w.a == 0.0) return 1.0;
            throw SingularEvaluation("eval_weight: |y|^a with a < 0 is infinite at y = 0");
        }
        return std::pow(std::abs(y), w.a);
    }
    return std::pow(w.eps * w.eps + y * y, 0.5 * w.a);
}

namespace detail {

// Integral of a function analytic off the points y = +-i*eps. The interval is
// bisected until every piece lies at least its own length away from those
// points; each piece is then integrated by 30-point Gauss-Legendre, whose
// error there is far below double precision (Bernstein ellipse ratio > 5.8).
template <class F>
double analytic_integral(F&& f, double lo, double hi, double eps, int depth = 0) {
    const double nearest = (lo <= 0.0 && hi >= 0.0) ? 0.0 : std::min(std::abs(lo), std::abs(hi));
    const double dist = std::hypot(eps, nearest);
    if (dist >= hi - lo || depth >= 80) {
        return boost::math::quadrature::gauss<double, 30>::integrate(f, lo, hi);
    }
    const double mid = 0.5 * (lo + hi);
    return analytic_integral(f, lo, mid, eps, depth + 1) + analytic_integral(f, mid, hi, eps, depth + 1);
}

// Antiderivative of y^a on [lo, hi] with 0 <= lo < hi and eps = 0.
inline double power_integral(double a, double lo, double hi) {
    if (a == -1.0) {
        if (lo == 0.0) return std::numeric_limits<double>::infinity();
        return std::log(hi / lo);
    }
    if (a < -1.0 && lo == 0.0) return std::numeric_limits<double>::infinity();
    return (std::pow(hi, a + 1.0) - std::pow(lo, a + 1.0)) / (a + 1.0);
}

}  // namespace detail

/// Integral of rho_eps^a over [y_lo, y_hi], 0 <= y_lo < y_hi. Closed form for
/// eps = 0, graded Gauss-Legendre otherwise.
inline double cell_integral(const WeightSpec& w, double y_lo, double y_hi) {
    DEGPAR_REQUIRE(y_lo >= 0.0 && y_lo < y_hi, InvalidArgument,
                   "cell_integral requires 0 <= y_lo < y_hi");
    if (w.eps == 0.0) {
        DEGPAR_REQUIRE(!(w.a <= -1.0 && y_lo == 0.0), InvalidArgument,
                       "cell_integral: |y|^a is not integrable at 0 for a <= -1");
        return detail::power_integral(w.a, y_lo, y_hi);
    }
    return detail::analytic_integral([&](double y) { return eval_weight(w, y); }, y_lo, y_hi, w.eps);
}

/// Integral of the weight over an arbitrary interval of the real line, using
/// evenness. Returns +inf when the integral diverges.
inline double weight_integral(const WeightSpec& w, double lo, double hi) {
    if (hi <= lo) return 0.0;
    auto half = [&](double l, double h) {
        if (w.eps == 0.0) return detail::power_integral(w.a, l, h);
        return cell_integral(w, l, h);
    };
    if (lo >= 0.0) return half(lo, hi);
    if (hi <= 0.0) return half(-hi, -lo);
    return half(0.0, -lo) + half(0.0, hi);
}

/// Moments M_k = int_{lo}^{hi} rho(y) s^k dy, s = (y - lo)/(hi - lo), k = 0..K-1.
template <std::size_t K>
std::array<double, K> weight_moments(const WeightSpec& w, double lo, double hi) {
    std::array<double, K> m{};
    const double h = hi - lo;
    if (w.eps == 0.0 && lo == 0.0) {
        DEGPAR_REQUIRE(w.a > -1.0, InvalidArgument,
                       "weight_moments: a <= -1 is not integrable on a cell touching y = 0");
        const double scale = std::pow(h, w.a + 1.0);
        for (std::size_t k = 0; k < K; ++k) m[k] = scale / (w.a + 1.0 + static_cast<double>(k));
        return m;
    }
    m[0] = cell_integral(w, lo, hi);
    auto integrand = [&](std::size_t k) {
        return [&w, lo, h, k](double y) { return eval_weight(w, y) * std::pow((y - lo) / h, static_cast<double>(k)); };
    };
    for (std::size_t k = 1; k < K; ++k) {
        if (w.eps == 0.0 && lo >= h) {
            // |y|^a is analytic on a disc around the cell wider than the cell
            m[k] = boost::math::quadrature::gauss<double, 30>::integrate(integrand(k), lo, hi);
        } else if (w.eps == 0.0) {
            // close to 0 the binomial expansion of (y - lo)^k is well conditioned
            double acc = 0.0;
            double binom = 1.0;
            for (std::size_t j = 0; j <= k; ++j) {
                acc += binom * std::pow(-lo, static_cast<double>(k - j)) *
                       detail::power_integral(w.a + static_cast<double>(j), lo, hi);
                binom = binom * static_cast<double>(k - j) / static_cast<double>(j + 1);
            }
            m[k] = acc / std::pow(h, static_cast<double>(k));
        } else {
            m[k] = detail::analytic_integral(integrand(k), lo, hi, w.eps);
        }
    }
    return m;
}

/// A three-point Gauss rule for the weight restricted to one cell, in the
/// local coordinate s in [0,1]; exact for rho times polynomials of degree <= 5.
struct CellRule {
    std::array<double, 3> s{};
    std::array<double, 3> w{};
};

inline CellRule gauss_rule_from_moments(const std::array<double, 6>& moments) {
    // Golub-Welsch through the Cholesky factor of the Hankel moment matrix.
    // Only the 3x3 block and its fourth column (moments up to order 5) enter
    // the Jacobi matrix of a three-point rule.
    const double m0 = moments[0];
    Eigen::Matrix3d hankel;
    Eigen::Vector3d last;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) hankel(i, j) = moments[static_cast<std::size_t>(i + j)] / m0;
        last(i) = moments[static_cast<std::size_t>(i + 3)] / m0;
    }
    Eigen::LLT<Eigen::Matrix3d> llt(hankel);
    DEGPAR_REQUIRE(llt.info() == Eigen::Success, Error, "weighted moment matrix is not positive definite");
    Eigen::Matrix<double, 3, 4> r;
    r.leftCols<3>() = llt.matrixU();
    r.col(3) = llt.matrixL().solve(last);
    Eigen::Matrix3d jacobi = Eigen::Matrix3d::Zero();
    for (int j = 0; j < 3; ++j) {
        double alpha = r(j, j + 1) / r(j, j);
        if (j > 0) alpha -= r(j - 1, j) / r(j - 1, j - 1);
        jacobi(j, j) = alpha;
        if (j > 0) {
            const double beta = r(j, j) / r(j - 1, j - 1);
            jacobi(j, j - 1) = beta;
            jacobi(j - 1, j) = beta;
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(jacobi);
    CellRule rule;
    for (int q = 0; q < 3; ++q) {
        rule.s[static_cast<std::size_t>(q)] = eig.eigenvalues()(q);
        const double v0 = eig.eigenvectors()(0, q);
        rule.w[static_cast<std::size_t>(q)] = m0 * v0 * v0;
    }
    return rule;
}

/// Per-cell weight data along a uniform y-axis: moments for FE assembly and
/// Gauss rules for norm quadrature. Built once per (weight, axis).
struct WeightedAxis {
    std::vector<std::array<double, 6>> moments;
    std::vector<CellRule> rules;

    WeightedAxis() = default;

    WeightedAxis(const WeightSpec& w, const std::vector<double>& nodes) {
        DEGPAR_REQUIRE(nodes.size() >= 2, InvalidArgument, "weighted axis needs at least one cell");
        moments.reserve(nodes.size() - 1);
        rules.reserve(nodes.size() - 1);
        for (std::size_t c = 0; c + 1 < nodes.size(); ++c) {
            double lo = nodes[c];
            double hi = nodes[c + 1];
            std::array<double, 6> m{};
            if (hi <= 0.0) {
                // Mirror the cell into y >= 0; s maps to 1 - s.
                const auto mm = weight_moments<6>(w, -hi, -lo);
                // int rho (1-s')^k with s' the mirrored coordinate.
                static constexpr int binom[6][6] = {{1, 0, 0, 0, 0, 0},   {1, 1, 0, 0, 0, 0},
                                                    {1, 2, 1, 0, 0, 0},   {1, 3, 3, 1, 0, 0},
                                                    {1, 4, 6, 4, 1, 0},   {1, 5, 10, 10, 5, 1}};
                for (int k = 0; k < 6; ++k) {
                    double acc = 0.0;
                    for (int j = 0; j <= k; ++j)
                        acc += binom[k][j] * ((j % 2 == 0) ? 1.0 : -1.0) * mm[static_cast<std::size_t>(j)];
                    m[static_cast<std::size_t>(k)] = acc;
                }
            } else {
                DEGPAR_REQUIRE(lo >= 0.0, InvalidArgument, "weighted axis cells must not straddle y = 0");
                m = weight_moments<6>(w, lo, hi);
            }
            moments.push_back(m);
            rules.push_back(gauss_rule_from_moments(m));
        }
    }
};

inline double sobolev_exponent(int n, double a) {
    DEGPAR_REQUIRE(n >= 2 || (n == 1 && a > 0.0), HypothesisViolation,
                   "sobolev_exponent requires N >= 2, or N = 1 and a > 0");
    const double ap = positive_part(a);
    return 2.0 * (n + 1.0 + ap) / (n + ap - 1.0);
}

inline double parabolic_gamma(int n, double a) {
    const double s = sobolev_exponent(n, a);
    return 2.0 * (s - 1.0) / s;
}

/// Max over dyadic subintervals of [-1,1] at lengths 2^{1-k}, k = 1..depth,
/// of avg(w) * avg(1/w). Divergent averages give +inf.
inline std::vector<double> muckenhoupt_a2_profile(const WeightSpec& w, int depth) {
    DEGPAR_REQUIRE(depth >= 1, InvalidArgument, "muckenhoupt depth must be >= 1");
    validate(w);
    const WeightSpec inv = w.conjugate();
    std::vector<double> profile;
    profile.reserve(static_cast<std::size_t>(depth));
    double running = 0.0;
    for (int k = 1; k <= depth; ++k) {
        const long long count = 1LL << k;
        const double len = 2.0 / static_cast<double>(count);
        double level_max = 0.0;
        // Evenness: only intervals in [0,1] are distinct.
        for (long long j = count / 2; j < count; ++j) {
            const double lo = -1.0 + len * static_cast<double>(j);
            const double hi = lo + len;
            const double avg = weight_integral(w, lo, hi) / len;
            const double avg_inv = weight_integral(inv, lo, hi) / len;
            level_max = std::max(level_max, avg * avg_inv);
        }
        running = std::max(running, level_max);
        profile.push_back(running);
    }
    return profile;
}

inline double muckenhoupt_a2_estimate(const WeightSpec& w, int depth) {
    return muckenhoupt_a2_profile(w, depth).back();
}

}  // namespace degpar
