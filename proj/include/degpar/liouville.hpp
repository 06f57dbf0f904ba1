#pragma once

// The explicit one-dimensional solutions g_i of rho^-a (rho^a g_i')' = g_{i-2},
// the conjugate transform v = rho^a d_y u and growth-exponent fits.

#include "degpar/domain.hpp"
#include "degpar/norms.hpp"
#include "degpar/operator.hpp"
#include "degpar/weights.hpp"

#include <boost/numeric/odeint.hpp>

#include <ostream>

namespace degpar {

/// b_i = prod_{m=1}^{i} 1 / (2m (2m - 1 + a)).
inline double asymptotic_constant(double a, int i) {
    DEGPAR_REQUIRE(a > -1.0, InvalidArgument, "asymptotic constants need a > -1");
    DEGPAR_REQUIRE(i >= 1, InvalidArgument, "asymptotic constants start at i = 1");
    double b = 1.0;
    for (int m = 1; m <= i; ++m) b /= 2.0 * m * (2.0 * m - 1.0 + a);
    return b;
}

/// g_1 .. g_m with g_0 = 1 and g_{-1} = 0. For eps = 0 closed forms are used:
/// g_{2k} = b_k y^{2k} and g_{2k+1} = c_k y^{2k+1-a}; a = 1 gives g_1 = log y.
/// For eps > 0 the nested integrals are integrated as the first-order system
/// g_i' = q_i / rho^a, q_i' = rho^a g_{i-2}, q_1 = 1, tabulated on [0, y_max];
/// evaluations restart the integrator from the nearest table node below.
class GFamily {
public:
    GFamily(WeightSpec w, int m, double y_max = 100.0, int table_nodes = 512) : w_(w), m_(m), y_max_(y_max) {
        validate(w_);
        DEGPAR_REQUIRE(w_.a > -1.0, InvalidArgument, "the g family needs a > -1");
        DEGPAR_REQUIRE(m_ >= 1, InvalidArgument, "the g family needs m >= 1");
        DEGPAR_REQUIRE(y_max_ > 0.0 && std::isfinite(y_max_), InvalidArgument, "y_max must be positive");
        DEGPAR_REQUIRE(table_nodes >= 2, InvalidArgument, "table needs at least two nodes");
        if (w_.eps == 0.0) {
            if (w_.a == 1.0 && m_ >= 3)
                throw InvalidArgument("a = 1, eps = 0: only g_1 (log branch) and even g_i are available");
            for (int k = 1; 2 * k + 1 <= m_; ++k)
                DEGPAR_REQUIRE(2 * k + 1 - w_.a != 0.0, InvalidArgument, "logarithmic odd g_i beyond g_1 not supported");
            return;
        }
        h_ = y_max_ / (table_nodes - 1);
        table_.reserve(static_cast<std::size_t>(table_nodes));
        State s = initial_state();
        table_.push_back(s);
        for (int k = 1; k < table_nodes; ++k) {
            integrate(s, (k - 1) * h_, k * h_);
            table_.push_back(s);
        }
    }

    [[nodiscard]] const WeightSpec& weight() const { return w_; }
    [[nodiscard]] int max_index() const { return m_; }
    [[nodiscard]] double y_max() const { return y_max_; }
    /// True when g_1 is the log branch (a = 1, eps = 0).
    [[nodiscard]] bool log_branch() const { return w_.eps == 0.0 && w_.a == 1.0; }

    /// g_i(y) for -1 <= i <= m and |y| <= y_max, extended by parity (-1)^i.
    [[nodiscard]] double operator()(int i, double y) const {
        DEGPAR_REQUIRE(i >= -1 && i <= m_, InvalidArgument, "g index out of range");
        DEGPAR_REQUIRE(std::abs(y) <= y_max_ * (1.0 + 1e-14), InvalidArgument, "y outside the tabulated range");
        if (i == -1) return 0.0;
        if (i == 0) return 1.0;
        const double ay = std::abs(y);
        const double sign = (i % 2 == 1 && y < 0.0) ? -1.0 : 1.0;
        return sign * (w_.eps == 0.0 ? closed_form(i, ay) : tabulated(i, ay));
    }

    /// rho^a g_i' (the flux), with the same conventions.
    [[nodiscard]] double flux(int i, double y) const {
        DEGPAR_REQUIRE(i >= 1 && i <= m_, InvalidArgument, "g index out of range");
        DEGPAR_REQUIRE(std::abs(y) <= y_max_ * (1.0 + 1e-14), InvalidArgument, "y outside the tabulated range");
        const double ay = std::abs(y);
        const double sign = (i % 2 == 0 && y < 0.0) ? -1.0 : 1.0;  // derivative parity flips
        if (w_.eps == 0.0) {
            if (i == 1) return 1.0;
            const double dg = closed_form_derivative(i, ay);
            return sign * std::pow(ay, w_.a) * dg;
        }
        return sign * state_at(ay)[static_cast<std::size_t>(m_ + i - 1)];
    }

    /// CSV with columns y, g_1, ..., g_m on n + 1 equispaced points of [0, y_max].
    void write_csv(std::ostream& os, int n) const {
        os << "y";
        for (int i = 1; i <= m_; ++i) os << ",g_" << i;
        os << '\n' << std::setprecision(17);
        for (int k = 0; k <= n; ++k) {
            const double y = y_max_ * k / n;
            os << y;
            for (int i = 1; i <= m_; ++i) {
                const bool singular = w_.eps == 0.0 && y == 0.0 && i % 2 == 1 && w_.a >= 1.0;
                os << ',' << (singular ? std::numeric_limits<double>::quiet_NaN() : (*this)(i, y));
            }
            os << '\n';
        }
    }

private:
    using State = std::vector<double>;

    [[nodiscard]] State initial_state() const {
        State s(static_cast<std::size_t>(2 * m_), 0.0);
        s[static_cast<std::size_t>(m_)] = 1.0;  // q_1 = rho^a g_1' = 1
        return s;
    }

    void integrate(State& s, double from, double to) const {
        if (to == from) return;
        namespace ode = boost::numeric::odeint;
        const int m = m_;
        const WeightSpec w = w_;
        auto rhs = [m, w](const State& x, State& dx, double y) {
            const double rho = eval_weight(w, y);
            for (int i = 1; i <= m; ++i) {
                const auto gi = static_cast<std::size_t>(i - 1);
                const auto qi = static_cast<std::size_t>(m + i - 1);
                dx[gi] = x[qi] / rho;
                const double prev = i == 1 ? 0.0 : (i == 2 ? 1.0 : x[static_cast<std::size_t>(i - 3)]);
                dx[qi] = rho * prev;
            }
        };
        auto stepper = ode::make_controlled(1e-15, 1e-13, ode::runge_kutta_dopri5<State>());
        ode::integrate_adaptive(stepper, rhs, s, from, to, std::min(to - from, 1e-2));
    }

    [[nodiscard]] State state_at(double ay) const {
        const auto k = std::min(static_cast<std::size_t>(ay / h_), table_.size() - 1);
        State s = table_[k];
        integrate(s, static_cast<double>(k) * h_, ay);
        return s;
    }

    [[nodiscard]] double tabulated(int i, double ay) const { return state_at(ay)[static_cast<std::size_t>(i - 1)]; }

    [[nodiscard]] double odd_coefficient(int k) const {
        double c = 1.0 / (1.0 - w_.a);
        for (int j = 1; j <= k; ++j) c /= (2.0 * j) * (2.0 * j + 1.0 - w_.a);
        return c;
    }

    [[nodiscard]] double closed_form(int i, double ay) const {
        if (i % 2 == 0) return asymptotic_constant(w_.a, i / 2) * std::pow(ay, i);
        if (i == 1 && w_.a == 1.0) {
            if (ay == 0.0) throw SingularEvaluation("g_1 = log y is infinite at y = 0");
            return std::log(ay);
        }
        const double e = i - w_.a;
        if (ay == 0.0 && e < 0.0) throw SingularEvaluation("g_i is infinite at y = 0 for this a");
        return odd_coefficient(i / 2) * std::pow(ay, e);
    }

    [[nodiscard]] double closed_form_derivative(int i, double ay) const {
        if (i % 2 == 0) return asymptotic_constant(w_.a, i / 2) * i * std::pow(ay, i - 1);
        const double e = i - w_.a;
        return odd_coefficient(i / 2) * e * std::pow(ay, e - 1.0);
    }

    WeightSpec w_;
    int m_;
    double y_max_;
    double h_ = 0.0;
    std::vector<State> table_;
};

/// Max over interior nodes of the conservative second difference
/// [rho_{j+1/2}(g_{j+1}-g_j) - rho_{j-1/2}(g_j-g_{j-1})] / (h^2 rho_j) - g_{i-2}(y_j).
inline double verify_g_relation(const GFamily& fam, int i, double y_lo, double y_hi, int n) {
    DEGPAR_REQUIRE(i >= 1 && i <= fam.max_index(), InvalidArgument, "g index out of range");
    DEGPAR_REQUIRE(n >= 2 && y_lo < y_hi, InvalidArgument, "need n >= 2 and y_lo < y_hi");
    const WeightSpec& w = fam.weight();
    DEGPAR_REQUIRE(w.eps > 0.0 || y_lo > 0.0 || y_hi < 0.0, InvalidArgument,
                   "for eps = 0 the stencil must stay off y = 0");
    const double h = (y_hi - y_lo) / n;
    double worst = 0.0;
    for (int j = 1; j < n; ++j) {
        const double y = y_lo + j * h;
        const double rp = eval_weight(w, y + 0.5 * h), rm = eval_weight(w, y - 0.5 * h), r0 = eval_weight(w, y);
        const double gp = fam(i, y + h), g0 = fam(i, y), gm = fam(i, y - h);
        const double lhs = (rp * (gp - g0) - rm * (g0 - gm)) / (h * h * r0);
        worst = std::max(worst, std::abs(lhs - fam(i - 2, y)));
    }
    return worst;
}

/// Least-squares slope of log g_i against log y on log-spaced samples of [y_lo, y_hi].
inline double local_growth_exponent(const GFamily& fam, int i, double y_lo, double y_hi, int samples = 32) {
    DEGPAR_REQUIRE(y_lo > 0.0 && y_hi > y_lo && samples >= 2, InvalidArgument, "need 0 < y_lo < y_hi");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int k = 0; k < samples; ++k) {
        const double y = y_lo * std::pow(y_hi / y_lo, static_cast<double>(k) / (samples - 1));
        const double lx = std::log(y), ly = std::log(std::abs(fam(i, y)));
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (samples * sxy - sx * sy) / (samples * sxx - sx * sx);
}

namespace detail {

// d_y: centred differences inside; the two end rows are cubic extrapolations
// of the centred values. The centred error is the smooth profile h^2 u'''/6,
// and extrapolating keeps that profile smooth up to the faces. A one-sided
// stencil there would leave an O(h^2) jump, which the stiffness operator in
// conjugate_residual amplifies into an O(1) residual on one layer of nodes.
inline Field y_derivative(const Field& u) {
    const Grid& g = *u.grid;
    const int k = g.dim() - 1;
    const int m = g.axis(k).count;
    if (m < 6) return gradient(u).back();
    const double h = g.axis(k).spacing();
    const std::size_t st = g.stride(k);
    Field d(u.grid);
    for (int n = 0; n < g.time_levels(); ++n) {
        auto src = u.level(n);
        auto dst = d.level(n);
        for (std::size_t i = 0; i < g.spatial_size(); ++i) {
            const int j = g.index_along(i, k);
            if (j > 0 && j < m - 1) dst[i] = (src[i + st] - src[i - st]) / (2.0 * h);
        }
        for (std::size_t i = 0; i < g.spatial_size(); ++i) {
            const int j = g.index_along(i, k);
            if (j == 0)
                dst[i] = 4.0 * dst[i + st] - 6.0 * dst[i + 2 * st] + 4.0 * dst[i + 3 * st] - dst[i + 4 * st];
            else if (j == m - 1)
                dst[i] = 4.0 * dst[i - st] - 6.0 * dst[i - 2 * st] + 4.0 * dst[i - 3 * st] - dst[i - 4 * st];
        }
    }
    return d;
}

}  // namespace detail

/// v = rho^a d_y u nodewise. With eps = 0 and a != 0 the value on y = 0 is the
/// one-sided limit, extrapolated quadratically from the three nodes above.
inline Field conjugate_transform(const Field& u, const WeightSpec& w) {
    const Grid& g = *u.grid;
    const Field dy = detail::y_derivative(u);
    Field v(u.grid);
    const bool limit_at_sigma = w.eps == 0.0 && w.a != 0.0;
    const std::size_t sy = g.stride(g.dim() - 1);
    for (int n = 0; n < g.time_levels(); ++n) {
        for (std::size_t i = 0; i < g.spatial_size(); ++i) {
            if (limit_at_sigma && g.on_sigma(i)) continue;
            v.values[i + g.spatial_size() * static_cast<std::size_t>(n)] =
                eval_weight(w, g.coord(i, g.dim() - 1)) * dy.at(i, n);
        }
        if (!limit_at_sigma) continue;
        DEGPAR_REQUIRE(g.y_axis().count >= 4, InvalidArgument, "one-sided limit needs four nodes along y");
        for (std::size_t i : g.sigma_nodes()) {
            auto lvl = v.level(n);
            lvl[i] = 3.0 * lvl[i + sy] - 3.0 * lvl[i + 2 * sy] + lvl[i + 3 * sy];
        }
    }
    return v;
}

struct ConjugateResidual {
    double rms = 0.0;  // sqrt(sum_n dt sum_i R_i^2 / m_i)
    double max = 0.0;  // max_i |R_i| / m_i
    std::size_t nodes = 0;
    bool sigma_excluded = false;
};

/// Weak residual of v for rho^-a d_t v - div(rho^-a grad v) = 0 tested with
/// interior hat functions (theta = 1/2 in time); m_i are lumped masses.
/// If the conjugate weight is not integrable at y = 0 the first y-cell is dropped.
inline ConjugateResidual conjugate_residual(const Field& v, const WeightSpec& w) {
    const WeightSpec c = w.conjugate();
    Field vv = v;
    ConjugateResidual out;
    const Grid& g0 = *v.grid;
    if (c.eps == 0.0 && c.a <= -1.0 && g0.y_axis().coord(0) == 0.0) {
        Region r = Region::whole(g0);
        r.y.first = g0.y_axis().coord(1);
        vv = restrict(v, r);
        out.sigma_excluded = true;
    }
    const Grid& g = *vv.grid;
    const Discretization disc(c, g.level_grid(0));
    const SparseMatrix M = disc.mass();
    const SparseMatrix K = disc.stiffness(CoefficientField::identity(g.dim()));
    const Vector lumped = M * Vector::Ones(M.rows());
    std::vector<char> interior(g.spatial_size(), 1);
    for (std::size_t i = 0; i < g.spatial_size(); ++i)
        for (int k = 0; k < g.dim(); ++k)
            if (g.on_face(i, k, false) || g.on_face(i, k, true)) interior[i] = 0;
    for (char f : interior) out.nodes += static_cast<std::size_t>(f);
    DEGPAR_REQUIRE(out.nodes > 0, InvalidArgument, "no interior nodes for the residual");

    auto accumulate = [&](const Vector& R, double weight) {
        double s = 0.0;
        for (std::size_t i = 0; i < g.spatial_size(); ++i) {
            if (!interior[i]) continue;
            const auto ii = static_cast<Eigen::Index>(i);
            s += R(ii) * R(ii) / lumped(ii);
            out.max = std::max(out.max, std::abs(R(ii)) / lumped(ii));
        }
        return weight * s;
    };
    auto level = [&](int n) {
        auto l = vv.level(n);
        return Eigen::Map<const Vector>(l.data(), static_cast<Eigen::Index>(l.size()));
    };
    double total = 0.0;
    if (g.time_levels() == 1) {
        total = accumulate(K * level(0), 1.0);
    } else {
        const double dt = g.dt();
        for (int n = 0; n + 1 < g.time_levels(); ++n) {
            const Vector R = M * (level(n + 1) - level(n)) / dt + 0.5 * (K * (level(n + 1) + level(n)));
            total += accumulate(R, dt);
        }
    }
    out.rms = std::sqrt(total);
    return out;
}

struct GrowthFit {
    double exponent = 0.0;
    double residual = 0.0;
    std::vector<double> scales;
    std::vector<double> sups;
};

/// Slope of log sup_{Q_R}|u| against log R for R = R0 2^k, k = 0..K-1, where
/// Q_R = [-R,R]^N x [0,R] x [-R^2,R^2] must fit in the grid.
inline GrowthFit growth_exponent_fit(const Field& u, double R0, int K) {
    DEGPAR_REQUIRE(K >= 4, InvalidArgument, "growth fit needs at least 4 dyadic scales");
    DEGPAR_REQUIRE(R0 > 0.0, InvalidArgument, "growth fit needs R0 > 0");
    GrowthFit fit;
    for (int k = 0; k < K; ++k) {
        const double R = R0 * std::ldexp(1.0, k);
        Region q = Region::cylinder(u.grid->n_x(), R);
        if (u.grid->time_levels() == 1) q.t = {u.grid->time(0), u.grid->time(0)};
        const Field sub = restrict(u, q);
        double m = 0.0;
        for (double x : sub.values) m = std::max(m, std::abs(x));
        DEGPAR_REQUIRE(m > 0.0, InvalidArgument, "growth fit: field vanishes on a scale");
        fit.scales.push_back(R);
        fit.sups.push_back(m);
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int k = 0; k < K; ++k) {
        const double lx = std::log(fit.scales[static_cast<std::size_t>(k)]);
        const double ly = std::log(fit.sups[static_cast<std::size_t>(k)]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    fit.exponent = (K * sxy - sx * sy) / (K * sxx - sx * sx);
    const double icpt = (sy - fit.exponent * sx) / K;
    for (int k = 0; k < K; ++k) {
        const double d = std::log(fit.sups[static_cast<std::size_t>(k)])
            - (icpt + fit.exponent * std::log(fit.scales[static_cast<std::size_t>(k)]));
        fit.residual += d * d;
    }
    fit.residual = std::sqrt(fit.residual / K);
    return fit;
}

}  // namespace degpar
