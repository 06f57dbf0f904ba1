#pragma once

// Local energy (Caccioppoli) measurements, the De Giorgi truncation ledger
// and the L2 -> Linf bound ratio.

#include "degpar/norms.hpp"
#include "degpar/operator.hpp"

#include <ostream>

namespace degpar {

/// gamma' = (N + 3 + a+)/2, the Holder conjugate of parabolic_gamma.
inline double gamma_prime(int n_x, double a) { return (n_x + 3 + positive_part(a)) / 2.0; }

/// min(1/gamma' - 1/p, 1/gamma' - 2/q).
inline double gamma_bar(int n_x, double a, double p, double q) {
    const double g = 1.0 / gamma_prime(n_x, a);
    return std::min(g - 1.0 / p, g - 2.0 / q);
}

/// Integrability window p > (N+3+a+)/2, q > N+3+a+.
inline void require_data_exponents(int n_x, double a, double p, double q) {
    const double d = n_x + 3 + positive_part(a);
    if (!(p > d / 2.0))
        throw HypothesisViolation("p = " + std::to_string(p) + " must exceed (N+3+a+)/2 = " + std::to_string(d / 2.0));
    if (!(q > d))
        throw HypothesisViolation("q = " + std::to_string(q) + " must exceed N+3+a+ = " + std::to_string(d));
}

/// (u - k)_+ (sign = +1) or (u - k)_- = max(k - u, 0) (sign = -1).
inline Field truncate(const Field& u, double k, int sign = +1) {
    DEGPAR_REQUIRE(sign == 1 || sign == -1, InvalidArgument, "truncation sign must be +1 or -1");
    Field out(u.grid);
    for (std::size_t i = 0; i < u.values.size(); ++i) out.values[i] = std::max(sign * (u.values[i] - k), 0.0);
    return out;
}

struct Truncation {
    double level = 0.0;
    int sign = +1;
};

struct CaccioppoliReport {
    double sup_term = 0.0;       // max_t int_{B_r'} rho v^2
    double gradient_term = 0.0;  // int_{Q_r'} rho |grad v|^2
    double l2_term = 0.0;        // (r - r')^-2 int_{Q_r} rho v^2
    double source_term = 0.0;    // ||f||_{L2(Q_r)} ||v||_{L2(Q_r)}
    double flux_term = 0.0;      // int_{Q_r} rho |F|^2 chi_{v != 0}
    double lhs = 0.0;
    double rhs = 0.0;
    double ratio = 0.0;
    bool zero_data = false;
};

namespace detail {

inline double sup_in_time_l2_squared(const Field& v, const WeightSpec& w) {
    double s = 0.0;
    for (int n = 0; n < v.grid->time_levels(); ++n) {
        const double l = lp_norm(v.level_field(n), w, 2.0);
        s = std::max(s, l * l);
    }
    return s;
}

inline Field masked(const Field& F, const Field& v) {
    Field out(F.grid);
    for (std::size_t i = 0; i < F.values.size(); ++i) out.values[i] = v.values[i] != 0.0 ? F.values[i] : 0.0;
    return out;
}

inline Field on_grid_of(const Field& f, const GridPtr& g) {
    if (f.grid->time_levels() == g->time_levels()) return f;
    DEGPAR_REQUIRE(f.grid->time_levels() == 1, InvalidArgument, "data must be time-independent or share the time levels");
    Field out(g);
    const std::size_t S = g->spatial_size();
    for (int n = 0; n < g->time_levels(); ++n)
        std::copy(f.values.begin(), f.values.end(), out.values.begin() + static_cast<std::ptrdiff_t>(S * n));
    return out;
}

}  // namespace detail

/// Both sides of the local energy inequality on Q_{r'} inside Q_r, evaluated
/// on v = u or on a truncation of u.
inline CaccioppoliReport caccioppoli_check(const Field& u, const WeightSpec& w, const SourceData& data,
                                           double r_inner, double r_outer,
                                           const std::optional<Truncation>& trunc = std::nullopt) {
    DEGPAR_REQUIRE(r_inner > 0.0 && r_inner < r_outer, InvalidArgument, "need 0 < r_inner < r_outer");
    const int n_x = u.grid->n_x();
    const Region inner = Region::cylinder(n_x, r_inner);
    const Region outer = Region::cylinder(n_x, r_outer);
    const Field v = trunc ? truncate(u, trunc->level, trunc->sign) : u;

    CaccioppoliReport r;
    r.sup_term = detail::sup_in_time_l2_squared(restrict(v, inner), w);
    const double g = gradient_lp_norm(restrict_all(gradient(v), inner), w, 2.0);
    r.gradient_term = g * g;
    const double vo = weighted_norm(v, w, outer, 2.0);
    r.l2_term = vo * vo / ((r_outer - r_inner) * (r_outer - r_inner));
    if (data.has_f()) r.source_term = weighted_norm(detail::on_grid_of(data.f, u.grid), w, outer, 2.0) * vo;
    if (data.has_F()) {
        std::vector<Field> comps;
        for (const auto& c : data.F)
            if (c.grid) comps.push_back(restrict(detail::masked(detail::on_grid_of(c, u.grid), v), outer));
        const double nf = gradient_lp_norm(comps, w, 2.0);
        r.flux_term = nf * nf;
    }
    r.lhs = r.sup_term + r.gradient_term;
    r.rhs = r.l2_term + r.source_term + r.flux_term;
    DEGPAR_REQUIRE(std::isfinite(r.lhs) && std::isfinite(r.rhs), InvalidArgument, "energy terms are not finite");
    if (r.rhs == 0.0) {
        DEGPAR_REQUIRE(r.lhs == 0.0, InvalidArgument, "local energy without any right-hand side");
        r.zero_data = true;
        r.ratio = 0.0;
    } else {
        r.ratio = r.lhs / r.rhs;
    }
    return r;
}

struct DeGiorgiLedger {
    int n_x = 1;
    double a = 0.0;
    double p = 0.0;
    double q = 0.0;
    double delta = 1e-3;
    double gamma_prime = 0.0;
    double gamma_bar = 0.0;
    std::vector<double> C;  // truncation levels 1 - 2^-j
    std::vector<double> r;  // radii 1/2 + 2^-j-1
    std::vector<double> E;  // int_{Q_{r_j}} rho (u - C_j)_+^2
    double contraction = 0.0;  // geometric-mean E_{j+1}/E_j over the nonzero prefix
    bool small_start = false;  // E_0 <= delta
    bool decay_ok = true;      // E_J <= E_0 2^-J whenever small_start

    void write_csv(std::ostream& os) const {
        os << "j,C_j,r_j,E_j\n" << std::setprecision(17);
        for (std::size_t j = 0; j < E.size(); ++j) os << j << ',' << C[j] << ',' << r[j] << ',' << E[j] << '\n';
    }
};

inline double ledger_level(int j) { return 1.0 - std::ldexp(1.0, -j); }
inline double ledger_radius(int j) { return 0.5 + std::ldexp(1.0, -j - 1); }

/// Truncation energies of u above the levels C_j on Q_{r_j}, j = 0..J.
/// The data must already be normalized: ||f||_{L^p} + ||F||_{L^q} <= 1 on Q_1.
inline DeGiorgiLedger degiorgi_ledger(const Field& u, const WeightSpec& w, const SourceData& data, double p,
                                      double q, int J = 8, double delta = 1e-3) {
    DEGPAR_REQUIRE(J >= 1, InvalidArgument, "ledger depth must be >= 1");
    DeGiorgiLedger L;
    L.n_x = u.grid->n_x();
    L.a = w.a;
    L.p = p;
    L.q = q;
    L.delta = delta;
    require_data_exponents(L.n_x, w.a, p, q);
    L.gamma_prime = gamma_prime(L.n_x, w.a);
    L.gamma_bar = gamma_bar(L.n_x, w.a, p, q);

    const Region q1 = Region::cylinder(L.n_x, 1.0);
    double data_norm = 0.0;
    if (data.has_f()) data_norm += weighted_norm(detail::on_grid_of(data.f, u.grid), w, q1, p);
    if (data.has_F()) {
        std::vector<Field> comps;
        for (const auto& c : data.F)
            if (c.grid) comps.push_back(restrict(detail::on_grid_of(c, u.grid), q1));
        data_norm += gradient_lp_norm(comps, w, q);
    }
    DEGPAR_REQUIRE(data_norm <= 1.0 + 1e-12, InvalidArgument,
                   "ledger data is not normalized: ||f||_p + ||F||_q = " + std::to_string(data_norm));

    for (int j = 0; j <= J; ++j) {
        L.C.push_back(ledger_level(j));
        L.r.push_back(ledger_radius(j));
        const double e = weighted_norm(truncate(u, L.C.back()), w, Region::cylinder(L.n_x, L.r.back()), 2.0);
        L.E.push_back(e * e);
    }
    double log_sum = 0.0;
    int steps = 0;
    for (int j = 0; j < J && L.E[static_cast<std::size_t>(j) + 1] > 0.0; ++j) {
        log_sum += std::log(L.E[static_cast<std::size_t>(j) + 1] / L.E[static_cast<std::size_t>(j)]);
        ++steps;
    }
    L.contraction = steps > 0 ? std::exp(log_sum / steps) : 0.0;
    L.small_start = L.E.front() <= delta;
    if (L.small_start) L.decay_ok = L.E.back() <= L.E.front() * std::ldexp(1.0, -J);
    return L;
}

/// ||u||_{Linf(Q_{1/2})} / (||u||_{L2(Q_1, rho)} + ||f||_{L^p(Q_1, rho)} + ||F||_{L^q(Q_1, rho)}).
inline double linf_bound_ratio(const Field& u, const WeightSpec& w, const SourceData& data, double p, double q) {
    const int n_x = u.grid->n_x();
    require_data_exponents(n_x, w.a, p, q);
    const Region q1 = Region::cylinder(n_x, 1.0);
    double denom = weighted_norm(u, w, q1, 2.0);
    if (data.has_f()) denom += weighted_norm(detail::on_grid_of(data.f, u.grid), w, q1, p);
    if (data.has_F()) {
        std::vector<Field> comps;
        for (const auto& c : data.F)
            if (c.grid) comps.push_back(restrict(detail::on_grid_of(c, u.grid), q1));
        denom += gradient_lp_norm(comps, w, q);
    }
    const double num = weighted_norm(u, w, Region::cylinder(n_x, 0.5), std::numeric_limits<double>::infinity());
    DEGPAR_REQUIRE(std::isfinite(num) && std::isfinite(denom), InvalidArgument, "bound terms are not finite");
    if (denom == 0.0) {
        DEGPAR_REQUIRE(num == 0.0, InvalidArgument, "nonzero solution with zero norms");
        return 0.0;
    }
    return num / denom;
}

}  // namespace degpar
