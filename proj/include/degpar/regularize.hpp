#pragma once

// The eps-approximation pipeline: regularized data, eps-sweeps measuring
// u_eps -> u_0 away from y = 0, and eps-stability of Holder ratios.

#include "degpar/degiorgi.hpp"
#include "degpar/evolve.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <functional>
#include <future>
#include <optional>
#include <ostream>
#include <thread>

namespace degpar {

/// (|y|^a / rho_eps^a)^(1/r) at height y; zero on y = 0 when a > 0.
inline double data_multiplier(double a, double eps, double y, double r) {
    if (a <= 0.0) return 1.0;
    if (y == 0.0) return 0.0;
    return std::pow(std::pow(std::abs(y), a) / eval_weight({a, eps}, y), 1.0 / r);
}

/// f_eps = (|y|^a/rho_eps^a)^(1/p) f and F_eps = (|y|^a/rho_eps^a)^(1/q) F for
/// a > 0; identity for a <= 0. With the nodal rule the L^p(rho_eps^a) norm of
/// f_eps equals the L^p(|y|^a) norm of f.
inline SourceData regularized_data(double a, const SourceData& data, double eps, double p, double q) {
    DEGPAR_REQUIRE(eps > 0.0 && eps < 1.0, InvalidArgument, "regularized data needs eps in (0,1)");
    DEGPAR_REQUIRE(p >= 1.0 && q >= 1.0, InvalidArgument, "data exponents must be >= 1");
    SourceData out = data;
    if (a <= 0.0) return out;
    auto scale = [&](Field& fld, double r) {
        if (!fld.grid) return;
        const Grid& g = *fld.grid;
        const int yk = g.dim() - 1;
        for (std::size_t i = 0; i < g.spatial_size(); ++i) {
            const double m = data_multiplier(a, eps, g.coord(i, yk), r);
            for (int n = 0; n < g.time_levels(); ++n) fld.at(i, n) *= m;
        }
    };
    scale(out.f, p);
    for (auto& c : out.F) scale(c, q);
    return out;
}

inline SourceData regularized_data(double a, const Field& f, const std::vector<Field>& F, double eps, double p,
                                   double q) {
    SourceData d;
    d.f = f;
    d.F = F;
    return regularized_data(a, d, eps, p, q);
}

/// One experiment whose weight is swept over eps. Data are given for the
/// |y|^a problem and regularized per eps; initial and boundary values may
/// depend on eps.
struct ProblemSpec {
    GridSpec grid;
    double a = 0.0;
    CoefficientField A;  // default: identity
    double p = 2.0;      // exponents of the data norms
    double q = 2.0;
    std::function<Field(const GridPtr&, double eps)> initial;  // on the spatial grid of level 0
    std::function<SourceData(const GridPtr&)> data;            // optional
    std::function<BoundaryCondition(double eps)> boundary;     // default: conormal on y = 0, zero elsewhere
    EvolveConfig evolve = [] {
        EvolveConfig c;
        c.startup_steps = 2;
        return c;
    }();
};

struct RegularizedRun {
    double eps = 0.0;
    GridPtr grid;
    SourceData data;
    Field u;
};

inline CoefficientField coefficient_of(const ProblemSpec& spec, int dim) {
    return spec.A.dim() == 0 ? CoefficientField::identity(dim) : spec.A;
}

/// Solves the spec with weight (a, eps); eps = 0 uses the data unchanged.
inline RegularizedRun solve_regularized(const ProblemSpec& spec, double eps) {
    DEGPAR_REQUIRE(static_cast<bool>(spec.initial), InvalidArgument, "problem spec has no initial data");
    RegularizedRun run;
    run.eps = eps;
    run.grid = build_grid(spec.grid);
    const int dim = run.grid->dim();
    if (spec.data) {
        run.data = spec.data(run.grid);
        if (eps > 0.0) run.data = regularized_data(spec.a, run.data, eps, spec.p, spec.q);
    }
    Problem prob{{spec.a, eps},
                 coefficient_of(spec, dim),
                 run.data,
                 spec.boundary ? spec.boundary(eps) : BoundaryCondition::conormal_sigma(dim),
                 {}};
    run.u = solve_ivp(prob, spec.initial(run.grid, eps), run.grid, spec.evolve);
    return run;
}

namespace detail {

inline void check_eps_list(const std::vector<double>& eps) {
    DEGPAR_REQUIRE(!eps.empty(), InvalidArgument, "eps list is empty");
    for (std::size_t k = 0; k < eps.size(); ++k) {
        DEGPAR_REQUIRE(eps[k] > 0.0 && eps[k] < 1.0, InvalidArgument, "sweep eps values must lie in (0,1)");
        DEGPAR_REQUIRE(k == 0 || eps[k] < eps[k - 1], InvalidArgument, "eps list must be strictly descending");
    }
}

// Runs job(k) for k in [0, n) with at most `workers` in flight. Results come
// back in index order; an exception is stored, not rethrown.
template <class T, class Job>
std::vector<std::optional<T>> run_pool(std::size_t n, unsigned workers, Job job, std::vector<std::string>& errors) {
    if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
    std::vector<std::optional<T>> out(n);
    errors.assign(n, {});
    for (std::size_t start = 0; start < n; start += workers) {
        std::vector<std::future<T>> batch;
        const std::size_t stop = std::min(n, start + workers);
        for (std::size_t k = start; k < stop; ++k) batch.push_back(std::async(std::launch::async, job, k));
        for (std::size_t k = start; k < stop; ++k) {
            try {
                out[k] = batch[k - start].get();
            } catch (const std::exception& e) {
                errors[k] = e.what();
            }
        }
    }
    return out;
}

inline std::string fmt_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

}  // namespace detail

/// File stem for sweep catalogs, e.g. "holder_a0.5_alpha0.25_p9_q12".
inline std::string catalog_stem(const std::string& kind, double a, double alpha, double p, double q) {
    return kind + "_a" + detail::fmt_num(a) + "_alpha" + detail::fmt_num(alpha) + "_p" + detail::fmt_num(p) + "_q" +
           detail::fmt_num(q);
}

// ---------------------------------------------------------------------------
// Convergence away from y = 0

struct ConvergenceReport {
    double a = 0.0;
    double y0 = 0.0;
    std::vector<double> eps;
    std::vector<double> difference;  // ||u_eps - u_0||_{L2(I; H1)} over y >= y0
    double reference_norm = 0.0;     // same norm of u_0
    bool monotone = false;           // nonincreasing up to 5%
    bool complete = true;
    std::string failure;

    [[nodiscard]] nlohmann::json to_json() const {
        nlohmann::json j;
        j["a"] = a;
        j["y0"] = y0;
        j["reference_norm"] = reference_norm;
        j["monotone"] = monotone;
        j["complete"] = complete;
        if (!failure.empty()) j["failure"] = failure;
        j["rows"] = nlohmann::json::array();
        for (std::size_t k = 0; k < difference.size(); ++k)
            j["rows"].push_back({{"eps", eps[k]}, {"difference", difference[k]}});
        return j;
    }
    void write_csv(std::ostream& os) const {
        os << "eps,difference\n" << std::setprecision(17);
        for (std::size_t k = 0; k < difference.size(); ++k) os << eps[k] << ',' << difference[k] << '\n';
    }
};

/// ||v||_{L2(I; H1(y >= y0))} with the |y|^a weight.
inline double away_norm(const Field& v, double a, double y0) {
    Region r = Region::whole(*v.grid);
    r.y.first = y0;
    return weighted_norm(v, {a, 0.0}, r, 2.0, true);
}

/// Solves the spec for every eps (descending) and for eps = 0, and measures
/// the difference to the eps = 0 solution on y >= y0 (default: 4 y-cells).
/// A failing solve stops the report at the last eps before it.
inline ConvergenceReport eps_sweep(const ProblemSpec& spec, const std::vector<double>& eps_list,
                                   std::optional<double> y0 = std::nullopt, unsigned workers = 0) {
    detail::check_eps_list(eps_list);
    const double h = spec.grid.y_max / spec.grid.ny;
    ConvergenceReport rep;
    rep.a = spec.a;
    rep.y0 = y0.value_or(4.0 * h);
    DEGPAR_REQUIRE(rep.y0 >= 2.0 * h - 1e-12, InvalidArgument, "away region must start at least 2 cells above y = 0");
    DEGPAR_REQUIRE(rep.y0 < spec.grid.y_max, InvalidArgument, "away region is empty");

    std::vector<double> all = eps_list;
    all.push_back(0.0);
    std::vector<std::string> errors;
    auto runs = detail::run_pool<Field>(all.size(), workers, [&](std::size_t k) { return solve_regularized(spec, all[k]).u; },
                                        errors);
    if (!runs.back()) {
        rep.complete = false;
        rep.failure = "eps = 0: " + errors.back();
        return rep;
    }
    const Field& u0 = *runs.back();
    rep.reference_norm = away_norm(u0, spec.a, rep.y0);
    for (std::size_t k = 0; k < eps_list.size(); ++k) {
        if (!runs[k]) {
            rep.complete = false;
            rep.failure = "eps = " + detail::fmt_num(eps_list[k]) + ": " + errors[k];
            break;
        }
        Field d = *runs[k];
        for (std::size_t i = 0; i < d.values.size(); ++i) d.values[i] -= u0.values[i];
        rep.eps.push_back(eps_list[k]);
        rep.difference.push_back(away_norm(d, spec.a, rep.y0));
    }
    rep.monotone = true;
    for (std::size_t k = 1; k < rep.difference.size(); ++k)
        if (rep.difference[k] > 1.05 * rep.difference[k - 1] + 1e-14 * rep.reference_norm) rep.monotone = false;
    return rep;
}

// ---------------------------------------------------------------------------
// Holder stability

struct HolderGates {
    double d = 0.0;        // N + 3 + a+
    double alpha_max = 0;  // min of the active gates and 1
    std::vector<std::pair<std::string, double>> bounds;
};

/// Exponent windows of the Holder estimates. Order 0: p > d/2, q > d,
/// alpha < 1, alpha <= 2 - d/p, alpha <= 1 - d/q. Order 1: p > d,
/// alpha < 1, alpha <= 1 - d/p. Throws HypothesisViolation naming the
/// failed inequality.
inline HolderGates holder_gates(int n_x, double a, double p, double q, double alpha, int order) {
    DEGPAR_REQUIRE(order == 0 || order == 1, InvalidArgument, "Holder order must be 0 or 1");
    HolderGates g;
    g.d = n_x + 3 + positive_part(a);
    auto need = [](bool ok, const std::string& what) {
        if (!ok) throw HypothesisViolation("Holder gate failed: " + what);
    };
    need(alpha > 0.0 && alpha < 1.0, "alpha in (0,1), got alpha = " + std::to_string(alpha));
    if (order == 0) {
        need(p > g.d / 2.0, "p > (N+3+a+)/2 = " + std::to_string(g.d / 2.0));
        need(q > g.d, "q > N+3+a+ = " + std::to_string(g.d));
        g.bounds = {{"2-(N+3+a+)/p", 2.0 - g.d / p}, {"1-(N+3+a+)/q", 1.0 - g.d / q}};
    } else {
        need(p > g.d, "p > N+3+a+ = " + std::to_string(g.d));
        g.bounds = {{"1-(N+3+a+)/p", 1.0 - g.d / p}};
    }
    g.alpha_max = 1.0;
    for (const auto& [name, v] : g.bounds) {
        need(alpha <= v * (1.0 + 1e-12), "alpha = " + std::to_string(alpha) + " <= " + name + " = " + std::to_string(v));
        g.alpha_max = std::min(g.alpha_max, v);
    }
    return g;
}

/// max |(A grad u + F) . e_y| over the y = 0 nodes of the region; d_y by the
/// one-sided second-order difference, d_x centred.
inline double sigma_conormal_residual(const Field& u, const CoefficientField& A, const std::vector<Field>& F,
                                      const std::optional<Region>& region = std::nullopt) {
    const Grid& g = *u.grid;
    const int d = g.dim();
    const int yk = d - 1;
    DEGPAR_REQUIRE(g.y_axis().coord(0) == 0.0 && g.y_axis().count >= 3, InvalidArgument,
                   "conormal residual needs a grid starting at y = 0 with 3 y-nodes");
    std::vector<double> lo(static_cast<std::size_t>(d)), hi(static_cast<std::size_t>(d));
    double tlo = g.time(0), thi = g.time(g.time_levels() - 1);
    for (int k = 0; k < d; ++k) {
        lo[static_cast<std::size_t>(k)] = g.axis(k).coord(0);
        hi[static_cast<std::size_t>(k)] = g.axis(k).coord(g.axis(k).count - 1);
    }
    if (region) {
        for (int k = 0; k < g.n_x(); ++k) {
            lo[static_cast<std::size_t>(k)] = region->x[static_cast<std::size_t>(k)].first;
            hi[static_cast<std::size_t>(k)] = region->x[static_cast<std::size_t>(k)].second;
        }
        tlo = region->t.first;
        thi = region->t.second;
    }
    const double hy = g.y_axis().spacing();
    const std::size_t sy = g.stride(yk);
    double worst = 0.0;
    std::vector<double> grad(static_cast<std::size_t>(d));
    for (int n = 0; n < g.time_levels(); ++n) {
        const double t = g.time(n);
        if (g.time_levels() > 1 && (t < tlo - 1e-12 || t > thi + 1e-12)) continue;
        for (std::size_t i = 0; i < g.spatial_size(); ++i) {
            if (g.index_along(i, yk) != 0) continue;
            bool inside = true;
            for (int k = 0; k < g.n_x(); ++k) {
                const double c = g.coord(i, k);
                inside = inside && c >= lo[static_cast<std::size_t>(k)] - 1e-12 && c <= hi[static_cast<std::size_t>(k)] + 1e-12;
            }
            if (!inside) continue;
            for (int k = 0; k < g.n_x(); ++k) {
                const int j = g.index_along(i, k);
                const int last = g.axis(k).count - 1;
                const std::size_t s = g.stride(k);
                const double h = g.axis(k).spacing();
                if (last == 0) {
                    grad[static_cast<std::size_t>(k)] = 0.0;
                } else if (j == 0) {
                    grad[static_cast<std::size_t>(k)] = (u.at(i + s, n) - u.at(i, n)) / h;
                } else if (j == last) {
                    grad[static_cast<std::size_t>(k)] = (u.at(i, n) - u.at(i - s, n)) / h;
                } else {
                    grad[static_cast<std::size_t>(k)] = (u.at(i + s, n) - u.at(i - s, n)) / (2 * h);
                }
            }
            grad[static_cast<std::size_t>(yk)] = (-3.0 * u.at(i, n) + 4.0 * u.at(i + sy, n) - u.at(i + 2 * sy, n)) / (2 * hy);
            const auto a = A.at(A.is_uniform() ? 0 : i);
            double r = 0.0;
            for (int k = 0; k < d; ++k) r += a(yk, k) * grad[static_cast<std::size_t>(k)];
            if (static_cast<std::size_t>(yk) < F.size() && F[static_cast<std::size_t>(yk)].grid) {
                const Field& fy = F[static_cast<std::size_t>(yk)];
                r += fy.at(i, detail::data_level(fy, n));
            }
            worst = std::max(worst, std::abs(r));
        }
    }
    return worst;
}

struct StabilityRow {
    double eps = 0.0;
    double seminorm = 0.0;
    double solution_l2 = 0.0;
    double f_norm = 0.0;
    double F_norm = 0.0;  // L^q (order 0) or C^{0,alpha} (order 1)
    double ratio = 0.0;
    std::optional<double> conormal_residual;
};

struct StabilityReport {
    double a = 0.0;
    double alpha = 0.0;
    int order = 0;
    double p = 0.0;
    double q = 0.0;
    HolderGates gates;
    double stability_factor = 2.0;
    std::vector<StabilityRow> rows;  // sweep order, then eps = 0 last
    double spread = 0.0;             // max/min ratio over all rows
    double limit_gap = 0.0;          // |ratio(smallest eps) - ratio(0)| / ratio(0)
    bool finite = false;
    bool stable = false;

    [[nodiscard]] nlohmann::json to_json() const {
        nlohmann::json j;
        j["a"] = a;
        j["alpha"] = alpha;
        j["order"] = order;
        j["p"] = p;
        j["q"] = q;
        j["gate_d"] = gates.d;
        j["alpha_max"] = gates.alpha_max;
        nlohmann::json gb = nlohmann::json::object();
        for (const auto& [name, v] : gates.bounds) gb[name] = v;
        j["gates"] = gb;
        j["stability_factor"] = stability_factor;
        j["spread"] = spread;
        j["limit_gap"] = limit_gap;
        j["finite"] = finite;
        j["stable"] = stable;
        j["rows"] = nlohmann::json::array();
        for (const auto& r : rows) {
            nlohmann::json row{{"eps", r.eps},       {"seminorm", r.seminorm}, {"solution_l2", r.solution_l2},
                               {"f_norm", r.f_norm}, {"F_norm", r.F_norm},     {"ratio", r.ratio}};
            if (r.conormal_residual) row["conormal_residual"] = *r.conormal_residual;
            j["rows"].push_back(row);
        }
        return j;
    }
    void write_csv(std::ostream& os) const {
        os << "eps,seminorm,solution_l2,f_norm,F_norm,ratio,conormal_residual\n" << std::setprecision(17);
        for (const auto& r : rows) {
            os << r.eps << ',' << r.seminorm << ',' << r.solution_l2 << ',' << r.f_norm << ',' << r.F_norm << ','
               << r.ratio << ',';
            if (r.conormal_residual) os << *r.conormal_residual;
            os << '\n';
        }
    }
};

/// Per-eps ratio [u_eps]_{C^{k,alpha}_p(Q_1/2)} / (||u_eps||_{L2(Q_1)} + ||f_eps||_p + ||F_eps||)
/// over the sweep and the direct eps = 0 solve. The grid must cover Q_1.
inline StabilityReport holder_stability_report(const ProblemSpec& spec, const std::vector<double>& eps_list,
                                               double alpha, int order, double stability_factor = 2.0,
                                               unsigned workers = 0) {
    detail::check_eps_list(eps_list);
    DEGPAR_REQUIRE(stability_factor >= 1.0, InvalidArgument, "stability factor must be >= 1");
    StabilityReport rep;
    rep.a = spec.a;
    rep.alpha = alpha;
    rep.order = order;
    rep.p = spec.p;
    rep.q = spec.q;
    rep.stability_factor = stability_factor;
    rep.gates = holder_gates(spec.grid.n_x, spec.a, spec.p, spec.q, alpha, order);

    std::vector<double> all = eps_list;
    all.push_back(0.0);
    const Region q1 = Region::cylinder(spec.grid.n_x, 1.0);
    const Region half = Region::cylinder(spec.grid.n_x, 0.5);
    auto job = [&](std::size_t k) {
        const double eps = all[k];
        const RegularizedRun run = solve_regularized(spec, eps);
        const WeightSpec w{spec.a, eps};
        StabilityRow row;
        row.eps = eps;
        const HolderReport h = holder_seminorm(run.u, alpha, half, order);
        row.seminorm = order == 0 ? h.seminorm_c0 : h.seminorm_c1.value_or(0.0);
        row.solution_l2 = weighted_norm(run.u, w, q1, 2.0);
        if (run.data.has_f()) row.f_norm = weighted_norm(detail::on_grid_of(run.data.f, run.u.grid), w, q1, spec.p);
        std::vector<Field> comps;
        for (const auto& c : run.data.F)
            if (c.grid) comps.push_back(restrict(detail::on_grid_of(c, run.u.grid), q1));
        if (!comps.empty()) {
            if (order == 0) {
                row.F_norm = gradient_lp_norm(comps, w, spec.q);
            } else {
                row.F_norm = gradient_lp_norm(comps, w, std::numeric_limits<double>::infinity());
                for (const auto& c : comps) row.F_norm += holder_seminorm(c, alpha, std::nullopt, 0).seminorm_c0;
            }
        }
        const double denom = row.solution_l2 + row.f_norm + row.F_norm;
        DEGPAR_REQUIRE(denom > 0.0, InvalidArgument, "stability ratio with all norms zero");
        row.ratio = row.seminorm / denom;
        if (order == 1) {
            std::vector<Field> F = run.data.F;
            for (auto& c : F)
                if (c.grid) c = detail::on_grid_of(c, run.u.grid);
            row.conormal_residual = sigma_conormal_residual(run.u, coefficient_of(spec, run.grid->dim()), F, half);
        }
        return row;
    };
    std::vector<std::string> errors;
    auto rows = detail::run_pool<StabilityRow>(all.size(), workers, job, errors);
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (!rows[k]) throw Error("Holder stability at eps = " + detail::fmt_num(all[k]) + ": " + errors[k]);
        rep.rows.push_back(*rows[k]);
    }
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    rep.finite = true;
    for (const auto& r : rep.rows) {
        rep.finite = rep.finite && std::isfinite(r.ratio);
        lo = std::min(lo, r.ratio);
        hi = std::max(hi, r.ratio);
    }
    rep.spread = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    const double r0 = rep.rows.back().ratio;
    const double rmin = rep.rows[rep.rows.size() - 2].ratio;
    rep.limit_gap = r0 > 0.0 ? std::abs(rmin - r0) / r0 : std::abs(rmin);
    rep.stable = rep.finite && rep.spread <= stability_factor;
    return rep;
}

}  // namespace degpar
