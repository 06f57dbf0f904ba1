#pragma once

// Curved characteristic manifolds Gamma = {y = phi(x)}: the flattening
// Phi(x,y) = (x, y + phi(x)), transformed coefficients and data, the flat
// solve with the extra time coefficient b = (delta~/y)^a, and the conormal
// residual on Gamma.

#include "degpar/evolve.hpp"
#include "degpar/norms.hpp"
#include "degpar/regularize.hpp"

#include <Eigen/Dense>

#include <istream>
#include <map>
#include <set>
#include <sstream>

namespace degpar {

/// Tabulated description of the curved domain over a flat grid.
/// phi and grad_phi are given per x-node (x_0 fastest); delta_flat holds
/// delta(x, y + phi(x)) at every flat spatial node.
struct CurvedDomainSpec {
    GridSpec grid;
    std::vector<double> phi;
    std::vector<std::vector<double>> grad_phi;
    std::vector<double> delta_flat;
    double c0 = 0.0;     // lower bound for |grad delta|
    double mu = 0.0;     // lower bound for delta~/y
    double alpha = 0.5;  // Holder exponent used to log the input seminorms

    [[nodiscard]] std::size_t x_nodes() const {
        std::size_t n = 1;
        for (int k = 0; k < grid.n_x; ++k) n *= static_cast<std::size_t>(grid.nx + 1);
        return n;
    }
};

using PointFn = std::function<double(std::span<const double>)>;
using GradientFn = std::function<std::vector<double>(std::span<const double>)>;

/// Samples phi, grad phi (on x) and delta (on physical points) onto the flat grid.
inline CurvedDomainSpec make_curved_spec(const GridSpec& gs, const PointFn& phi, const GradientFn& grad_phi,
                                         const PointFn& delta, double c0, double mu, double alpha = 0.5) {
    CurvedDomainSpec s;
    s.grid = gs;
    s.c0 = c0;
    s.mu = mu;
    s.alpha = alpha;
    const GridPtr g = build_grid(gs);
    const std::size_t nxn = s.x_nodes();
    std::vector<double> z(static_cast<std::size_t>(g->dim()));
    for (std::size_t i = 0; i < nxn; ++i) {
        g->coords(i, z);
        const std::span<const double> x(z.data(), static_cast<std::size_t>(gs.n_x));
        s.phi.push_back(phi(x));
        s.grad_phi.push_back(grad_phi(x));
    }
    s.delta_flat.resize(g->spatial_size());
    for (std::size_t i = 0; i < g->spatial_size(); ++i) {
        g->coords(i, z);
        z.back() += s.phi[i % nxn];
        s.delta_flat[i] = delta(z);
    }
    return s;
}

/// Nodal flattening data: physical coordinates of every flat node and the
/// Jacobian rows (grad phi) per x-node.
struct FlattenMap {
    GridPtr grid;  // flat spatial-time grid
    std::vector<double> phi;
    std::vector<std::vector<double>> grad_phi;

    [[nodiscard]] std::size_t x_index(std::size_t node) const { return node % grid->stride(grid->dim() - 1); }

    [[nodiscard]] Eigen::MatrixXd jacobian(std::size_t node) const {
        const int d = grid->dim();
        Eigen::MatrixXd J = Eigen::MatrixXd::Identity(d, d);
        const auto& gp = grad_phi[x_index(node)];
        for (int k = 0; k + 1 < d; ++k) J(d - 1, k) = gp[static_cast<std::size_t>(k)];
        return J;
    }
    [[nodiscard]] Eigen::MatrixXd jacobian_inverse(std::size_t node) const {
        Eigen::MatrixXd Ji = jacobian(node);
        Ji.row(grid->dim() - 1).head(grid->dim() - 1) *= -1.0;
        return Ji;
    }
    /// Unit lower-triangular: the determinant is the product of ones.
    [[nodiscard]] double det(std::size_t node) const {
        const Eigen::MatrixXd J = jacobian(node);
        double p = 1.0;
        for (int k = 0; k < J.rows(); ++k) p *= J(k, k);
        return p;
    }
    /// Phi(z) for the flat node z.
    [[nodiscard]] std::vector<double> forward(std::size_t node) const {
        std::vector<double> z = grid->coords(node);
        z.back() += phi[x_index(node)];
        return z;
    }
    /// Phi^{-1}(X) for a physical point above the flat node's x.
    [[nodiscard]] std::vector<double> inverse(std::size_t node, std::span<const double> X) const {
        std::vector<double> z(X.begin(), X.end());
        z.back() -= phi[x_index(node)];
        return z;
    }
};

namespace detail {

inline void check_curved_spec(const CurvedDomainSpec& s) {
    const GridPtr g = build_grid(s.grid);
    const std::size_t nxn = s.x_nodes();
    DEGPAR_REQUIRE(s.phi.size() == nxn && s.grad_phi.size() == nxn, InvalidArgument,
                   "phi table does not match the x-grid");
    for (const auto& gp : s.grad_phi)
        DEGPAR_REQUIRE(gp.size() == static_cast<std::size_t>(s.grid.n_x), InvalidArgument,
                       "grad phi needs N components per node");
    DEGPAR_REQUIRE(s.delta_flat.size() == g->spatial_size(), InvalidArgument, "delta table does not match the grid");
    DEGPAR_REQUIRE(s.c0 > 0.0 && s.mu > 0.0, InvalidArgument, "c0 and mu must be positive");
    for (double v : s.phi) DEGPAR_REQUIRE(std::isfinite(v), InvalidArgument, "phi is not finite");
    for (double v : s.delta_flat) DEGPAR_REQUIRE(std::isfinite(v), InvalidArgument, "delta is not finite");
    // phi(0) = 0 and grad phi(0) = 0 at the x-node at the origin, if the grid has one
    std::vector<double> z(static_cast<std::size_t>(g->dim()));
    for (std::size_t i = 0; i < nxn; ++i) {
        g->coords(i, z);
        bool origin = true;
        for (int k = 0; k < s.grid.n_x; ++k) origin = origin && std::abs(z[static_cast<std::size_t>(k)]) < 1e-12;
        if (!origin) continue;
        DEGPAR_REQUIRE(std::abs(s.phi[i]) <= 1e-12, InvalidArgument, "phi(0) must vanish");
        for (double v : s.grad_phi[i]) DEGPAR_REQUIRE(std::abs(v) <= 1e-12, InvalidArgument, "grad phi(0) must vanish");
    }
}

// One-sided second-order derivative along y at a y = 0 node, centred above.
inline double d_dy(std::span<const double> v, const Grid& g, std::size_t i) {
    const int yk = g.dim() - 1;
    const std::size_t s = g.stride(yk);
    const double h = g.y_axis().spacing();
    const int j = g.index_along(i, yk);
    if (j == 0) return (-3.0 * v[i] + 4.0 * v[i + s] - v[i + 2 * s]) / (2.0 * h);
    if (j == g.y_axis().count - 1) return (3.0 * v[i] - 4.0 * v[i - s] + v[i - 2 * s]) / (2.0 * h);
    return (v[i + s] - v[i - s]) / (2.0 * h);
}

inline double d_dx(std::span<const double> v, const Grid& g, std::size_t i, int k) {
    const std::size_t s = g.stride(k);
    const double h = g.axis(k).spacing();
    const int j = g.index_along(i, k);
    const int last = g.axis(k).count - 1;
    if (j == 0) return (-3.0 * v[i] + 4.0 * v[i + s] - v[i + 2 * s]) / (2.0 * h);
    if (j == last) return (3.0 * v[i] - 4.0 * v[i - s] + v[i - 2 * s]) / (2.0 * h);
    return (v[i + s] - v[i - s]) / (2.0 * h);
}

inline Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

}  // namespace detail

inline FlattenMap flatten_map(const CurvedDomainSpec& spec) {
    detail::check_curved_spec(spec);
    FlattenMap m;
    m.grid = build_grid(spec.grid);
    m.phi = spec.phi;
    m.grad_phi = spec.grad_phi;
    for (std::size_t i = 0; i < m.grid->spatial_size(); ++i)
        DEGPAR_REQUIRE(std::abs(m.det(i)) == 1.0, InvalidArgument, "flattening Jacobian is not unimodular");
    return m;
}

/// delta~/y per flat node; on y = 0 the positive limit d_y delta~.
inline std::vector<double> delta_ratio(const CurvedDomainSpec& spec, const Grid& g) {
    std::vector<double> r(g.spatial_size());
    const int yk = g.dim() - 1;
    for (std::size_t i = 0; i < g.spatial_size(); ++i) {
        const double y = g.coord(i, yk);
        r[i] = y == 0.0 ? detail::d_dy(spec.delta_flat, g, i) : spec.delta_flat[i] / y;
    }
    return r;
}

/// Physical coefficient, as a function of the physical point.
using MatrixFn = std::function<Eigen::MatrixXd(std::span<const double>)>;
/// Physical source or flux component, as a function of (point, time).
using SpaceTimeFn = std::function<double(std::span<const double>, double)>;

struct FlattenedProblem {
    CoefficientField A_tilde;  // J^-1 A J^-T
    CoefficientField A_bar;    // A_tilde (delta~/y)^a
    std::vector<double> b;     // (delta~/y)^a, the time coefficient
    SourceData data;           // f_bar, F_bar on the flat grid
    double lambda_bar = 0.0;
    double Lambda_bar = 0.0;
    double phi_c1alpha = 0.0;    // ||phi||_{C^{1,alpha}} on the x-nodes (logged)
    double delta_c1alpha = 0.0;  // ||delta~||_{C^{1,alpha}} on the flat grid (logged)
};

namespace detail {

// ||phi||_{C^{1,alpha}} over the x-nodes: sup|phi| + sup|grad phi| + [grad phi]_alpha.
inline double phi_norm(const FlattenMap& m, double alpha) {
    const Grid& g = *m.grid;
    const std::size_t n = m.phi.size();
    double sup = 0.0, gsup = 0.0, semi = 0.0;
    std::vector<double> zi, zj;
    for (std::size_t i = 0; i < n; ++i) {
        sup = std::max(sup, std::abs(m.phi[i]));
        double gi = 0.0;
        for (double v : m.grad_phi[i]) gi += v * v;
        gsup = std::max(gsup, std::sqrt(gi));
        zi = g.coords(i);
        for (std::size_t j = i + 1; j < n; ++j) {
            zj = g.coords(j);
            double d2 = 0.0, g2 = 0.0;
            for (int k = 0; k + 1 < g.dim(); ++k) {
                const auto kk = static_cast<std::size_t>(k);
                d2 += (zi[kk] - zj[kk]) * (zi[kk] - zj[kk]);
                const double dg = m.grad_phi[i][kk] - m.grad_phi[j][kk];
                g2 += dg * dg;
            }
            semi = std::max(semi, std::sqrt(g2) / std::pow(d2, 0.5 * alpha));
        }
    }
    return sup + gsup + semi;
}

}  // namespace detail

/// Flattened coefficients and data. A, f, F are physical; the weight exponent
/// a enters through b = (delta~/y)^a.
inline FlattenedProblem transform_problem(const CurvedDomainSpec& spec, const FlattenMap& map, double a,
                                          const MatrixFn& A, double lambda, double Lambda,
                                          const SpaceTimeFn& f = {}, const std::vector<SpaceTimeFn>& F = {}) {
    const Grid& g = *map.grid;
    const int d = g.dim();
    const std::size_t S = g.spatial_size();
    const std::vector<double> ratio = delta_ratio(spec, g);
    FlattenedProblem out;
    out.b.resize(S);
    double bmin = std::numeric_limits<double>::infinity(), bmax = 0.0;
    for (std::size_t i = 0; i < S; ++i) {
        DEGPAR_REQUIRE(ratio[i] >= spec.mu, InvalidArgument,
                       "delta~/y = " + std::to_string(ratio[i]) + " falls below mu = " + std::to_string(spec.mu) +
                           " at node " + std::to_string(i));
        out.b[i] = std::pow(ratio[i], a);
        bmin = std::min(bmin, out.b[i]);
        bmax = std::max(bmax, out.b[i]);
    }
    // |grad delta| >= c0 on the physical side: grad_X delta = J^-T grad_z delta~
    {
        Eigen::VectorXd gz(d);
        for (std::size_t i = 0; i < S; ++i) {
            for (int k = 0; k + 1 < d; ++k) gz(k) = detail::d_dx(spec.delta_flat, g, i, k);
            gz(d - 1) = detail::d_dy(spec.delta_flat, g, i);
            const double n = (map.jacobian_inverse(i).transpose() * gz).norm();
            DEGPAR_REQUIRE(n >= spec.c0 * (1.0 - 1e-9), InvalidArgument,
                           "|grad delta| = " + std::to_string(n) + " falls below c0 at node " + std::to_string(i));
        }
    }

    double smin = std::numeric_limits<double>::infinity(), smax = 0.0;
    std::vector<Eigen::MatrixXd> at(S), bar(S);
    for (std::size_t i = 0; i < S; ++i) {
        const std::vector<double> X = map.forward(i);
        const Eigen::MatrixXd Ji = map.jacobian_inverse(i);
        const Eigen::JacobiSVD<Eigen::MatrixXd> svd(Ji);
        smin = std::min(smin, svd.singularValues().minCoeff());
        smax = std::max(smax, svd.singularValues().maxCoeff());
        at[i] = detail::symmetrized(Ji * A(X) * Ji.transpose());
        bar[i] = at[i] * out.b[i];
    }
    const double lt = lambda * smin * smin, Lt = Lambda * smax * smax;
    out.lambda_bar = lt * bmin;
    out.Lambda_bar = Lt * bmax;
    DEGPAR_REQUIRE(std::isfinite(out.lambda_bar) && std::isfinite(out.Lambda_bar) && out.lambda_bar > 0.0,
                   InvalidArgument, "transformed ellipticity bounds are not finite");
    // from_function visits the spatial nodes in index order
    auto from_nodes = [&](const std::vector<Eigen::MatrixXd>& v, double lo, double hi) {
        std::size_t idx = 0;
        return CoefficientField::from_function(g, [&](std::span<const double>) { return v[idx++]; }, lo, hi);
    };
    out.A_tilde = from_nodes(at, lt, Lt);
    out.A_bar = from_nodes(bar, out.lambda_bar, out.Lambda_bar);

    auto sample_phys = [&](const SpaceTimeFn& fn, const std::function<double(std::size_t, double, double)>& post) {
        Field fld(map.grid);
        for (int n = 0; n < g.time_levels(); ++n)
            for (std::size_t i = 0; i < S; ++i) {
                const std::vector<double> X = map.forward(i);
                fld.at(i, n) = post(i, fn(X, g.time(n)), g.time(n));
            }
        return fld;
    };
    if (f) out.data.f = sample_phys(f, [&](std::size_t i, double v, double) { return v * out.b[i]; });
    if (!F.empty()) {
        DEGPAR_REQUIRE(F.size() == static_cast<std::size_t>(d), InvalidArgument, "F needs N+1 components");
        // F_bar = J^-1 F b; the components mix only in the last row.
        std::vector<Field> phys;
        for (const auto& c : F) phys.push_back(c ? sample_phys(c, [](std::size_t, double v, double) { return v; }) : Field(map.grid, 0.0));
        out.data.F.assign(static_cast<std::size_t>(d), Field(map.grid, 0.0));
        for (int n = 0; n < g.time_levels(); ++n)
            for (std::size_t i = 0; i < S; ++i) {
                const Eigen::MatrixXd Ji = map.jacobian_inverse(i);
                Eigen::VectorXd v(d);
                for (int k = 0; k < d; ++k) v(k) = phys[static_cast<std::size_t>(k)].at(i, n);
                const Eigen::VectorXd w = Ji * v * out.b[i];
                for (int k = 0; k < d; ++k) out.data.F[static_cast<std::size_t>(k)].at(i, n) = w(k);
            }
    }
    out.phi_c1alpha = detail::phi_norm(map, spec.alpha);
    Field dl(g.level_grid(0), spec.delta_flat);
    out.delta_c1alpha = holder_seminorm(dl, spec.alpha, std::nullopt, 1).norm();
    return out;
}

/// A = J A~ J^T at one node.
inline Eigen::MatrixXd untransform_coefficient(const FlattenMap& map, std::size_t node, const Eigen::MatrixXd& At) {
    const Eigen::MatrixXd J = map.jacobian(node);
    return J * At * J.transpose();
}

/// A curved problem in physical coordinates. Gamma carries the conormal
/// condition; every other face of the flattened box is Dirichlet with trace
/// `trace` (zero when empty).
struct CurvedProblem {
    double a = 0.0;
    MatrixFn A;  // default: identity
    double lambda = 1.0;
    double Lambda = 1.0;
    SpaceTimeFn f;
    std::vector<SpaceTimeFn> F;
    PointFn u0;
    SpaceTimeFn trace;
};

struct CurvedSolution {
    FlattenMap map;
    FlattenedProblem flat;
    Field u;  // nodal values at Phi(z) for every flat node z
    double conormal_residual = 0.0;

    /// Physical coordinates of flat spatial node i.
    [[nodiscard]] std::vector<double> physical(std::size_t i) const { return map.forward(i); }
};

/// max over Gamma nodes and time levels of |(A grad u + F) . nu|, with
/// nu = (grad phi, -1)/sqrt(1 + |grad phi|^2), grad u = J^-T grad u~.
inline double curved_conormal_residual(const FlattenMap& map, const Field& u, const MatrixFn& A,
                                       const std::vector<SpaceTimeFn>& F = {}) {
    const Grid& g = *map.grid;
    const int d = g.dim();
    double worst = 0.0;
    Eigen::VectorXd gz(d), nu(d), Fv(d);
    for (int n = 0; n < g.time_levels(); ++n) {
        const auto lvl = u.level(n);
        for (std::size_t i = 0; i < g.spatial_size(); ++i) {
            if (g.index_along(i, d - 1) != 0) continue;
            for (int k = 0; k + 1 < d; ++k) gz(k) = detail::d_dx(lvl, g, i, k);
            gz(d - 1) = detail::d_dy(lvl, g, i);
            const Eigen::VectorXd gx = map.jacobian_inverse(i).transpose() * gz;
            const auto& gp = map.grad_phi[map.x_index(i)];
            for (int k = 0; k + 1 < d; ++k) nu(k) = gp[static_cast<std::size_t>(k)];
            nu(d - 1) = -1.0;
            nu /= nu.norm();
            const std::vector<double> X = map.forward(i);
            const Eigen::MatrixXd Ax = A ? A(X) : Eigen::MatrixXd::Identity(d, d);
            Fv.setZero();
            for (std::size_t k = 0; k < F.size(); ++k)
                if (F[k]) Fv(static_cast<Eigen::Index>(k)) = F[k](X, g.time(n));
            worst = std::max(worst, std::abs((Ax * gx + Fv).dot(nu)));
        }
    }
    return worst;
}

/// Solves b y^a d_t u - div(y^a A_bar grad u) = y^a f_bar + div(y^a F_bar) on
/// the flat grid and reports the conormal residual on Gamma.
inline CurvedSolution solve_curved(const CurvedDomainSpec& spec, const CurvedProblem& prob,
                                   const EvolveConfig& cfg = EvolveConfig{}) {
    CurvedSolution sol;
    sol.map = flatten_map(spec);
    const GridPtr& g = sol.map.grid;
    const int d = g->dim();
    const MatrixFn A = prob.A ? prob.A : MatrixFn([d](std::span<const double>) { return Eigen::MatrixXd::Identity(d, d); });
    sol.flat = transform_problem(spec, sol.map, prob.a, A, prob.lambda, prob.Lambda, prob.f, prob.F);
    DEGPAR_REQUIRE(static_cast<bool>(prob.u0), InvalidArgument, "curved problem needs initial data");

    Field u0(g->level_grid(0));
    for (std::size_t i = 0; i < g->spatial_size(); ++i) u0.values[i] = prob.u0(sol.map.forward(i));
    BoundaryCondition bc = BoundaryCondition::conormal_sigma(d);
    if (prob.trace) {
        const FlattenMap& m = sol.map;
        const SpaceTimeFn tr = prob.trace;
        const int n_x = d - 1;
        bc.set_trace_all([&m, tr, n_x](std::span<const double> z, double t) {
            std::vector<double> X(z.begin(), z.end());
            // phi at this x: locate the x-node by coordinates
            std::size_t idx = 0;
            for (int k = n_x - 1; k >= 0; --k) {
                const Axis& ax = m.grid->axis(k);
                const auto j = static_cast<std::size_t>(std::lround((z[static_cast<std::size_t>(k)] - ax.lo) / ax.spacing()));
                idx = idx * static_cast<std::size_t>(ax.count) + j;
            }
            X.back() += m.phi[idx];
            return tr(X, t);
        });
    }
    Problem p{{prob.a, 0.0}, sol.flat.A_bar, sol.flat.data, bc, sol.flat.b};
    sol.u = solve_ivp(p, u0, g, cfg);
    sol.conormal_residual = curved_conormal_residual(sol.map, sol.u, A, prob.F);
    return sol;
}

/// Reads a CurvedDomainSpec from "key = values" lines. Keys: n_x, L, y_max,
/// nx, ny, nt, t0, t1 (grid); c0, mu, alpha; phi, grad_phi, delta (tables of
/// whitespace-separated numbers). '#' starts a comment.
inline CurvedDomainSpec read_curved_spec(std::istream& is) {
    std::map<std::string, std::vector<double>> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
        const auto eq = line.find('=');
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        DEGPAR_REQUIRE(eq != std::string::npos, InvalidArgument, "line " + std::to_string(lineno) + ": expected key = value");
        std::string key = line.substr(0, eq);
        key.erase(0, key.find_first_not_of(" \t"));
        key.erase(key.find_last_not_of(" \t") + 1);
        std::istringstream vs(line.substr(eq + 1));
        std::vector<double> vals;
        std::string tok;
        while (vs >> tok) {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(tok, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            DEGPAR_REQUIRE(used == tok.size(), InvalidArgument, "line " + std::to_string(lineno) + ": bad number '" + tok + "'");
            vals.push_back(v);
        }
        kv[key] = vals;
    }
    static const std::set<std::string> known{"n_x", "L",  "y_max", "nx",  "ny",  "nt",       "t0",
                                             "t1",  "c0", "mu",    "alpha", "phi", "grad_phi", "delta"};
    for (const auto& [k, v] : kv) DEGPAR_REQUIRE(known.count(k), InvalidArgument, "unknown key '" + k + "'");
    auto scalar = [&](const std::string& k, double def) {
        const auto it = kv.find(k);
        if (it == kv.end()) return def;
        DEGPAR_REQUIRE(it->second.size() == 1, InvalidArgument, "key '" + k + "' takes one value");
        return it->second.front();
    };
    CurvedDomainSpec s;
    s.grid.n_x = static_cast<int>(scalar("n_x", 1));
    s.grid.L = scalar("L", 1.0);
    s.grid.y_max = scalar("y_max", 1.0);
    s.grid.nx = static_cast<int>(scalar("nx", 8));
    s.grid.ny = static_cast<int>(scalar("ny", 8));
    s.grid.nt = static_cast<int>(scalar("nt", 8));
    s.grid.t0 = scalar("t0", -1.0);
    s.grid.t1 = scalar("t1", 1.0);
    s.c0 = scalar("c0", 0.0);
    s.mu = scalar("mu", 0.0);
    s.alpha = scalar("alpha", 0.5);
    s.phi = kv["phi"];
    const auto& gp = kv["grad_phi"];
    DEGPAR_REQUIRE(gp.size() == s.phi.size() * static_cast<std::size_t>(s.grid.n_x), InvalidArgument,
                   "grad_phi needs N values per phi entry");
    for (std::size_t i = 0; i < s.phi.size(); ++i)
        s.grad_phi.emplace_back(gp.begin() + static_cast<std::ptrdiff_t>(i * static_cast<std::size_t>(s.grid.n_x)),
                                gp.begin() + static_cast<std::ptrdiff_t>((i + 1) * static_cast<std::size_t>(s.grid.n_x)));
    s.delta_flat = kv["delta"];
    detail::check_curved_spec(s);
    return s;
}

}  // namespace degpar
