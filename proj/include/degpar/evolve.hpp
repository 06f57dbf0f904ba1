#pragma once

// Theta-scheme time stepping for the weighted equation, steady solves,
// Steklov averages and the a-priori energy estimate.

#include "degpar/domain.hpp"
#include "degpar/norms.hpp"
#include "degpar/operator.hpp"

#include <Eigen/IterativeLinearSolvers>

#include <filesystem>
#include <fstream>

namespace degpar {

struct EvolveConfig {
    double theta = 0.5;
    double dt = 0.0;  // 0: one step per output level; otherwise must divide the level spacing
    double tolerance = 1e-12;
    int max_iterations = 0;  // 0: 10 x number of unknowns
    int checkpoint_stride = 0;
    std::filesystem::path checkpoint_dir;
    int startup_steps = 0;  // leading output steps taken as two implicit Euler half-steps each

    void validate() const {
        DEGPAR_REQUIRE(theta >= 0.5 && theta <= 1.0, InvalidArgument, "theta must lie in [1/2, 1]");
        DEGPAR_REQUIRE(dt >= 0.0 && std::isfinite(dt), InvalidArgument, "dt must be positive");
        DEGPAR_REQUIRE(tolerance > 0.0 && tolerance <= 1e-6, InvalidArgument, "tolerance must lie in (0, 1e-6]");
        DEGPAR_REQUIRE(checkpoint_stride >= 0, InvalidArgument, "checkpoint stride must be nonnegative");
        DEGPAR_REQUIRE(startup_steps >= 0, InvalidArgument, "startup steps must be nonnegative");
        DEGPAR_REQUIRE(checkpoint_stride == 0 || !checkpoint_dir.empty(), InvalidArgument,
                       "checkpointing needs a directory");
    }
};

/// Everything that defines one instance of the equation on a fixed grid.
/// mass_factor, when non-empty, multiplies the time-derivative term nodewise.
struct Problem {
    WeightSpec w;
    CoefficientField A;
    SourceData data;
    BoundaryCondition bc;
    std::vector<double> mass_factor;
};

namespace detail {

inline int data_level(const Field& f, int level) {
    return f.grid && f.grid->time_levels() > 1 ? level : 0;
}

inline Vector load_at_level(const Discretization& disc, const SourceData& data, int level) {
    std::span<const double> f;
    if (data.has_f()) f = data.f.level(data_level(data.f, level));
    std::vector<std::span<const double>> F;
    for (const auto& c : data.F) F.push_back(c.grid ? c.level(data_level(c, level)) : std::span<const double>{});
    return disc.load(f, F);
}

inline void check_data(const SourceData& data, const Grid& g) {
    auto check = [&](const Field& f) {
        if (!f.grid) return;
        DEGPAR_REQUIRE(f.grid->spatial_size() == g.spatial_size(), InvalidArgument,
                       "source data lives on a different spatial grid");
        DEGPAR_REQUIRE(f.grid->time_levels() == 1 || f.grid->time_levels() == g.time_levels(), InvalidArgument,
                       "source data must be time-independent or share the time levels");
        DEGPAR_REQUIRE(f.all_finite(), InvalidArgument, "source data is not finite");
    };
    check(data.f);
    DEGPAR_REQUIRE(data.F.empty() || static_cast<int>(data.F.size()) == g.dim(), InvalidArgument,
                   "F needs one component per spatial direction");
    for (const auto& c : data.F) check(c);
}

class CgSolver {
public:
    CgSolver(const SparseMatrix& a, double tol, int max_iter) {
        cg_.setTolerance(tol);
        cg_.setMaxIterations(max_iter > 0 ? max_iter : static_cast<int>(std::max<Eigen::Index>(10 * a.rows(), 100)));
        cg_.compute(a);
        DEGPAR_REQUIRE(cg_.info() == Eigen::Success, InvalidArgument, "system matrix could not be prepared");
    }
    Vector solve(const Vector& rhs, const Vector& guess) {
        if (rhs.size() == 0) return rhs;
        Vector x = cg_.solveWithGuess(rhs, guess);
        if (cg_.info() != Eigen::Success || !x.allFinite())
            throw SolverFailure("conjugate gradient did not converge", cg_.error(), static_cast<int>(cg_.iterations()));
        iterations_ += static_cast<long>(cg_.iterations());
        return x;
    }
    [[nodiscard]] long total_iterations() const { return iterations_; }

private:
    Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper, Eigen::DiagonalPreconditioner<double>> cg_;
    long iterations_ = 0;
};

inline void write_checkpoint(const Field& u, int level, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    char name[64];
    std::snprintf(name, sizeof name, "level_%06d.dgpf", level);
    std::ofstream os(dir / name, std::ios::binary);
    DEGPAR_REQUIRE(os.good(), InvalidArgument, "cannot open checkpoint file in " + dir.string());
    write_binary(u.level_field(level), os);
}

}  // namespace detail

/// March u from the initial level of `grid` through all of its time levels.
/// Each step solves (M + theta dt K) u^{n+1} = (M - (1-theta) dt K) u^n + dt (theta L^{n+1} + (1-theta) L^n)
/// on the free nodes; Dirichlet faces take their traces at t^{n+1}. The first
/// cfg.startup_steps steps use implicit Euler at half the step (Rannacher
/// start-up), which damps the stiff components theta = 1/2 leaves untouched.
inline Field solve_ivp(const Problem& prob, const Field& u0, const GridPtr& grid, const EvolveConfig& cfg) {
    cfg.validate();
    DEGPAR_REQUIRE(grid && grid->time_levels() >= 2, InvalidArgument, "time grid needs at least two levels");
    DEGPAR_REQUIRE(u0.grid && u0.grid->spatial_size() == grid->spatial_size(), InvalidArgument,
                   "initial data must live on the spatial grid");
    DEGPAR_REQUIRE(u0.all_finite(), InvalidArgument, "initial data is not finite");
    detail::check_data(prob.data, *grid);

    const Discretization disc(prob.w, grid->level_grid(0));
    prob.A.validate();
    const SparseMatrix M = disc.mass(prob.mass_factor);
    const SparseMatrix K = disc.stiffness(prob.A);

    const double level_dt = grid->dt();
    int sub = 1;
    if (cfg.dt > 0.0) {
        const double ratio = level_dt / cfg.dt;
        sub = static_cast<int>(std::lround(ratio));
        DEGPAR_REQUIRE(sub >= 1 && std::abs(ratio - sub) <= 1e-9 * ratio, InvalidArgument,
                       "dt must divide the output level spacing");
    }
    const double dt = level_dt / sub;
    const double theta = cfg.theta;

    const DirichletSplit split(*grid, prob.bc);
    const SparseMatrix lhs = M + (theta * dt) * K;
    const SparseMatrix explicit_part = M - ((1.0 - theta) * dt) * K;
    auto [lhs_ff, lhs_fc] = split.split(lhs);
    detail::CgSolver solver(lhs_ff, cfg.tolerance, cfg.max_iterations);
    std::optional<detail::CgSolver> startup;  // keeps a reference to startup_ff
    SparseMatrix startup_ff, startup_fc;
    if (cfg.startup_steps > 0) {
        std::tie(startup_ff, startup_fc) = split.split(SparseMatrix(M + (0.5 * dt) * K));
        startup.emplace(startup_ff, cfg.tolerance, cfg.max_iterations);
    }

    Field out(grid);
    const std::size_t S = grid->spatial_size();
    Vector u = Eigen::Map<const Vector>(u0.values.data(), static_cast<Eigen::Index>(S));
    std::copy(u0.values.begin(), u0.values.begin() + static_cast<std::ptrdiff_t>(S), out.values.begin());
    if (cfg.checkpoint_stride > 0) detail::write_checkpoint(out, 0, cfg.checkpoint_dir);

    const bool time_dependent_load = (prob.data.f.grid && prob.data.f.grid->time_levels() > 1)
        || std::any_of(prob.data.F.begin(), prob.data.F.end(),
                       [](const Field& c) { return c.grid && c.grid->time_levels() > 1; });
    const bool has_load = prob.data.has_f() || prob.data.has_F();
    const Vector zero = Vector::Zero(static_cast<Eigen::Index>(S));
    Vector load_lo = has_load ? detail::load_at_level(disc, prob.data, 0) : zero;
    Vector load_hi = load_lo;
    Vector guess = split.restrict_free(u);

    for (int n = 0; n + 1 < grid->time_levels(); ++n) {
        if (time_dependent_load) load_hi = detail::load_at_level(disc, prob.data, n + 1);
        const bool euler = n < cfg.startup_steps;
        const int pieces = euler ? 2 * sub : sub;
        for (int s = 0; s < pieces; ++s) {
            const double s0 = static_cast<double>(s) / pieces, s1 = static_cast<double>(s + 1) / pieces;
            const double t1 = grid->time(n) + s1 * level_dt;
            const Vector l1 = has_load ? Vector((1.0 - s1) * load_lo + s1 * load_hi) : zero;
            Vector rhs;
            if (euler) {
                rhs = M * u;
                if (has_load) rhs += (0.5 * dt) * l1;
            } else {
                rhs = explicit_part * u;
                if (has_load) rhs += dt * (theta * l1 + (1.0 - theta) * ((1.0 - s0) * load_lo + s0 * load_hi));
            }
            Vector r = split.restrict_free(rhs);
            Vector fixed = split.trace_values(t1);
            if (split.fixed_count() > 0) r -= (euler ? startup_fc : lhs_fc) * fixed;
            guess = euler ? startup->solve(r, guess) : solver.solve(r, guess);
            u = split.expand(guess, fixed);
        }
        load_lo = load_hi;
        std::copy(u.data(), u.data() + S, out.values.begin() + static_cast<std::ptrdiff_t>(S * (n + 1)));
        if (cfg.checkpoint_stride > 0 && (n + 1) % cfg.checkpoint_stride == 0)
            detail::write_checkpoint(out, n + 1, cfg.checkpoint_dir);
    }
    return out;
}

inline Field solve_ivp(const WeightSpec& w, const CoefficientField& A, const SourceData& data,
                       const BoundaryCondition& bc, const Field& u0, const GridPtr& grid, const EvolveConfig& cfg) {
    return solve_ivp(Problem{w, A, data, bc, {}}, u0, grid, cfg);
}

/// Time-independent problem K u = L with Dirichlet data at t = 0 (the traces'
/// time argument); the result lives on a single-level grid.
inline Field solve_steady(const Problem& prob, const GridPtr& grid, double tolerance = 1e-12) {
    DEGPAR_REQUIRE(prob.bc.has_dirichlet(), InvalidArgument, "steady problem needs at least one Dirichlet face");
    GridPtr g = grid->time_levels() == 1 ? grid : grid->level_grid(0);
    detail::check_data(prob.data, *g);
    prob.A.validate();
    const Discretization disc(prob.w, g);
    const SparseMatrix K = disc.stiffness(prob.A);
    const Vector L = (prob.data.has_f() || prob.data.has_F()) ? detail::load_at_level(disc, prob.data, 0)
                                                              : Vector::Zero(static_cast<Eigen::Index>(g->spatial_size()));
    const DirichletSplit split(*g, prob.bc);
    const auto sys = apply_dirichlet(K, L, split, g->time(0));
    detail::CgSolver solver(sys.matrix, std::min(tolerance, 1e-6), 0);
    const Vector x = solver.solve(sys.rhs, Vector::Zero(sys.rhs.size()));
    const Vector u = split.expand(x, sys.fixed_values);
    return Field(g, std::vector<double>(u.data(), u.data() + u.size()));
}

/// u_h(t_n) = (1/h) int_{t_n}^{t_n + h} u, trapezoid in time, with h = m dt.
/// The result keeps levels 0 .. nt - m of the input.
inline Field steklov_average(const Field& u, int m) {
    const Grid& g = *u.grid;
    DEGPAR_REQUIRE(m >= 1, InvalidArgument, "Steklov window must span at least one time step");
    DEGPAR_REQUIRE(m < g.time_levels(), InvalidArgument, "Steklov window exceeds the time interval");
    const int levels = g.time_levels() - m;
    auto out_grid = std::make_shared<const Grid>(g.spatial_axes(), g.time_axis().window(0, levels));
    Field out(out_grid);
    const std::size_t S = g.spatial_size();
    for (int n = 0; n < levels; ++n) {
        for (std::size_t i = 0; i < S; ++i) {
            double s = 0.5 * (u.at(i, n) + u.at(i, n + m));
            for (int k = 1; k < m; ++k) s += u.at(i, n + k);
            out.values[i + S * static_cast<std::size_t>(n)] = s / m;
        }
    }
    return out;
}

/// Window given in time units; must be a positive multiple of the level spacing.
inline Field steklov_average(const Field& u, double h) {
    const double ratio = h / u.grid->dt();
    const int m = static_cast<int>(std::lround(ratio));
    DEGPAR_REQUIRE(h > 0.0 && m >= 1 && std::abs(ratio - m) <= 1e-9 * std::max(ratio, 1.0), InvalidArgument,
                   "Steklov width must be a positive multiple of dt");
    return steklov_average(u, m);
}

struct EnergyReport {
    double lhs = 0.0;
    double rhs = 0.0;
    double ratio = 0.0;
    double sup_l2 = 0.0;
    double gradient_l2 = 0.0;
};

/// sup_t ||u||_{L2(rho)} + ||grad u||_{L2 L2(rho)} against ||f|| + ||F|| + ||u0||.
inline EnergyReport energy_estimate_check(const Field& u, const WeightSpec& w, const SourceData& data,
                                          const Field& u0) {
    EnergyReport r;
    const Grid& g = *u.grid;
    for (int n = 0; n < g.time_levels(); ++n) r.sup_l2 = std::max(r.sup_l2, lp_norm(u.level_field(n), w, 2.0));
    r.gradient_l2 = gradient_lp_norm(gradient(u), w, 2.0);
    r.lhs = r.sup_l2 + r.gradient_l2;
    if (data.has_f()) r.rhs += lp_norm(data.f, w, 2.0);
    if (data.has_F()) {
        std::vector<Field> comps;
        for (const auto& c : data.F)
            if (c.grid) comps.push_back(c);
        r.rhs += gradient_lp_norm(comps, w, 2.0);
    }
    r.rhs += lp_norm(u0.grid->time_levels() == 1 ? u0 : u0.level_field(0), w, 2.0);
    DEGPAR_REQUIRE(std::isfinite(r.lhs) && std::isfinite(r.rhs), InvalidArgument, "energy terms are not finite");
    if (r.rhs == 0.0) {
        DEGPAR_REQUIRE(r.lhs == 0.0, InvalidArgument, "energy appeared from zero data: conservation failure");
        r.ratio = 0.0;
    } else {
        r.ratio = r.lhs / r.rhs;
    }
    return r;
}

}  // namespace degpar
