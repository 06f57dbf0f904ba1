#include "degpar/evolve.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace degpar;

namespace {

GridPtr grid(int n_x, int nx, int ny, int nt, double t0 = 0.0, double t1 = 1.0) {
    GridSpec s;
    s.n_x = n_x;
    s.nx = nx;
    s.ny = ny;
    s.nt = nt;
    s.t0 = t0;
    s.t1 = t1;
    return build_grid(s);
}

double g2(double y, double a) { return y * y / (2.0 * (1.0 + a)); }

double linf_error(const Field& u, const std::function<double(std::span<const double>, double)>& exact, int level) {
    const Grid& g = *u.grid;
    double e = 0.0;
    std::vector<double> z(static_cast<std::size_t>(g.dim()));
    for (std::size_t i = 0; i < g.spatial_size(); ++i) {
        g.coords(i, z);
        e = std::max(e, std::abs(u.at(i, level) - exact(z, g.time(level))));
    }
    return e;
}

Field initial(const GridPtr& g, const std::function<double(std::span<const double>, double)>& fn) {
    return sample(g->level_grid(0), fn);
}

// Manufactured solution g_2(y) + c t with f = c - 1: conormal at y = 0,
// Dirichlet at y = 1, natural x faces.
double mms_error(double a, int ny, double c) {
    auto g = grid(1, 4, ny, 4);
    auto exact = [a, c](std::span<const double> z, double t) { return g2(z[1], a) + c * t; };
    Problem p{{a, 0.0}, CoefficientField::identity(2), {}, BoundaryCondition::all_natural(2), {}};
    p.bc.set(3, FaceKind::Dirichlet, exact);
    if (c != 1.0) p.data.f = Field(g->level_grid(0), c - 1.0);
    Field u = solve_ivp(p, initial(g, exact), g, EvolveConfig{});
    return linf_error(u, exact, g->time_levels() - 1);
}

}  // namespace

TEST(Evolve, ConfigValidation) {
    EvolveConfig c;
    c.theta = 0.3;
    EXPECT_THROW(c.validate(), InvalidArgument);
    c = EvolveConfig{};
    c.tolerance = 1e-3;
    EXPECT_THROW(c.validate(), InvalidArgument);
    c = EvolveConfig{};
    c.checkpoint_stride = 2;
    EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(Evolve, ConstantsStayConstant) {
    auto g = grid(1, 6, 6, 5);
    for (double a : {-0.5, 0.5, 2.0}) {
        Field u = solve_ivp({a, 0.0}, CoefficientField::identity(2), {}, BoundaryCondition::all_natural(2),
                            Field(g->level_grid(0), 3.25), g, EvolveConfig{});
        for (double v : u.values) EXPECT_NEAR(v, 3.25, 1e-11);
    }
}

TEST(Evolve, ManufacturedProfileSecondOrder) {
    for (double a : {-0.5, 0.5, 1.0, 2.0}) {
        for (double c : {1.0, 2.0}) {
            std::vector<double> err;
            for (int ny : {8, 16, 32, 64}) err.push_back(mms_error(a, ny, c));
            for (std::size_t k = 1; k < err.size(); ++k) {
                const double order = std::log2(err[k - 1] / err[k]);
                EXPECT_GE(order, 1.8) << "a=" << a << " c=" << c << " ny=" << (8 << k);
            }
        }
    }
}

TEST(Evolve, QuadraticInXIsReproduced) {
    // |x|^2 + 2N t is reproduced nodally: Dirichlet x faces, natural in y.
    for (int n_x : {1, 2}) {
        auto g = grid(n_x, 6, 4, 4);
        auto exact = [n_x](std::span<const double> z, double t) {
            double s = 0.0;
            for (int k = 0; k < n_x; ++k) s += z[static_cast<std::size_t>(k)] * z[static_cast<std::size_t>(k)];
            return s + 2.0 * n_x * t;
        };
        BoundaryCondition bc = BoundaryCondition::all_natural(n_x + 1);
        for (int k = 0; k < n_x; ++k) {
            bc.set(2 * k, FaceKind::Dirichlet, exact);
            bc.set(2 * k + 1, FaceKind::Dirichlet, exact);
        }
        Field u = solve_ivp({0.7, 0.0}, CoefficientField::identity(n_x + 1), {}, bc, initial(g, exact), g,
                            EvolveConfig{});
        for (int n = 0; n < g->time_levels(); ++n) EXPECT_LT(linf_error(u, exact, n), 1e-10);
    }
}

TEST(Evolve, SubstepsMatchFinerLevels) {
    const double a = 0.5;
    auto exact = [a](std::span<const double> z, double t) { return g2(z[1], a) + t; };
    Problem p{{a, 0.0}, CoefficientField::identity(2), {}, BoundaryCondition::all_natural(2), {}};
    p.bc.set(3, FaceKind::Dirichlet, exact);
    auto coarse = grid(1, 4, 16, 2);
    auto fine = grid(1, 4, 16, 8);
    EvolveConfig four;
    four.dt = coarse->dt() / 4;
    Field uc = solve_ivp(p, initial(coarse, exact), coarse, four);
    Field uf = solve_ivp(p, initial(fine, exact), fine, EvolveConfig{});
    for (std::size_t i = 0; i < coarse->spatial_size(); ++i) EXPECT_NEAR(uc.at(i, 2), uf.at(i, 8), 1e-11);
    four.dt = coarse->dt() / 3.5;
    EXPECT_THROW(solve_ivp(p, initial(coarse, exact), coarse, four), InvalidArgument);
}

TEST(Evolve, ThetaOneIsFirstOrderInTime) {
    const double a = 0.0;
    auto exact = [](std::span<const double> z, double t) { return std::exp(-t) * std::cos(M_PI * z[1] / 2); };
    std::vector<double> err;
    for (int nt : {8, 16, 32}) {
        auto g = grid(1, 2, 64, nt);
        Problem p{{a, 0.0}, CoefficientField::identity(2), {}, BoundaryCondition::all_natural(2), {}};
        p.bc.set(3, FaceKind::Dirichlet, exact);
        // u_t - u_yy = (pi^2/4 - 1) u
        p.data.f = sample(g, [&](std::span<const double> z, double t) { return (M_PI * M_PI / 4 - 1) * exact(z, t); });
        EvolveConfig c;
        c.theta = 1.0;
        Field u = solve_ivp(p, initial(g, exact), g, c);
        err.push_back(linf_error(u, exact, nt));
    }
    EXPECT_NEAR(std::log2(err[0] / err[1]), 1.0, 0.15);
    EXPECT_NEAR(std::log2(err[1] / err[2]), 1.0, 0.15);
}

TEST(Evolve, StartupStepsDampStiffModes) {
    auto g = grid(1, 16, 16, 4);
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> uv(-1, 1);
    Field u0(g->level_grid(0));
    for (auto& v : u0.values) v = uv(rng);
    auto last_max = [&](int startup) {
        EvolveConfig c;
        c.startup_steps = startup;
        Field u = solve_ivp({0.5, 0.0}, CoefficientField::identity(2), {}, BoundaryCondition::conormal_sigma(2), u0, g, c);
        double m = 0.0;
        for (double v : u.level(4)) m = std::max(m, std::abs(v));
        return m;
    };
    EXPECT_LT(last_max(2), 0.1 * last_max(0));
    EvolveConfig bad;
    bad.startup_steps = -1;
    EXPECT_THROW(bad.validate(), InvalidArgument);
}

TEST(Evolve, StartupStepsKeepSecondOrder) {
    auto exact = [](std::span<const double> z, double t) { return std::exp(-t) * std::cos(M_PI * z[1] / 2); };
    std::vector<double> err;
    for (int n : {8, 16, 32}) {
        auto g = grid(1, 2, 4 * n, n);
        Problem p{{0.0, 0.0}, CoefficientField::identity(2), {}, BoundaryCondition::all_natural(2), {}};
        p.bc.set(3, FaceKind::Dirichlet, exact);
        p.data.f = sample(g, [&](std::span<const double> z, double t) { return (M_PI * M_PI / 4 - 1) * exact(z, t); });
        EvolveConfig c;
        c.startup_steps = 2;
        err.push_back(linf_error(solve_ivp(p, initial(g, exact), g, c), exact, n));
    }
    EXPECT_GE(std::log2(err[0] / err[1]), 1.8);
    EXPECT_GE(std::log2(err[1] / err[2]), 1.8);
}

TEST(Evolve, Deterministic) {
    auto g = grid(1, 8, 8, 6);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> uv(-1, 1);
    Field u0(g->level_grid(0));
    for (auto& v : u0.values) v = uv(rng);
    auto run = [&] {
        return solve_ivp({0.5, 0.1}, CoefficientField::identity(2), {}, BoundaryCondition::conormal_sigma(2), u0, g,
                         EvolveConfig{});
    };
    EXPECT_EQ(run().values, run().values);
}

TEST(Evolve, SolverFailureReportsResidual) {
    auto g = grid(1, 16, 16, 2);
    Field u0 = sample(g->level_grid(0), [](std::span<const double> z, double) { return std::sin(5 * z[0]) + z[1]; });
    EvolveConfig c;
    c.max_iterations = 1;
    c.tolerance = 1e-14;
    try {
        solve_ivp({0.5, 0.0}, CoefficientField::identity(2), {}, BoundaryCondition::conormal_sigma(2), u0, g, c);
        FAIL() << "expected SolverFailure";
    } catch (const SolverFailure& e) {
        EXPECT_GT(e.residual(), 0.0);
        EXPECT_EQ(e.iterations(), 1);
    }
}

TEST(Evolve, MaximumPrincipleSmoke) {
    std::vector<double> overshoot;
    for (int n : {8, 16, 32}) {
        auto g = grid(1, n, n, n);
        BoundaryCondition bc = BoundaryCondition::conormal_sigma(2);
        bc.set_trace_all([](std::span<const double> z, double) { return z[0] > 0 ? 1.0 : 0.0; });
        Field u0 = sample(g->level_grid(0), [](std::span<const double> z, double) { return z[0] > 0 ? 1.0 : 0.0; });
        EvolveConfig c;
        c.theta = 1.0;
        Field u = solve_ivp({0.5, 0.0}, CoefficientField::identity(2), {}, bc, u0, g, c);
        double o = 0.0;
        for (double v : u.values) o = std::max({o, v - 1.0, -v});
        overshoot.push_back(o);
    }
    EXPECT_LT(overshoot.back(), 0.05);
    EXPECT_LE(overshoot[2], overshoot[0] + 1e-12);
}

TEST(Evolve, Checkpoints) {
    auto g = grid(1, 4, 4, 4);
    const auto dir = std::filesystem::temp_directory_path() / "degpar_ckpt_test";
    std::filesystem::remove_all(dir);
    EvolveConfig c;
    c.checkpoint_stride = 2;
    c.checkpoint_dir = dir;
    Field u0 = sample(g->level_grid(0), [](std::span<const double> z, double) { return z[0] * z[1]; });
    Field u = solve_ivp({0.5, 0.0}, CoefficientField::identity(2), {}, BoundaryCondition::conormal_sigma(2), u0, g, c);
    for (int lvl : {0, 2, 4}) {
        char name[64];
        std::snprintf(name, sizeof name, "level_%06d.dgpf", lvl);
        std::ifstream is(dir / name, std::ios::binary);
        ASSERT_TRUE(is.good()) << name;
        Field back = read_binary(is);
        EXPECT_EQ(back.values, u.level_field(lvl).values);
    }
    EXPECT_FALSE(std::filesystem::exists(dir / "level_000001.dgpf"));
    std::filesystem::remove_all(dir);
}

TEST(Evolve, SteadyConvergence) {
    // Pointwise error carries an h^2 log(1/h) layer next to y = 0; away from
    // it the nodal error is a clean h^2.
    const double a = 0.5;
    auto exact = [a](std::span<const double> z, double) { return g2(z[1], a); };
    std::vector<double> err, err_far;
    for (int ny : {16, 32, 64, 128}) {
        auto g = grid(1, 2, ny, 2);
        Problem p{{a, 0.0}, CoefficientField::identity(2), {}, BoundaryCondition::all_natural(2), {}};
        p.bc.set(3, FaceKind::Dirichlet, exact);
        p.data.f = Field(g->level_grid(0), -1.0);
        Field u = solve_steady(p, g);
        err.push_back(linf_error(u, exact, 0));
        Region far = Region::whole(*u.grid);
        far.y = {0.25, 1.0};
        err_far.push_back(linf_error(restrict(u, far), exact, 0));
    }
    for (std::size_t k = 1; k < err.size(); ++k) {
        EXPECT_GE(std::log2(err[k - 1] / err[k]), 1.75);
        EXPECT_NEAR(std::log2(err_far[k - 1] / err_far[k]), 2.0, 0.02);
    }
    Problem none{{a, 0.0}, CoefficientField::identity(2), {}, BoundaryCondition::all_natural(2), {}};
    EXPECT_THROW(solve_steady(none, grid(1, 2, 4, 2)), InvalidArgument);
}

TEST(Evolve, SteklovAverage) {
    auto g = grid(1, 3, 3, 8);
    Field c = sample(g, [](std::span<const double> z, double) { return z[0] + z[1]; });
    Field sc = steklov_average(c, 3);
    EXPECT_EQ(sc.grid->time_levels(), 6);
    for (int n = 0; n < 6; ++n)
        for (std::size_t i = 0; i < g->spatial_size(); ++i) EXPECT_NEAR(sc.at(i, n), c.at(i, 0), 1e-15);

    Field t = sample(g, [](std::span<const double>, double tt) { return tt; });
    const double h = 2 * g->dt();
    Field st = steklov_average(t, h);
    for (int n = 0; n < st.grid->time_levels(); ++n) EXPECT_NEAR(st.at(0, n), g->time(n) + h / 2, 1e-14);

    Field u = sample(g, [](std::span<const double> z, double tt) { return std::sin(z[0] * tt); });
    Field v = sample(g, [](std::span<const double> z, double tt) { return z[1] * tt * tt; });
    Field comb(g);
    for (std::size_t k = 0; k < comb.values.size(); ++k) comb.values[k] = 2 * u.values[k] - 3 * v.values[k];
    Field lhs = steklov_average(comb, 2);
    Field su = steklov_average(u, 2), sv = steklov_average(v, 2);
    for (std::size_t k = 0; k < lhs.values.size(); ++k)
        EXPECT_NEAR(lhs.values[k], 2 * su.values[k] - 3 * sv.values[k], 1e-14);

    Region r = Region::whole(*g);
    r.x = {{0.0, 1.0}};
    r.y = {0.0, 2.0 / 3.0};
    EXPECT_EQ(steklov_average(restrict(u, r), 2).values, restrict(su, [&] {
                                                         Region rr = r;
                                                         rr.t = {g->time(0), g->time(6)};
                                                         return rr;
                                                     }()).values);
    EXPECT_THROW(steklov_average(u, 9), InvalidArgument);
    EXPECT_THROW(steklov_average(u, 0.3 * g->dt()), InvalidArgument);
}

TEST(Evolve, EnergyZeroData) {
    auto g = grid(1, 4, 4, 4);
    Field z0(g->level_grid(0), 0.0);
    Field u = solve_ivp({0.5, 0.0}, CoefficientField::identity(2), {}, BoundaryCondition::conormal_sigma(2), z0, g,
                        EvolveConfig{});
    const auto r = energy_estimate_check(u, {0.5, 0.0}, {}, z0);
    EXPECT_EQ(r.lhs, 0.0);
    EXPECT_EQ(r.rhs, 0.0);
    EXPECT_EQ(r.ratio, 0.0);
    Field bogus(g, 1.0);
    EXPECT_THROW(energy_estimate_check(bogus, {0.5, 0.0}, {}, z0), InvalidArgument);
}

namespace {
double energy_ratio(double a, double eps, int n) {
    auto g = grid(1, n, n, n, -1.0, 1.0);
    SourceData d;
    d.f = Field(g->level_grid(0), 1.0);
    Field u0(g->level_grid(0), 0.0);
    Field u = solve_ivp({a, eps}, CoefficientField::identity(2), d, BoundaryCondition::conormal_sigma(2), u0, g,
                        EvolveConfig{});
    SourceData dt;
    dt.f = Field(g, 1.0);
    return energy_estimate_check(u, {a, eps}, dt, u0).ratio;
}
}  // namespace

TEST(Evolve, EnergyRatioStableUnderRefinement) {
    const double r16 = energy_ratio(0.0, 0.0, 16);
    const double r32 = energy_ratio(0.0, 0.0, 32);
    EXPECT_TRUE(std::isfinite(r16));
    EXPECT_NEAR(r32 / r16, 1.0, 0.1);
}

TEST(Evolve, EnergyRatioEpsSweep) {
    for (double a : {-0.5, 0.5, 1.5}) {
        std::vector<double> r;
        for (double eps : {0.0, 0.1, 0.4}) r.push_back(energy_ratio(a, eps, 16));
        const auto [lo, hi] = std::minmax_element(r.begin(), r.end());
        EXPECT_LE(*hi / *lo, 2.0) << "a=" << a;
    }
}
