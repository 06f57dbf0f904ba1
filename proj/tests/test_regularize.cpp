#include "degpar/liouville.hpp"
#include "degpar/regularize.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace degpar;

namespace {

GridSpec cube(int n, int n_x = 1) {
    GridSpec s;
    s.n_x = n_x;
    s.nx = 2 * n;
    s.ny = n;
    s.nt = 2 * n;
    return s;  // [-1,1]^N x [0,1] x [-1,1], equal spacing in x and y
}

std::function<Field(const GridPtr&, double)> smooth_u0(std::uint64_t seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> c(-1.0, 1.0);
    std::array<double, 4> coef{};
    for (double& v : coef) v = c(rng);
    return [coef, scale](const GridPtr& g, double) {
        return sample(g->level_grid(0), [&](std::span<const double> z, double) {
            double s = 0.0;
            for (int m = 0; m < 2; ++m)
                for (int n = 0; n < 2; ++n)
                    s += coef[static_cast<std::size_t>(2 * m + n)] * std::cos((2 * m + 1) * M_PI * z[0] / 2) *
                         std::cos((2 * n + 1) * M_PI * z.back() / 2);
            return scale * s;
        });
    };
}

}  // namespace

TEST(Regularize, NonpositiveAIsIdentity) {
    auto g = build_grid(cube(4));
    Field f = sample(g, [](std::span<const double> z, double t) { return z[0] + z[1] * t; });
    std::vector<Field> F{f, f};
    for (double a : {-0.5, 0.0}) {
        const auto d = regularized_data(a, f, F, 0.3, 3.0, 7.0);
        EXPECT_EQ(d.f.values, f.values);
        EXPECT_EQ(d.F[1].values, f.values);
    }
}

TEST(Regularize, MultiplierValues) {
    GridSpec s = cube(10);
    auto g = build_grid(s);  // y-nodes at multiples of 0.1
    Field one(g->level_grid(0), 1.0);
    const double eps = 0.1;
    for (double p : {2.0, 3.0, 7.5}) {
        const auto d = regularized_data(2.0, one, {}, eps, p, 2.0);
        for (std::size_t i = 0; i < g->spatial_size(); ++i) {
            const double y = g->coord(i, 1);
            if (y == 0.0) { EXPECT_EQ(d.f.values[i], 0.0); }
            if (std::abs(y - eps) < 1e-15) { EXPECT_NEAR(d.f.values[i], std::pow(2.0, -1.0 / p), 1e-15); }
        }
    }
    EXPECT_THROW(regularized_data(0.5, one, {}, 0.0, 2.0, 2.0), InvalidArgument);
    EXPECT_THROW(regularized_data(0.5, one, {}, 1.0, 2.0, 2.0), InvalidArgument);
}

TEST(Regularize, NormPreservation) {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-1.0, 1.0), ue(0.01, 0.9), ua(0.05, 3.0), up(1.0, 12.0);
    for (int trial = 0; trial < 20; ++trial) {
        auto g = build_grid(cube(6, 1 + trial % 2));
        Field f(g), F0(g), F1(g);
        for (double& v : f.values) v = u(rng);
        for (double& v : F0.values) v = u(rng);
        std::vector<Field> F{F0, F1};
        for (double& v : F[1].values) v = u(rng);
        if (trial % 2) F.push_back(F0);
        const double a = ua(rng), eps = ue(rng), p = up(rng), q = up(rng);
        const auto d = regularized_data(a, f, F, eps, p, q);
        const double lhs = lp_norm(d.f, {a, eps}, p, NormRule::Nodal);
        const double rhs = lp_norm(f, {a, 0.0}, p, NormRule::Nodal);
        EXPECT_NEAR(lhs, rhs, 1e-8 * rhs) << trial;
        const double Lf = gradient_lp_norm(d.F, {a, eps}, q, NormRule::Nodal);
        const double Rf = gradient_lp_norm(F, {a, 0.0}, q, NormRule::Nodal);
        EXPECT_NEAR(Lf, Rf, 1e-8 * Rf) << trial;
    }
}

TEST(Regularize, SweepWithUnitWeightIsFlat) {
    ProblemSpec spec;
    spec.grid = cube(8);
    spec.a = 0.0;
    spec.initial = smooth_u0(3);
    spec.data = [](const GridPtr& g) {
        SourceData d;
        d.f = Field(g->level_grid(0), 1.0);
        return d;
    };
    const auto rep = eps_sweep(spec, {0.4, 0.2, 0.1});
    ASSERT_TRUE(rep.complete);
    for (double d : rep.difference) EXPECT_LE(d, 1e-12 * rep.reference_norm);
    EXPECT_TRUE(rep.monotone);
    EXPECT_DOUBLE_EQ(rep.y0, 4.0 / 8.0);
}

TEST(Regularize, SweepMatchesManufacturedGap) {
    // u_eps = g_2^eps(y) + t solves the homogeneous equation with weight (a, eps)
    const double a = 0.5;
    std::map<double, GFamily> fams;
    for (double e : {0.2, 0.1, 0.05, 0.0}) fams.emplace(e, GFamily({a, e}, 2, 1.0));
    ProblemSpec spec;
    spec.grid = cube(32);
    spec.grid.nx = 4;
    spec.a = a;
    spec.initial = [&](const GridPtr& g, double eps) {
        return sample(g->level_grid(0), [&](std::span<const double> z, double t) { return fams.at(eps)(2, z[1]) + t; });
    };
    spec.boundary = [&](double eps) {
        BoundaryCondition bc = BoundaryCondition::all_natural(2);
        bc.set(3, FaceKind::Dirichlet, [&, eps](std::span<const double> z, double t) { return fams.at(eps)(2, z[1]) + t; });
        return bc;
    };
    const auto rep = eps_sweep(spec, {0.2, 0.1, 0.05});
    ASSERT_TRUE(rep.complete) << rep.failure;
    auto g = build_grid(spec.grid);
    for (std::size_t k = 0; k < rep.eps.size(); ++k) {
        const double e = rep.eps[k];
        Field gap = sample(g, [&](std::span<const double> z, double) { return fams.at(e)(2, z[1]) - fams.at(0.0)(2, z[1]); });
        const double oracle = away_norm(gap, a, rep.y0);
        EXPECT_NEAR(rep.difference[k], oracle, 0.02 * oracle) << "eps=" << e;
    }
    EXPECT_TRUE(rep.monotone);
}

TEST(Regularize, SweepHalvingRate) {
    ProblemSpec spec;
    spec.grid = cube(16);
    spec.a = 0.5;
    spec.p = spec.q = 9.0;
    spec.initial = smooth_u0(7);
    spec.data = [](const GridPtr& g) {
        SourceData d;
        d.f = sample(g->level_grid(0), [](std::span<const double> z, double) { return std::cos(M_PI * z[0] / 2); });
        return d;
    };
    const auto rep = eps_sweep(spec, {0.4, 0.2, 0.1, 0.05});
    ASSERT_TRUE(rep.complete);
    EXPECT_TRUE(rep.monotone);
    EXPECT_GE(rep.difference[1] / rep.difference[2], 1.5);
    EXPECT_LT(rep.difference.back(), rep.difference.front());
    std::ostringstream os;
    rep.write_csv(os);
    EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "eps,difference");
    EXPECT_EQ(rep.to_json()["rows"].size(), 4u);
}

TEST(Regularize, SweepValidationAndFailure) {
    ProblemSpec spec;
    spec.grid = cube(8);
    spec.a = 0.5;
    spec.initial = smooth_u0(1);
    EXPECT_THROW(eps_sweep(spec, {0.1, 0.2}), InvalidArgument);
    EXPECT_THROW(eps_sweep(spec, {0.2, 0.0}), InvalidArgument);
    EXPECT_THROW(eps_sweep(spec, {0.2, 0.1}, 0.1), InvalidArgument);  // below 2 cells
    spec.evolve.max_iterations = 1;
    spec.evolve.tolerance = 1e-14;
    const auto rep = eps_sweep(spec, {0.2, 0.1});
    EXPECT_FALSE(rep.complete);
    EXPECT_NE(rep.failure.find("eps = 0"), std::string::npos);
    EXPECT_TRUE(rep.difference.empty());
}

TEST(Regularize, Gates) {
    // N = 1, a = 0.5: d = 4.5
    const auto g0 = holder_gates(1, 0.5, 9.0, 9.0, 0.5, 0);
    EXPECT_DOUBLE_EQ(g0.d, 4.5);
    EXPECT_DOUBLE_EQ(g0.alpha_max, 0.5);
    try {
        (void)holder_gates(1, 0.5, 9.0, 9.0, 0.51, 0);
        FAIL();
    } catch (const HypothesisViolation& e) {
        EXPECT_NE(std::string(e.what()).find("1-(N+3+a+)/q"), std::string::npos);
    }
    EXPECT_THROW((void)holder_gates(1, 0.5, 2.0, 9.0, 0.1, 0), HypothesisViolation);
    EXPECT_THROW((void)holder_gates(1, 0.5, 4.0, 9.0, 0.1, 1), HypothesisViolation);
    EXPECT_THROW((void)holder_gates(1, 0.5, 9.0, 9.0, 1.0, 0), HypothesisViolation);
    EXPECT_NO_THROW((void)holder_gates(2, -0.5, 10.0, 1.0, 0.5, 1));
}

TEST(Regularize, ConormalResidualOfKnownFields) {
    auto g = build_grid(cube(8));
    Field u = sample(g, [](std::span<const double> z, double t) { return z[0] * z[0] + 3 * z[1] * z[1] + t; });
    EXPECT_NEAR(sigma_conormal_residual(u, CoefficientField::identity(2), {}), 0.0, 1e-13);
    Field lin = sample(g, [](std::span<const double> z, double) { return 0.5 * z[1] + z[0]; });
    std::vector<Field> F{Field(g, 0.0), Field(g, -0.5)};
    EXPECT_NEAR(sigma_conormal_residual(lin, CoefficientField::identity(2), F), 0.0, 1e-13);
    EXPECT_NEAR(sigma_conormal_residual(lin, CoefficientField::identity(2), {}), 0.5, 1e-13);
    Eigen::Matrix2d A;
    A << 2.0, 0.5, 0.5, 1.0;
    EXPECT_NEAR(sigma_conormal_residual(lin, CoefficientField::uniform(A, 0.5, 2.5), {}), 1.0, 1e-13);
}

namespace {
ProblemSpec holder_spec(int n, double scale = 1.0) {
    ProblemSpec spec;
    spec.grid = cube(n);
    spec.a = 0.5;
    spec.p = 9.0;
    spec.q = 9.0;
    spec.initial = smooth_u0(21, scale);
    return spec;
}
}  // namespace

TEST(Regularize, HolderStabilityOrderZero) {
    const std::vector<double> eps{0.8, 0.4, 0.2, 0.1, 0.05};
    const auto rep = holder_stability_report(holder_spec(8), eps, 0.5, 0);
    ASSERT_EQ(rep.rows.size(), 6u);
    EXPECT_EQ(rep.rows.back().eps, 0.0);
    EXPECT_TRUE(rep.finite);
    EXPECT_TRUE(rep.stable) << rep.spread;
    EXPECT_LT(rep.limit_gap, 0.1);
    for (const auto& r : rep.rows) EXPECT_FALSE(r.conormal_residual.has_value());
    EXPECT_THROW(holder_stability_report(holder_spec(8), eps, 0.6, 0), HypothesisViolation);
    std::ostringstream os;
    rep.write_csv(os);
    const std::string csv = os.str();
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
    EXPECT_EQ(rep.to_json()["gates"].size(), 2u);
}

TEST(Regularize, HolderStabilityScaleInvariant) {
    const std::vector<double> eps{0.4, 0.1};
    const auto r1 = holder_stability_report(holder_spec(8), eps, 0.5, 0);
    const auto r2 = holder_stability_report(holder_spec(8, 1e3), eps, 0.5, 0);
    for (std::size_t k = 0; k < r1.rows.size(); ++k) EXPECT_NEAR(r2.rows[k].ratio, r1.rows[k].ratio, 1e-10 * r1.rows[k].ratio);
}

TEST(Regularize, HolderStabilityOrderOneResidualDecreases) {
    const std::vector<double> eps{0.4, 0.1};
    std::vector<double> res;
    for (int n : {8, 16, 32}) {
        const auto rep = holder_stability_report(holder_spec(n), eps, 0.5, 1);
        EXPECT_TRUE(rep.stable) << n << ' ' << rep.spread;
        res.push_back(*rep.rows.back().conormal_residual);
    }
    EXPECT_LT(res[1], res[0]);
    EXPECT_LT(res[2], res[1]);
}

TEST(Regularize, CatalogStem) {
    EXPECT_EQ(catalog_stem("holder", 0.5, 0.25, 9, 12), "holder_a0.5_alpha0.25_p9_q12");
}
