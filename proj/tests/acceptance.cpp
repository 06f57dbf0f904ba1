// Acceptance gate: one PASS/FAIL line per criterion, followed by indented
// per-case detail. Exits 1 if any criterion fails. Criterion numbers given
// as arguments restrict the run to those criteria.

#include "degpar/experiments.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <set>

using namespace degpar;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Criterion {
    int id;
    std::string title;
    bool pass = true;
    std::vector<std::string> lines;

    void note(bool ok, const std::string& what) {
        pass = pass && ok;
        lines.push_back(std::string(ok ? "ok   " : "miss ") + what);
    }
    // reported, not gated
    void info(const std::string& what) { lines.push_back("info " + what); }
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string join(const nlohmann::json& arr) {
    std::string s;
    for (const auto& v : arr) s += (s.empty() ? "" : " ") + (v.is_number() ? fmt("%.4g", v.get<double>()) : v.dump());
    return s;
}

Config cfg(std::initializer_list<std::pair<const char*, std::string>> kv) {
    Config c;
    for (const auto& [k, v] : kv) c.set(k, v);
    return c;
}

std::string str(double v) { return fmt("%.17g", v); }

std::string failures(const Outcome& o) {
    std::string s;
    for (const auto& a : o.assertions)
        if (!a.pass) s += (s.empty() ? "" : "; ") + a.name + (a.detail.empty() ? "" : " (" + a.detail + ")");
    return s;
}

// -------------------------------------------------------------------------
// 1. manufactured solutions

void manufactured(Criterion& c) {
    for (int n_x : {1, 2}) {
        for (double a : {-0.5, 0.5, 1.0, 2.0}) {
            for (double eps : {0.0, 0.3}) {
                const auto t = Clock::now();
                const Config k = cfg({{"case", "g2_forced"}, {"a", str(a)}, {"eps", str(eps)}, {"n_x", std::to_string(n_x)},
                                      {"nx", "2"}, {"ny", "16"}, {"nt", "2"}, {"t0", "0"}, {"t1", "1"},
                                      {"ny_list", "16 32 64 128"}});
                const Outcome o = xp::mms(k, {});
                const double s = seconds_since(t);
                c.note(o.passed() && s < 120.0,
                       "g2+2t, f=1, N=" + std::to_string(n_x) + " a=" + fmt("%g", a) + " eps=" + fmt("%g", eps) +
                           ": orders " + join(o.results["orders"]) + " (y >= 1/4: " + join(o.results["away_orders"]) +
                           "), " + fmt("%.1f s", s));
            }
        }
        const auto t = Clock::now();
        const Config k = cfg({{"case", "quadratic"}, {"a", "0.5"}, {"n_x", std::to_string(n_x)}, {"nx", "4"},
                              {"ny", "16"}, {"nt", "4"}, {"t0", "0"}, {"ny_list", "16 32 64 128"}});
        const Outcome o = xp::mms(k, {});
        double worst = 0.0;
        for (const auto& e : o.results["errors"]) worst = std::max(worst, e.get<double>());
        const double s = seconds_since(t);
        c.note(o.passed() && s < 120.0, "|x|^2+2Nt, N=" + std::to_string(n_x) + ": max nodal error " +
                                            fmt("%.3g", worst) + " on every level (exact in the discrete space), " +
                                            fmt("%.1f s", s));
    }
}

// -------------------------------------------------------------------------
// 2. Dirichlet versus conormal condition at y = 0

void dirichlet_contrast(Criterion& c) {
    const double a = 0.5;
    auto top = [](std::span<const double>, double) { return 1.0; };
    auto zero = [](std::span<const double>, double) { return 0.0; };
    for (double f : {0.0, 1.0}) {
        std::string trend, con_trend;
        double dir_fit = 0.0, exact_gap = 0.0, con_fit = 0.0, con_spread = 0.0;
        for (int ny : {256, 1024, 4096}) {
            GridSpec gs;
            gs.nx = 2;
            gs.ny = ny;
            gs.nt = 2;
            const GridPtr g = build_grid(gs)->level_grid(0);
            Problem dir{{a, 0.0}, CoefficientField::identity(2), {}, BoundaryCondition::all_natural(2), {}};
            dir.bc.set(2, FaceKind::Dirichlet, zero);
            dir.bc.set(3, FaceKind::Dirichlet, top);
            if (f != 0.0) dir.data.f = Field(g, f);
            Problem con = dir;
            con.bc = BoundaryCondition::all_natural(2);
            con.bc.set(3, FaceKind::Dirichlet, top);

            const Field v = solve_steady(dir, g);
            Region near = Region::whole(*g);
            near.y = {0.0, 0.25};
            dir_fit = holder_exponent_fit(v, near).exponent;
            trend += (trend.empty() ? "" : ", ") + fmt("%.4f", dir_fit) + " (ny=" + std::to_string(ny) + ")";
            // Smooth conormal profiles have increments ~ h^2 at the smallest
            // scale; at ny = 4096 that is ~1e-8, the conditioning noise of
            // the solve, so the conormal fit stops at ny = 1024.
            if (ny <= 1024) {
                const Field u = solve_steady(con, g);
                const auto [lo, hi] = std::minmax_element(u.values.begin(), u.values.end());
                con_spread = *hi - *lo;
                if (con_spread > 1e-10) {
                    con_fit = holder_exponent_fit(u, near).exponent;
                    con_trend += (con_trend.empty() ? "" : ", ") + fmt("%.4f", con_fit) + " (ny=" + std::to_string(ny) + ")";
                }
            }
            if (f == 0.0) {
                exact_gap = 0.0;
                for (std::size_t i = 0; i < g->spatial_size(); ++i)
                    exact_gap = std::max(exact_gap, std::abs(v.values[i] - std::pow(g->coords(i).back(), 1.0 - a)));
            }
        }
        const bool exact_ok = f != 0.0 || exact_gap <= 1e-2;
        c.note(exact_ok && std::abs(dir_fit - 0.5) <= 0.05,
               "Dirichlet, f=" + fmt("%g", f) + ": fitted exponent " + trend +
                   (f == 0.0 ? ", max |v - y^(1-a)| " + fmt("%.3g", exact_gap) : std::string()));
        if (con_spread <= 1e-10)
            c.note(true, "conormal, f=" + fmt("%g", f) + ": solution constant to " + fmt("%.2g", con_spread) +
                             " (Lipschitz, exponent not fitted)");
        else
            c.note(con_fit >= 0.95, "conormal, f=" + fmt("%g", f) + ": fitted exponent " + con_trend);
    }
}

// -------------------------------------------------------------------------
// 3. conjugate duality

void conjugate(Criterion& c) {
    for (double a : {-0.5, 0.5, 1.5}) {
        const Config k = cfg({{"a", str(a)}, {"eps", "0.5"}, {"nx", "2"}, {"ny", "16"}, {"nt", "4"}, {"t0", "0"},
                              {"ny_list", "16 32 64"}});
        const Outcome o = xp::conjugate(k, {});
        c.note(o.passed(), "a=" + fmt("%g", a) + " eps=0.5: residual " + join(o.results["residual"]) +
                               ", reduction per halving " + join(o.results["reduction"]));
    }
}

// -------------------------------------------------------------------------
// 4. Liouville family

void liouville(Criterion& c) {
    for (double a : {-0.5, 0.0, 0.5, 1.5}) {
        for (double eps : {0.0, 0.05}) {
            const Outcome o = xp::liouville(cfg({{"a", str(a)}, {"eps", str(eps)}}), {});
            std::string orders;
            for (int i = 1; i <= 4; ++i) {
                const auto& r = o.results["relation"]["g" + std::to_string(i)]["orders"];
                orders += " g" + std::to_string(i) + ":[" + join(r) + "]";
            }
            const std::string line = "a=" + fmt("%g", a) + " eps=" + fmt("%g", eps) + ": g2 gap " +
                                   fmt("%.2g", o.results["g2_relative_gap"].get<double>()) + ", relation orders" +
                                   orders + ", g4/y^4 vs b2 gap " +
                                   fmt("%.2g", o.results["asymptotic_gap"].get<double>()) +
                                   (o.passed() ? "" : "; " + failures(o));
            if (eps == 0.0)
                c.note(o.passed(), line);
            else
                c.info(line);
        }
    }
    c.note(asymptotic_constant(0.0, 1) == 0.5, "b1(a=0) = " + fmt("%.17g", asymptotic_constant(0.0, 1)));
}

// -------------------------------------------------------------------------
// 5, 6. eps-stability of the Caccioppoli and L-infinity ratios

Config sweep_config(double a) {
    // [-4,4] x [0,4] so that the cylinders Q_1 sit well inside the box
    return cfg({{"a", str(a)}, {"L", "4"}, {"y_max", "4"}, {"nx", "64"}, {"ny", "32"}, {"nt", "16"},
                {"samples", "5"}, {"eps_list", "0.8 0.4 0.2 0.1 0.05"}});
}

void sweep(Criterion& c, const Experiment& run, const char* label, double budget) {
    const auto t = Clock::now();
    for (double a : {-0.5, 0.5, 1.5}) {
        const Outcome o = run(sweep_config(a), RunContext{1, 0});
        std::string per;
        for (const auto& s : o.results["samples"]) per += " " + fmt("%.3g", s["spread"].get<double>());
        std::string extra;
        if (o.results.contains("scale_deviation"))
            extra = ", scale deviation " + fmt("%.2g", o.results["scale_deviation"].get<double>());
        c.note(o.passed(), std::string(label) + " a=" + fmt("%g", a) + ": per-seed max/min" + per + extra);
    }
    const double s = seconds_since(t);
    if (budget > 0.0) c.note(s < budget, "runtime " + fmt("%.0f s", s) + " (limit " + fmt("%.0f s", budget) + ")");
}

// -------------------------------------------------------------------------
// 7. De Giorgi ledger

void degiorgi(Criterion& c) {
    for (double a : {-0.5, 0.5, 1.5}) {
        const Outcome o = xp::degiorgi(cfg({{"a", str(a)}, {"samples", "5"}}), {});
        double worst = 0.0, top = -1e300;
        for (const auto& s : o.results["samples"]) {
            const auto& E = s["E"];
            worst = std::max(worst, E.back().get<double>() / E.front().get<double>() * 256.0);
            top = std::max(top, s["max_on_inner"].get<double>());
        }
        c.note(o.passed(), "a=" + fmt("%g", a) + ", 5 seeds: max E_8/(E_0 2^-8) " + fmt("%.3g", worst) +
                               ", max u on Q_1/2 " + fmt("%.3g", top));
    }
}

// -------------------------------------------------------------------------
// 8. Holder stability

void holder(Criterion& c) {
    for (int order : {0, 1}) {
        for (std::uint64_t seed : {1, 2, 3}) {
            const Config k = cfg({{"a", "0.5"}, {"p", "9"}, {"q", "9"}, {"alpha", "0"}, {"order", std::to_string(order)},
                                  {"nx", "16"}, {"ny", "8"}, {"nt", "16"}, {"ny_list", "8 16 32"}});
            const Outcome o = xp::holder(k, RunContext{seed, 0});
            c.note(o.passed(), "order " + std::to_string(order) + ", seed " + std::to_string(seed) + ", alpha " +
                                   fmt("%.4g", o.results["alpha"].get<double>()) + ": max/min " +
                                   fmt("%.3g", o.results["spread"].get<double>()) + ", eps->0 gap " +
                                   fmt("%.3g", o.results["limit_gap"].get<double>()) + ", conormal residual " +
                                   join(o.results["conormal_refinement"]["residual"]));
        }
    }
}

// -------------------------------------------------------------------------
// 9. Muckenhoupt A2

void muckenhoupt(Criterion& c) {
    for (double a : {-0.9, 0.0, 0.9, 1.1, 1.5}) {
        const Outcome o = xp::muckenhoupt(cfg({{"a", str(a)}, {"depth", "16"}}), {});
        const auto& res = o.results["resolution_regularized"];
        const double tail = res.back().get<double>() / res[res.size() - 3].get<double>();
        std::string what = "a=" + fmt("%g", a) + ": " + o.results["verdict"].get<std::string>();
        if (o.results["max_step_beyond_12"].is_number())
            what += ", max step beyond depth 12 " + fmt("%.2g", o.results["max_step_beyond_12"].get<double>());
        else
            what += ", estimate infinite at every depth (weight not locally integrable)";
        what += "; resolution-regularized growth over the last 2 steps x" + fmt("%.3g", tail);
        c.note(o.passed(), what);
    }
}

// -------------------------------------------------------------------------
// 10. curved boundary

void curved(Criterion& c) {
    for (double a : {0.0, 0.5}) {
        const Config k = cfg({{"a", str(a)}, {"nx", "16"}, {"ny", "16"}, {"nt", "16"}, {"t0", "0"}, {"t1", "0.5"},
                              {"ny_list", "16 32 64"}});
        const Outcome o = xp::curved(k, {});
        for (const auto& as : o.assertions)
            if (as.name != "pullback_order" && as.name != "conormal_residual_decreasing")
                c.note(as.pass, "a=" + fmt("%g", a) + ": " + as.name + (as.detail.empty() ? "" : " (" + as.detail + ")"));
        bool order_ok = false, res_ok = false;
        for (const auto& as : o.assertions) {
            if (as.name == "pullback_order") order_ok = as.pass;
            if (as.name == "conormal_residual_decreasing") res_ok = as.pass;
        }
        c.note(order_ok, "a=" + fmt("%g", a) + ": pullback orders " + join(o.results["orders"]) + " (y >= 1/4: " +
                             join(o.results["away_orders"]) + ")");
        c.note(res_ok, "a=" + fmt("%g", a) + ": conormal residual " + join(o.results["conormal_residual"]) +
                           ", rates " + join(o.results["residual_rates"]));
    }
}

// -------------------------------------------------------------------------
// 11. independent oracles

double brute_holder(const Field& u, double alpha) {
    const Grid& g = *u.grid;
    const std::size_t S = g.spatial_size();
    double best = 0.0;
    for (std::size_t p = 0; p < g.size(); ++p)
        for (std::size_t q = 0; q < g.size(); ++q) {
            if (p == q) continue;
            const auto zp = g.coords(p % S), zq = g.coords(q % S);
            double d2 = std::abs(g.time(static_cast<int>(p / S)) - g.time(static_cast<int>(q / S)));
            for (std::size_t k = 0; k < zp.size(); ++k) d2 += (zp[k] - zq[k]) * (zp[k] - zq[k]);
            best = std::max(best, std::abs(u.values[p] - u.values[q]) / std::pow(d2, alpha / 2));
        }
    return best;
}

// int rho u_h^2 for N = 1 with u_h the multilinear interpolant: tanh-sinh in
// y, 7-point Gauss in x and t, cell by cell.
double quadrature_l2_squared(const Field& u, const WeightSpec& w) {
    const Grid& g = *u.grid;
    const Axis& ax = g.axis(0);
    const Axis& ay = g.y_axis();
    boost::math::quadrature::tanh_sinh<double> ts;
    using GL = boost::math::quadrature::gauss<double, 7>;
    const int nlev = g.time_levels();
    double total = 0.0;
    for (int n = 0; n + 1 < std::max(nlev, 2); ++n)
        for (int i = 0; i + 1 < ax.count; ++i)
            for (int j = 0; j + 1 < ay.count; ++j) {
                const double x0 = ax.coord(i), x1 = ax.coord(i + 1), y0 = ay.coord(j), y1 = ay.coord(j + 1);
                auto at = [&](int di, int dj, int dn) {
                    return u.at(static_cast<std::size_t>(i + di) + static_cast<std::size_t>(j + dj) * g.stride(1),
                                nlev > 1 ? n + dn : 0);
                };
                auto uh = [&](double x, double y, double tau) {
                    const double sx = (x - x0) / (x1 - x0), sy = (y - y0) / (y1 - y0);
                    double r = 0.0;
                    for (int dn = 0; dn < (nlev > 1 ? 2 : 1); ++dn) {
                        const double wt = nlev > 1 ? (dn ? tau : 1 - tau) : 1.0;
                        r += wt * ((1 - sx) * (1 - sy) * at(0, 0, dn) + sx * (1 - sy) * at(1, 0, dn) +
                                   (1 - sx) * sy * at(0, 1, dn) + sx * sy * at(1, 1, dn));
                    }
                    return r;
                };
                auto in_y = [&](double y) {
                    const double rho = std::pow(std::hypot(w.eps, y), w.a);
                    return rho * GL::integrate(
                                     [&](double x) {
                                         if (nlev == 1) return uh(x, y, 0.0) * uh(x, y, 0.0);
                                         return GL::integrate([&](double tau) { return uh(x, y, tau) * uh(x, y, tau); },
                                                              0.0, 1.0);
                                     },
                                     x0, x1);
                };
                total += ts.integrate(in_y, y0, y1) * (nlev > 1 ? g.dt() : 1.0);
            }
    return total;
}

void oracles(Criterion& c) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> uv(-1.0, 1.0);
    {
        int equal = 0, total = 0;
        for (int trial = 0; trial < 3; ++trial) {
            GridSpec gs;
            gs.nx = 11;
            gs.ny = 11;
            gs.nt = 11;
            Field u(build_grid(gs));
            for (double& v : u.values) v = uv(rng);
            for (double alpha : {0.25, 0.5, 1.0}) {
                const HolderReport r = holder_seminorm(u, alpha, std::nullopt, 0);
                equal += r.exhaustive && r.seminorm_c0 == brute_holder(u, alpha);
                ++total;
            }
        }
        c.note(equal == total, "Holder seminorm, 12^3 nodes: " + std::to_string(equal) + "/" + std::to_string(total) +
                                   " bitwise equal to brute force");
    }
    {
        std::uniform_real_distribution<double> ua(-0.8, 2.0), ue(0.0, 0.5);
        double worst = 0.0;
        for (int trial = 0; trial < 20; ++trial) {
            GridSpec gs;
            gs.nx = 3;
            gs.ny = 4;
            gs.nt = 2;
            gs.y_max = 0.8;
            GridPtr g = build_grid(gs);
            if (trial % 2) g = g->level_grid(0);
            Field u(g);
            for (double& v : u.values) v = uv(rng);
            const WeightSpec w{ua(rng), trial % 3 == 0 ? 0.0 : ue(rng)};
            const double ref = std::sqrt(quadrature_l2_squared(u, w));
            worst = std::max(worst, std::abs(lp_norm(u, w, 2.0) - ref) / ref);
        }
        c.note(worst <= 1e-8, "weighted L2 norm, 20 random fields: max relative deviation " + fmt("%.2g", worst));
    }
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    for (int k = 1; k < argc; ++k) only.insert(std::atoi(argv[k]));
    const std::vector<std::pair<std::string, std::function<void(Criterion&)>>> plan{
        {"manufactured solutions converge at order >= 1.9", manufactured},
        {"Dirichlet/conormal regularity contrast", dirichlet_contrast},
        {"conjugate residual reduction >= 1.8 per halving", conjugate},
        {"Liouville family g_i", liouville},
        {"Caccioppoli ratio eps-stable within x2",
         [](Criterion& c) { sweep(c, xp::caccioppoli, "Caccioppoli", 600.0); }},
        {"L-infinity ratio scale-invariant and eps-stable within x2",
         [](Criterion& c) { sweep(c, xp::linf, "L-infinity", 0.0); }},
        {"De Giorgi energy ledger", degiorgi},
        {"Holder seminorm eps-stability and conormal residual", holder},
        {"Muckenhoupt A2 classification", muckenhoupt},
        {"curved boundary flattening", curved},
        {"oracle equivalence", oracles},
    };
    int failed = 0, ran = 0;
    for (std::size_t k = 0; k < plan.size(); ++k) {
        if (!only.empty() && !only.count(static_cast<int>(k + 1))) continue;
        ++ran;
        Criterion c{static_cast<int>(k + 1), plan[k].first, true, {}};
        const auto t = Clock::now();
        try {
            plan[k].second(c);
        } catch (const std::exception& e) {
            c.note(false, std::string("aborted: ") + e.what());
        }
        failed += !c.pass;
        std::cout << (c.pass ? "PASS" : "FAIL") << " criterion " << c.id << ": " << c.title << " ["
                  << fmt("%.1f s", seconds_since(t)) << "]\n";
        for (const auto& l : c.lines) std::cout << "    " << l << '\n';
        std::cout.flush();
    }
    std::cout << (ran - failed) << "/" << ran << " criteria passed\n";
    return failed == 0 ? 0 : 1;
}
