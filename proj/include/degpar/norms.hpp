#pragma once

// Weighted L^p / H^1 / L^inf norms of nodal fields, the parabolic distance,
// and grid estimators of parabolic Holder seminorms.

#include "degpar/domain.hpp"
#include "degpar/weights.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace degpar {

/// d_p((z,t),(zeta,tau)) = (|z - zeta|^2 + |t - tau|)^{1/2}.
inline double parabolic_distance(std::span<const double> z, double t, std::span<const double> zeta, double tau) {
    DEGPAR_REQUIRE(z.size() == zeta.size(), InvalidArgument, "points have different dimensions");
    double s = std::abs(t - tau);
    for (std::size_t k = 0; k < z.size(); ++k) s += (z[k] - zeta[k]) * (z[k] - zeta[k]);
    return std::sqrt(s);
}

/// Second-order finite-difference gradient, one component per spatial axis:
/// centered inside, one-sided second order on faces (first order if an axis
/// has only two nodes).
inline std::vector<Field> gradient(const Field& u) {
    const Grid& g = *u.grid;
    std::vector<Field> out;
    for (int k = 0; k < g.dim(); ++k) {
        const Axis& ax = g.axis(k);
        DEGPAR_REQUIRE(ax.count >= 2, InvalidArgument, "gradient needs two nodes along every axis");
        const double h = ax.spacing();
        const std::size_t st = g.stride(k);
        Field d(u.grid);
        for (int n = 0; n < g.time_levels(); ++n) {
            auto src = u.level(n);
            auto dst = d.level(n);
            for (std::size_t i = 0; i < g.spatial_size(); ++i) {
                const int j = g.index_along(i, k);
                if (ax.count == 2) {
                    dst[i] = (j == 0 ? src[i + st] - src[i] : src[i] - src[i - st]) / h;
                } else if (j == 0) {
                    dst[i] = (-3.0 * src[i] + 4.0 * src[i + st] - src[i + 2 * st]) / (2.0 * h);
                } else if (j == ax.count - 1) {
                    dst[i] = (3.0 * src[i] - 4.0 * src[i - st] + src[i - 2 * st]) / (2.0 * h);
                } else {
                    dst[i] = (src[i + st] - src[i - st]) / (2.0 * h);
                }
            }
        }
        out.push_back(std::move(d));
    }
    return out;
}

enum class NormRule {
    Gauss,  // 3-point rules per cell: Gauss-Legendre in x and t, weighted Gauss in y
    Nodal   // trapezoid volumes times the pointwise weight at each node
};

namespace detail {

inline constexpr std::array<double, 3> kGaussNodes{0.1127016653792583, 0.5, 0.8872983346207417};
inline constexpr std::array<double, 3> kGaussWeights{5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};

// Integral of rho * (sum_c v_c^2)^{p/2} over the whole (space-)time grid of
// the components, where v_c is the multilinear interpolant.
inline double integrate_power(const std::vector<const Field*>& comps, const WeightSpec& w, double p,
                              NormRule rule) {
    DEGPAR_REQUIRE(!comps.empty(), InvalidArgument, "nothing to integrate");
    const Grid& g = *comps.front()->grid;
    const int ds = g.dim();
    const bool timed = g.time_levels() > 1;
    const int D = ds + (timed ? 1 : 0);
    for (int k = 0; k < ds; ++k)
        DEGPAR_REQUIRE(g.axis(k).count >= 2, InvalidArgument, "region is degenerate (no cells along an axis)");
    auto pow_of = [p](double sq) { return p == 2.0 ? sq : std::pow(sq, 0.5 * p); };

    if (rule == NormRule::Nodal) {
        double total = 0.0;
        std::vector<double> z(static_cast<std::size_t>(ds));
        for (int n = 0; n < g.time_levels(); ++n) {
            double wt = 1.0;
            if (timed) {
                wt = g.dt();
                if (n == 0 || n == g.time_levels() - 1) wt *= 0.5;
            }
            for (std::size_t i = 0; i < g.spatial_size(); ++i) {
                double vol = wt;
                for (int k = 0; k < ds; ++k) {
                    const int j = g.index_along(i, k);
                    vol *= g.axis(k).spacing() * ((j == 0 || j == g.axis(k).count - 1) ? 0.5 : 1.0);
                }
                double sq = 0.0;
                for (const Field* c : comps) sq += c->at(i, n) * c->at(i, n);
                if (sq == 0.0) continue;
                total += vol * eval_weight(w, g.coord(i, ds - 1)) * pow_of(sq);
            }
        }
        return total;
    }

    const WeightedAxis yaxis(w, g.y_axis().nodes());
    std::vector<int> cells(static_cast<std::size_t>(D));
    std::size_t ncell = 1;
    for (int k = 0; k < ds; ++k) cells[static_cast<std::size_t>(k)] = g.axis(k).count - 1;
    if (timed) cells[static_cast<std::size_t>(ds)] = g.time_levels() - 1;
    for (int c : cells) ncell *= static_cast<std::size_t>(c);

    const std::size_t nv = std::size_t{1} << D;
    std::size_t nq = 1;
    for (int k = 0; k < D; ++k) nq *= 3;
    std::vector<double> buf_a(nq), buf_b(nq), sq(nq), qw(nq);
    std::vector<int> idx(static_cast<std::size_t>(D));
    double total = 0.0;

    for (std::size_t cell = 0; cell < ncell; ++cell) {
        std::size_t rem = cell;
        for (int k = 0; k < D; ++k) {
            idx[static_cast<std::size_t>(k)] = static_cast<int>(rem % static_cast<std::size_t>(cells[static_cast<std::size_t>(k)]));
            rem /= static_cast<std::size_t>(cells[static_cast<std::size_t>(k)]);
        }
        std::size_t base = 0;
        for (int k = 0; k < ds; ++k) base += static_cast<std::size_t>(idx[static_cast<std::size_t>(k)]) * g.stride(k);
        const int lvl = timed ? idx[static_cast<std::size_t>(ds)] : 0;
        const CellRule& yr = yaxis.rules[static_cast<std::size_t>(idx[static_cast<std::size_t>(ds - 1)])];

        // per-axis node positions and weights of the 3-point rule
        std::array<std::array<double, 3>, 4> s{}, wq{};
        for (int k = 0; k < D; ++k) {
            for (int q = 0; q < 3; ++q) {
                if (k == ds - 1) {
                    s[static_cast<std::size_t>(k)][static_cast<std::size_t>(q)] = yr.s[static_cast<std::size_t>(q)];
                    wq[static_cast<std::size_t>(k)][static_cast<std::size_t>(q)] = yr.w[static_cast<std::size_t>(q)];
                } else {
                    const double h = k < ds ? g.axis(k).spacing() : g.dt();
                    s[static_cast<std::size_t>(k)][static_cast<std::size_t>(q)] = kGaussNodes[static_cast<std::size_t>(q)];
                    wq[static_cast<std::size_t>(k)][static_cast<std::size_t>(q)] = h * kGaussWeights[static_cast<std::size_t>(q)];
                }
            }
        }
        for (std::size_t q = 0; q < nq; ++q) {
            double wt = 1.0;
            std::size_t r = q;
            for (int k = 0; k < D; ++k) {
                wt *= wq[static_cast<std::size_t>(k)][r % 3];
                r /= 3;
            }
            qw[q] = wt;
        }
        std::fill(sq.begin(), sq.end(), 0.0);
        for (const Field* c : comps) {
            // corner values, bit k of the corner index = offset along axis k
            for (std::size_t v = 0; v < nv; ++v) {
                std::size_t node = base;
                for (int k = 0; k < ds; ++k)
                    if ((v >> k) & 1U) node += g.stride(k);
                const int l = lvl + ((timed && ((v >> ds) & 1U)) ? 1 : 0);
                buf_a[v] = c->at(node, l);
            }
            // Interpolate to the rule one axis at a time (2 entries -> 3).
            // Contracted axes stay fastest in the layout, so the source index
            // is a + done * (bit + 2 * rest).
            std::size_t done = 1;
            std::size_t todo = nv;
            for (int k = 0; k < D; ++k) {
                todo /= 2;
                const auto& sk = s[static_cast<std::size_t>(k)];
                for (std::size_t rest = 0; rest < todo; ++rest) {
                    for (std::size_t a = 0; a < done; ++a) {
                        const double v0 = buf_a[a + done * (0 + 2 * rest)];
                        const double v1 = buf_a[a + done * (1 + 2 * rest)];
                        for (std::size_t q = 0; q < 3; ++q) {
                            const double t = sk[q];
                            buf_b[a + done * (q + 3 * rest)] = (1.0 - t) * v0 + t * v1;
                        }
                    }
                }
                done *= 3;
                std::swap(buf_a, buf_b);
            }
            for (std::size_t q = 0; q < nq; ++q) sq[q] += buf_a[q] * buf_a[q];
        }
        for (std::size_t q = 0; q < nq; ++q)
            if (sq[q] != 0.0) total += qw[q] * pow_of(sq[q]);
    }
    return total;
}

}  // namespace detail

inline double lp_norm(const Field& u, const WeightSpec& w, double p, NormRule rule = NormRule::Gauss) {
    if (std::isinf(p)) {
        double m = 0.0;
        for (double v : u.values) m = std::max(m, std::abs(v));
        return m;
    }
    DEGPAR_REQUIRE(p >= 1.0, InvalidArgument, "norm exponent must be >= 1");
    return std::pow(detail::integrate_power({&u}, w, p, rule), 1.0 / p);
}

/// Norm of |grad u| (Euclidean length of the finite-difference gradient).
inline double gradient_lp_norm(const std::vector<Field>& grad, const WeightSpec& w, double p,
                               NormRule rule = NormRule::Gauss) {
    if (std::isinf(p)) {
        double m = 0.0;
        const std::size_t n = grad.front().values.size();
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (const auto& c : grad) s += c.values[i] * c.values[i];
            m = std::max(m, std::sqrt(s));
        }
        return m;
    }
    std::vector<const Field*> comps;
    for (const auto& c : grad) comps.push_back(&c);
    return std::pow(detail::integrate_power(comps, w, p, rule), 1.0 / p);
}

inline std::vector<Field> restrict_all(const std::vector<Field>& fs, const Region& r) {
    std::vector<Field> out;
    for (const auto& f : fs) out.push_back(restrict(f, r));
    return out;
}

/// ||u||_{L^p(region, rho)}; with_gradient adds ||grad u||^p before the root.
/// Gradients are taken on the whole field and then restricted.
inline double weighted_norm(const Field& u, const WeightSpec& w, const std::optional<Region>& region, double p,
                            bool with_gradient = false, NormRule rule = NormRule::Gauss) {
    const Field sub = region ? restrict(u, *region) : u;
    if (!with_gradient) return lp_norm(sub, w, p, rule);
    auto grad = gradient(u);
    if (region) grad = restrict_all(grad, *region);
    const double a = lp_norm(sub, w, p, rule);
    const double b = gradient_lp_norm(grad, w, p, rule);
    if (std::isinf(p)) return std::max(a, b);
    return std::pow(std::pow(a, p) + std::pow(b, p), 1.0 / p);
}

// ---------------------------------------------------------------------------
// Holder seminorms

struct GridPoint {
    std::vector<double> z;
    double t = 0.0;
};

struct HolderReport {
    double alpha = 0.0;
    int order = 0;
    Region region;
    double seminorm_c0 = 0.0;             // [u]_{C^{0,alpha}_p}
    std::optional<double> seminorm_c1;    // [u]_{C^{1,alpha}_p}
    std::vector<double> gradient_parts;   // [d_i u]_{C^{0,alpha}_p}
    std::optional<double> time_part;      // [u]_{C^{(1+alpha)/2}_t}
    double sup_norm = 0.0;
    double gradient_sup = 0.0;
    GridPoint argmax_p, argmax_q;
    std::size_t pairs = 0;
    bool exhaustive = true;

    /// ||u||_{C^{0,alpha}} or ||u||_{C^{1,alpha}} per the order of the report.
    [[nodiscard]] double norm() const {
        if (order == 0) return sup_norm + seminorm_c0;
        return sup_norm + gradient_sup + seminorm_c1.value_or(0.0);
    }

    [[nodiscard]] nlohmann::json to_json() const {
        nlohmann::json j;
        j["alpha"] = alpha;
        j["order"] = order;
        j["seminorm_c0"] = seminorm_c0;
        if (seminorm_c1) j["seminorm_c1"] = *seminorm_c1;
        if (!gradient_parts.empty()) j["gradient_parts"] = gradient_parts;
        if (time_part) j["time_part"] = *time_part;
        j["sup_norm"] = sup_norm;
        j["norm"] = norm();
        j["argmax_p"] = {{"z", argmax_p.z}, {"t", argmax_p.t}};
        j["argmax_q"] = {{"z", argmax_q.z}, {"t", argmax_q.t}};
        j["pairs"] = pairs;
        j["exhaustive"] = exhaustive;
        nlohmann::json reg;
        reg["x"] = region.x;
        reg["y"] = {region.y.first, region.y.second};
        reg["t"] = {region.t.first, region.t.second};
        j["region"] = reg;
        return j;
    }
};

namespace detail {

struct PairMax {
    double value = 0.0;
    std::size_t p = 0, q = 0;
    std::size_t pairs = 0;
};

// Space-time node n = spatial + S * level on a (restricted) grid.
struct NodeTable {
    const Grid* g = nullptr;
    std::size_t S = 0;
    std::size_t count = 0;

    explicit NodeTable(const Grid& grid) : g(&grid), S(grid.spatial_size()), count(grid.size()) {}

    [[nodiscard]] double dist2(std::size_t a, std::size_t b) const {
        const std::size_t ia = a % S, ib = b % S;
        double s = std::abs(g->time(static_cast<int>(a / S)) - g->time(static_cast<int>(b / S)));
        for (int k = 0; k < g->dim(); ++k) {
            const double d = g->coord(ia, k) - g->coord(ib, k);
            s += d * d;
        }
        return s;
    }
    [[nodiscard]] GridPoint point(std::size_t a) const {
        return {g->coords(a % S), g->time(static_cast<int>(a / S))};
    }
    // index of a shifted by `off` along axis k (k == dim means time), or npos
    [[nodiscard]] std::size_t shift(std::size_t a, int k, int off) const {
        if (k == g->dim()) {
            const long lvl = static_cast<long>(a / S) + off;
            if (lvl < 0 || lvl >= g->time_levels()) return std::numeric_limits<std::size_t>::max();
            return a % S + S * static_cast<std::size_t>(lvl);
        }
        const long j = g->index_along(a % S, k) + off;
        if (j < 0 || j >= g->axis(k).count) return std::numeric_limits<std::size_t>::max();
        return static_cast<std::size_t>(static_cast<long>(a) + off * static_cast<long>(g->stride(k)));
    }
};

// Visits pairs: all of them when they fit in the budget, otherwise a fixed
// sequence (nearest neighbours, dyadic offsets per axis, then seeded random
// pairs) cut at the budget, so a larger budget always sees a superset.
template <class Visit>
bool visit_pairs(const NodeTable& nt, std::size_t budget, std::uint64_t seed, bool same_z_only, Visit&& visit) {
    const std::size_t n = nt.count;
    const std::size_t S = nt.S;
    const int levels = nt.g->time_levels();
    const std::size_t total = same_z_only ? S * static_cast<std::size_t>(levels) * static_cast<std::size_t>(levels - 1) / 2
                                          : n * (n - 1) / 2;
    if (total <= budget) {
        if (same_z_only) {
            for (std::size_t i = 0; i < S; ++i)
                for (int a = 0; a < levels; ++a)
                    for (int b = a + 1; b < levels; ++b)
                        visit(i + S * static_cast<std::size_t>(a), i + S * static_cast<std::size_t>(b));
        } else {
            for (std::size_t a = 0; a < n; ++a)
                for (std::size_t b = a + 1; b < n; ++b) visit(a, b);
        }
        return true;
    }
    std::size_t used = 0;
    auto emit = [&](std::size_t a, std::size_t b) {
        if (used >= budget || b == std::numeric_limits<std::size_t>::max()) return;
        visit(a, b);
        ++used;
    };
    const int axes_hi = nt.g->dim();
    const int first_axis = same_z_only ? axes_hi : 0;
    for (int off = 1; used < budget; off *= 2) {
        bool any = false;
        for (int k = first_axis; k <= axes_hi; ++k) {
            const int extent = k == axes_hi ? levels : nt.g->axis(k).count;
            if (off >= extent) continue;
            any = true;
            for (std::size_t a = 0; a < n && used < budget; ++a) emit(a, nt.shift(a, k, off));
        }
        if (!any) break;
    }
    std::mt19937_64 rng(seed);
    if (same_z_only) {
        std::uniform_int_distribution<std::size_t> pick_z(0, S - 1);
        std::uniform_int_distribution<int> pick_l(0, levels - 1);
        while (used < budget) {
            const std::size_t i = pick_z(rng);
            const int a = pick_l(rng), b = pick_l(rng);
            if (a == b) continue;
            emit(i + S * static_cast<std::size_t>(a), i + S * static_cast<std::size_t>(b));
        }
    } else {
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        while (used < budget) {
            const std::size_t a = pick(rng), b = pick(rng);
            if (a == b) continue;
            emit(a, b);
        }
    }
    return false;
}

inline PairMax holder_quotient_max(const Field& u, double expo, std::size_t budget, std::uint64_t seed,
                                   bool same_z_only, bool& exhaustive) {
    const NodeTable nt(*u.grid);
    PairMax best;
    exhaustive = visit_pairs(nt, budget, seed, same_z_only, [&](std::size_t a, std::size_t b) {
        ++best.pairs;
        const double d2 = nt.dist2(a, b);
        if (d2 == 0.0) return;
        const double q = std::abs(u.values[a] - u.values[b]) / std::pow(d2, 0.5 * expo);
        if (q > best.value) {
            best.value = q;
            best.p = a;
            best.q = b;
        }
    });
    return best;
}

}  // namespace detail

inline constexpr std::size_t kDefaultPairBudget = 2'000'000;

/// Grid estimate of [u]_{C^{0,alpha}_p} (order 0), or of
/// [u]_{C^{1,alpha}_p} = sum_i [d_i u]_{C^{0,alpha}_p} + [u]_{C^{(1+alpha)/2}_t} (order 1),
/// over a region. The time part compares equal-z pairs only.
inline HolderReport holder_seminorm(const Field& u, double alpha, const std::optional<Region>& region, int order,
                                    std::size_t budget = kDefaultPairBudget, std::uint64_t seed = 0x5eed) {
    DEGPAR_REQUIRE(alpha > 0.0 && alpha <= 1.0, InvalidArgument, "Holder exponent must lie in (0,1]");
    DEGPAR_REQUIRE(order == 0 || order == 1, InvalidArgument, "Holder order must be 0 or 1");
    HolderReport rep;
    rep.alpha = alpha;
    rep.order = order;
    rep.region = region ? *region : Region::whole(*u.grid);
    const Field sub = region ? restrict(u, *region) : u;
    bool ex = true;
    const auto c0 = detail::holder_quotient_max(sub, alpha, budget, seed, false, ex);
    rep.seminorm_c0 = c0.value;
    rep.pairs = c0.pairs;
    rep.exhaustive = ex;
    const detail::NodeTable nt(*sub.grid);
    rep.argmax_p = nt.point(c0.p);
    rep.argmax_q = nt.point(c0.q);
    rep.sup_norm = lp_norm(sub, {}, std::numeric_limits<double>::infinity());
    if (order == 1) {
        auto grad = gradient(u);
        if (region) grad = restrict_all(grad, *region);
        double total = 0.0;
        for (const auto& gcomp : grad) {
            bool e = true;
            const auto m = detail::holder_quotient_max(gcomp, alpha, budget, seed, false, e);
            rep.gradient_parts.push_back(m.value);
            rep.exhaustive = rep.exhaustive && e;
            rep.pairs += m.pairs;
            total += m.value;
        }
        double tp = 0.0;
        if (sub.grid->time_levels() > 1) {
            bool e = true;
            const auto m = detail::holder_quotient_max(sub, 1.0 + alpha, budget, seed, true, e);
            tp = m.value;
            rep.exhaustive = rep.exhaustive && e;
            rep.pairs += m.pairs;
        }
        rep.time_part = tp;
        rep.seminorm_c1 = total + tp;
        rep.gradient_sup = gradient_lp_norm(grad, {}, std::numeric_limits<double>::infinity());
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Boundary exponent fit

struct ExponentFit {
    double exponent = 0.0;      // least-squares slope
    double residual = 0.0;      // RMS misfit in log space
    double clipped = 0.0;       // min(exponent, 1)
    bool lipschitz_or_better = false;
    std::vector<double> scales;
    std::vector<double> increments;
};

/// Fits log(max increment at d_p-scale s) against log s for pairs anchored
/// at the y = 0 nodes of the region, offset along +y, +-x and +t by dyadic
/// numbers of grid steps.
inline ExponentFit holder_exponent_fit(const Field& u, const std::optional<Region>& region) {
    const Field sub = region ? restrict(u, *region) : u;
    const Grid& g = *sub.grid;
    const int ds = g.dim();
    DEGPAR_REQUIRE(g.y_axis().coord(0) == 0.0, InvalidArgument, "exponent fit needs a region touching y = 0");
    const detail::NodeTable nt(g);
    const double s0 = g.y_axis().spacing();
    std::vector<double> best;
    double umax = 0.0;
    for (double v : sub.values) umax = std::max(umax, std::abs(v));
    auto record = [&](std::size_t a, std::size_t b) {
        if (b == std::numeric_limits<std::size_t>::max()) return;
        const double d = std::sqrt(nt.dist2(a, b));
        const long k = std::lround(std::log2(d / s0));
        if (k < 0) return;
        if (best.size() <= static_cast<std::size_t>(k)) best.resize(static_cast<std::size_t>(k) + 1, -1.0);
        best[static_cast<std::size_t>(k)] =
            std::max(best[static_cast<std::size_t>(k)], std::abs(sub.values[a] - sub.values[b]));
    };
    for (int lvl = 0; lvl < g.time_levels(); ++lvl) {
        for (std::size_t i = 0; i < g.spatial_size(); ++i) {
            if (g.index_along(i, ds - 1) != 0) continue;
            const std::size_t a = i + g.spatial_size() * static_cast<std::size_t>(lvl);
            for (int k = 0; k <= ds; ++k) {
                const int extent = k == ds ? g.time_levels() : g.axis(k).count;
                for (int off = 1; off < extent; off *= 2) {
                    record(a, nt.shift(a, k, off));
                    if (k < ds - 1) record(a, nt.shift(a, k, -off));
                }
            }
        }
    }
    ExponentFit fit;
    for (std::size_t k = 0; k < best.size(); ++k) {
        if (best[k] <= 1e-13 * (1.0 + umax)) continue;
        fit.scales.push_back(s0 * std::ldexp(1.0, static_cast<int>(k)));
        fit.increments.push_back(best[k]);
    }
    if (fit.scales.empty() && !best.empty()) {
        // increments at roundoff on every scale: the field is flat near y = 0
        fit.exponent = std::numeric_limits<double>::infinity();
        fit.clipped = 1.0;
        fit.lipschitz_or_better = true;
        return fit;
    }
    DEGPAR_REQUIRE(fit.scales.size() >= 4, InvalidArgument, "exponent fit needs at least 4 dyadic scales");
    const std::size_t n = fit.scales.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t k = 0; k < n; ++k) {
        const double x = std::log(fit.scales[k]), y = std::log(fit.increments[k]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double dn = static_cast<double>(n);
    fit.exponent = (dn * sxy - sx * sy) / (dn * sxx - sx * sx);
    const double icpt = (sy - fit.exponent * sx) / dn;
    double rss = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double r = std::log(fit.increments[k]) - (icpt + fit.exponent * std::log(fit.scales[k]));
        rss += r * r;
    }
    fit.residual = std::sqrt(rss / dn);
    fit.clipped = std::min(fit.exponent, 1.0);
    fit.lipschitz_or_better = fit.exponent >= 0.98;
    return fit;
}

}  // namespace degpar
