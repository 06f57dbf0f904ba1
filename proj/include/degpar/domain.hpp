#pragma once

// Tensor-product space-time grids on half-boxes [-L,L]^N x [0,y_max] x [t0,t1],
// sub-box regions, nodal fields and their serialization.

#include "degpar/error.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace degpar {

/// A uniform axis, possibly a window into a larger one. Node i of the window
/// sits at lo + (hi - lo) * (offset + i) / cells, so coordinates never drift.
struct Axis {
    double lo = 0.0;
    double hi = 1.0;
    int cells = 1;
    int offset = 0;
    int count = 2;

    [[nodiscard]] double coord(int i) const {
        return lo + (hi - lo) * static_cast<double>(offset + i) / cells;
    }
    [[nodiscard]] double spacing() const { return (hi - lo) / cells; }
    [[nodiscard]] std::vector<double> nodes() const {
        std::vector<double> out(static_cast<std::size_t>(count));
        for (int i = 0; i < count; ++i) out[static_cast<std::size_t>(i)] = coord(i);
        return out;
    }
    [[nodiscard]] Axis window(int first, int n) const { return {lo, hi, cells, offset + first, n}; }
};

struct GridSpec {
    int n_x = 1;  // number of x-dimensions (N)
    double L = 1.0;
    double y_max = 1.0;
    int nx = 8;
    int ny = 8;
    double t0 = -1.0;
    double t1 = 1.0;
    int nt = 8;
};

/// Space-time grid: spatial axes x_0..x_{N-1}, y (last), plus a time axis.
/// Spatial node index is row-major with x_0 fastest and y slowest; the full
/// space-time index is spatial + spatial_size * level.
class Grid {
public:
    Grid(std::vector<Axis> spatial, Axis time) : spatial_(std::move(spatial)), time_(time) {
        DEGPAR_REQUIRE(spatial_.size() >= 2, InvalidArgument, "grid needs at least one x-axis and y");
        strides_.resize(spatial_.size());
        std::size_t s = 1;
        for (std::size_t k = 0; k < spatial_.size(); ++k) {
            DEGPAR_REQUIRE(spatial_[k].count >= 1, InvalidArgument, "axis must have a node");
            strides_[k] = s;
            s *= static_cast<std::size_t>(spatial_[k].count);
        }
        spatial_size_ = s;
        DEGPAR_REQUIRE(time_.count >= 1, InvalidArgument, "time axis must have a level");
    }

    [[nodiscard]] int dim() const { return static_cast<int>(spatial_.size()); }
    [[nodiscard]] int n_x() const { return dim() - 1; }
    [[nodiscard]] const Axis& axis(int k) const { return spatial_[static_cast<std::size_t>(k)]; }
    [[nodiscard]] const Axis& y_axis() const { return spatial_.back(); }
    [[nodiscard]] const Axis& time_axis() const { return time_; }
    [[nodiscard]] const std::vector<Axis>& spatial_axes() const { return spatial_; }
    [[nodiscard]] std::size_t spatial_size() const { return spatial_size_; }
    [[nodiscard]] int time_levels() const { return time_.count; }
    [[nodiscard]] std::size_t size() const { return spatial_size_ * static_cast<std::size_t>(time_.count); }
    [[nodiscard]] std::size_t stride(int k) const { return strides_[static_cast<std::size_t>(k)]; }
    [[nodiscard]] double time(int level) const { return time_.coord(level); }
    [[nodiscard]] double dt() const { return time_.spacing(); }

    [[nodiscard]] int index_along(std::size_t node, int k) const {
        return static_cast<int>((node / strides_[static_cast<std::size_t>(k)])
                                % static_cast<std::size_t>(spatial_[static_cast<std::size_t>(k)].count));
    }
    [[nodiscard]] double coord(std::size_t node, int k) const {
        return spatial_[static_cast<std::size_t>(k)].coord(index_along(node, k));
    }
    void coords(std::size_t node, std::span<double> z) const {
        for (int k = 0; k < dim(); ++k) z[static_cast<std::size_t>(k)] = coord(node, k);
    }
    [[nodiscard]] std::vector<double> coords(std::size_t node) const {
        std::vector<double> z(static_cast<std::size_t>(dim()));
        coords(node, z);
        return z;
    }
    [[nodiscard]] std::size_t node(std::span<const int> idx) const {
        std::size_t n = 0;
        for (int k = 0; k < dim(); ++k) n += static_cast<std::size_t>(idx[static_cast<std::size_t>(k)]) * stride(k);
        return n;
    }

    /// Node on the hyperplane y = 0.
    [[nodiscard]] bool on_sigma(std::size_t node) const { return coord(node, dim() - 1) == 0.0; }
    [[nodiscard]] std::vector<std::size_t> sigma_nodes() const {
        std::vector<std::size_t> out;
        for (std::size_t n = 0; n < spatial_size_; ++n)
            if (on_sigma(n)) out.push_back(n);
        return out;
    }
    /// Node on face (axis k, low or high end) of this grid.
    [[nodiscard]] bool on_face(std::size_t node, int k, bool high) const {
        const int i = index_along(node, k);
        return high ? i == spatial_[static_cast<std::size_t>(k)].count - 1 : i == 0;
    }

    /// The same spatial grid restricted to one time level.
    [[nodiscard]] std::shared_ptr<const Grid> level_grid(int level) const {
        return std::make_shared<const Grid>(spatial_, time_.window(level, 1));
    }
    [[nodiscard]] std::size_t cell_count() const {
        std::size_t c = 1;
        for (const auto& a : spatial_) c *= static_cast<std::size_t>(std::max(a.count - 1, 0));
        return c;
    }

private:
    std::vector<Axis> spatial_;
    Axis time_;
    std::vector<std::size_t> strides_;
    std::size_t spatial_size_ = 0;
};

using GridPtr = std::shared_ptr<const Grid>;

inline constexpr std::size_t kMaxGridNodes = 100'000'000;

inline GridPtr build_grid(const GridSpec& spec) {
    DEGPAR_REQUIRE(spec.n_x >= 1, InvalidArgument, "grid needs n_x >= 1");
    DEGPAR_REQUIRE(spec.nx >= 2 && spec.ny >= 2 && spec.nt >= 2, InvalidArgument,
                   "grid needs nx, ny, nt >= 2");
    DEGPAR_REQUIRE(spec.L > 0.0 && spec.y_max > 0.0, InvalidArgument, "grid needs L, y_max > 0");
    DEGPAR_REQUIRE(spec.t0 < spec.t1, InvalidArgument, "grid needs t0 < t1");
    double total = static_cast<double>(spec.ny + 1) * (spec.nt + 1);
    for (int k = 0; k < spec.n_x; ++k) total *= spec.nx + 1;
    DEGPAR_REQUIRE(total <= static_cast<double>(kMaxGridNodes), InvalidArgument,
                   "grid exceeds the 1e8 node limit");
    std::vector<Axis> axes;
    for (int k = 0; k < spec.n_x; ++k) axes.push_back({-spec.L, spec.L, spec.nx, 0, spec.nx + 1});
    axes.push_back({0.0, spec.y_max, spec.ny, 0, spec.ny + 1});
    return std::make_shared<const Grid>(std::move(axes), Axis{spec.t0, spec.t1, spec.nt, 0, spec.nt + 1});
}

/// Nodal samples of a function on a grid.
struct Field {
    GridPtr grid;
    std::vector<double> values;

    Field() = default;
    explicit Field(GridPtr g, double fill = 0.0) : grid(std::move(g)), values(grid->size(), fill) {}
    Field(GridPtr g, std::vector<double> v) : grid(std::move(g)), values(std::move(v)) {
        DEGPAR_REQUIRE(values.size() == grid->size(), InvalidArgument, "field size does not match grid");
    }

    [[nodiscard]] std::span<double> level(int n) {
        return {values.data() + grid->spatial_size() * static_cast<std::size_t>(n), grid->spatial_size()};
    }
    [[nodiscard]] std::span<const double> level(int n) const {
        return {values.data() + grid->spatial_size() * static_cast<std::size_t>(n), grid->spatial_size()};
    }
    [[nodiscard]] double& at(std::size_t node, int lvl) {
        return values[node + grid->spatial_size() * static_cast<std::size_t>(lvl)];
    }
    [[nodiscard]] double at(std::size_t node, int lvl) const {
        return values[node + grid->spatial_size() * static_cast<std::size_t>(lvl)];
    }
    /// Copy of one time level as a single-level field.
    [[nodiscard]] Field level_field(int n) const {
        auto s = level(n);
        return Field(grid->level_grid(n), std::vector<double>(s.begin(), s.end()));
    }
    [[nodiscard]] bool all_finite() const {
        return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
    }
};

/// Samples f(z, t) at every node of every level.
template <class F>
Field sample(GridPtr grid, F&& f) {
    Field out(grid);
    std::vector<double> z(static_cast<std::size_t>(grid->dim()));
    for (int n = 0; n < grid->time_levels(); ++n) {
        const double t = grid->time(n);
        for (std::size_t i = 0; i < grid->spatial_size(); ++i) {
            grid->coords(i, z);
            out.at(i, n) = f(std::span<const double>(z), t);
        }
    }
    return out;
}

/// Coordinate sub-box: per-x-axis ranges, a y-range and a time interval.
/// Bounds are inclusive and snap to the nodes inside.
struct Region {
    std::vector<std::pair<double, double>> x;
    std::pair<double, double> y{0.0, 0.0};
    std::pair<double, double> t{0.0, 0.0};

    /// Q_r^+ = [-r,r]^N x [0,r] x [-r^2, r^2].
    static Region cylinder(int n_x, double r) {
        Region q;
        q.x.assign(static_cast<std::size_t>(n_x), {-r, r});
        q.y = {0.0, r};
        q.t = {-r * r, r * r};
        return q;
    }
    static Region whole(const Grid& g) {
        Region q;
        for (int k = 0; k < g.n_x(); ++k) q.x.emplace_back(g.axis(k).coord(0), g.axis(k).coord(g.axis(k).count - 1));
        q.y = {g.y_axis().coord(0), g.y_axis().coord(g.y_axis().count - 1)};
        q.t = {g.time(0), g.time(g.time_levels() - 1)};
        return q;
    }
    [[nodiscard]] Region with_time(double t0, double t1) const {
        Region q = *this;
        q.t = {t0, t1};
        return q;
    }
};

namespace detail {

// Index range [first, first + n) of window nodes inside [lo, hi].
inline std::pair<int, int> snap(const Axis& a, double lo, double hi, const char* name) {
    const double tol = 1e-9 * std::abs(a.spacing());
    const double first_c = a.coord(0);
    const double last_c = a.coord(a.count - 1);
    DEGPAR_REQUIRE(lo >= first_c - tol && hi <= last_c + tol && lo <= hi + tol, InvalidArgument,
                   std::string("region out of bounds along ") + name);
    int first = a.count;
    int last = -1;
    for (int i = 0; i < a.count; ++i) {
        const double c = a.coord(i);
        if (c >= lo - tol && c <= hi + tol) {
            first = std::min(first, i);
            last = std::max(last, i);
        }
    }
    DEGPAR_REQUIRE(last >= first, InvalidArgument, std::string("region contains no node along ") + name);
    return {first, last - first + 1};
}

}  // namespace detail

inline Field restrict(const Field& field, const Region& r) {
    const Grid& g = *field.grid;
    DEGPAR_REQUIRE(static_cast<int>(r.x.size()) == g.n_x(), InvalidArgument,
                   "region dimension does not match grid");
    DEGPAR_REQUIRE(r.y.first >= 0.0 || g.y_axis().coord(0) < 0.0, InvalidArgument,
                   "region y-range must start at y >= 0");
    std::vector<Axis> axes;
    std::vector<std::pair<int, int>> ranges;
    for (int k = 0; k < g.dim(); ++k) {
        const auto bounds = k < g.n_x() ? r.x[static_cast<std::size_t>(k)] : r.y;
        const auto rg = detail::snap(g.axis(k), bounds.first, bounds.second, k < g.n_x() ? "x" : "y");
        ranges.push_back(rg);
        axes.push_back(g.axis(k).window(rg.first, rg.second));
    }
    std::pair<int, int> trange{0, 1};
    if (g.time_levels() > 1) {
        trange = detail::snap(g.time_axis(), r.t.first, r.t.second, "t");
    }
    Axis taxis = g.time_axis().window(trange.first, trange.second);
    auto sub = std::make_shared<const Grid>(std::move(axes), taxis);
    Field out(sub);
    std::vector<int> idx(static_cast<std::size_t>(g.dim()));
    for (std::size_t i = 0; i < sub->spatial_size(); ++i) {
        for (int k = 0; k < g.dim(); ++k)
            idx[static_cast<std::size_t>(k)] = sub->index_along(i, k) + ranges[static_cast<std::size_t>(k)].first;
        const std::size_t src = g.node(idx);
        for (int n = 0; n < taxis.count; ++n) out.at(i, n) = field.at(src, n + trange.first);
    }
    return out;
}

/// Extension across y = 0 onto [-y_max, y_max]: even by default, odd for the
/// y-component of a flux (F_y(x,-y) = -F_y(x,y)).
inline Field even_reflect(const Field& field, bool odd = false) {
    const Grid& g = *field.grid;
    const Axis& ya = g.y_axis();
    DEGPAR_REQUIRE(ya.offset == 0 && ya.lo == 0.0, InvalidArgument, "even_reflect needs a field starting at y = 0");
    const int ny = ya.count - 1;
    std::vector<Axis> axes = g.spatial_axes();
    const double top = ya.coord(ny);
    axes.back() = Axis{-top, top, 2 * ny, 0, 2 * ny + 1};
    auto doubled = std::make_shared<const Grid>(std::move(axes), g.time_axis());
    Field out(doubled);
    const int d = g.dim();
    std::vector<int> idx(static_cast<std::size_t>(d));
    for (std::size_t i = 0; i < doubled->spatial_size(); ++i) {
        for (int k = 0; k < d; ++k) idx[static_cast<std::size_t>(k)] = doubled->index_along(i, k);
        int& jy = idx.back();
        const int j = jy - ny;
        const double sign = (odd && j < 0) ? -1.0 : 1.0;
        jy = std::abs(j);
        const std::size_t src = g.node(idx);
        for (int n = 0; n < g.time_levels(); ++n) out.at(i, n) = sign * field.at(src, n);
    }
    return out;
}

// CSV: header x0,...,x{N-1},y,t,value; one row per space-time node.
inline void write_csv(const Field& f, std::ostream& os) {
    const Grid& g = *f.grid;
    for (int k = 0; k < g.n_x(); ++k) os << 'x' << k << ',';
    os << "y,t,value\n";
    os << std::setprecision(17);
    std::vector<double> z(static_cast<std::size_t>(g.dim()));
    for (int n = 0; n < g.time_levels(); ++n) {
        for (std::size_t i = 0; i < g.spatial_size(); ++i) {
            g.coords(i, z);
            for (double c : z) os << c << ',';
            os << g.time(n) << ',' << f.at(i, n) << '\n';
        }
    }
}

// Binary layout, all little-endian:
//   char[4]  "DGPF"
//   uint32   version (1)
//   uint32   number of axes D = N + 2
//   D times, in order t, y, x_{N-1}, ..., x_0:
//       uint64 node count, float64 first coordinate, float64 last coordinate
//   float64  values, row-major over (t, y, x_{N-1}, ..., x_0), x_0 fastest.
namespace detail {

template <class T>
void put_le(std::ostream& os, T v) {
    static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
T get_le(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    DEGPAR_REQUIRE(is.good(), InvalidArgument, "truncated binary field");
    return v;
}

}  // namespace detail

inline void write_binary(const Field& f, std::ostream& os) {
    const Grid& g = *f.grid;
    os.write("DGPF", 4);
    detail::put_le<std::uint32_t>(os, 1);
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(g.dim() + 1));
    auto put_axis = [&](const Axis& a) {
        detail::put_le<std::uint64_t>(os, static_cast<std::uint64_t>(a.count));
        detail::put_le<double>(os, a.coord(0));
        detail::put_le<double>(os, a.coord(a.count - 1));
    };
    put_axis(g.time_axis());
    for (int k = g.dim() - 1; k >= 0; --k) put_axis(g.axis(k));
    for (double v : f.values) detail::put_le<double>(os, v);
}

inline Field read_binary(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    DEGPAR_REQUIRE(is.good() && std::memcmp(magic, "DGPF", 4) == 0, InvalidArgument, "not a binary field");
    DEGPAR_REQUIRE(detail::get_le<std::uint32_t>(is) == 1, InvalidArgument, "unsupported field version");
    const auto naxes = detail::get_le<std::uint32_t>(is);
    DEGPAR_REQUIRE(naxes >= 3, InvalidArgument, "binary field needs at least 3 axes");
    auto get_axis = [&]() {
        const auto count = static_cast<int>(detail::get_le<std::uint64_t>(is));
        const double first = detail::get_le<double>(is);
        const double last = detail::get_le<double>(is);
        if (count == 1) return Axis{first, first + 1.0, 1, 0, 1};
        return Axis{first, last, count - 1, 0, count};
    };
    const Axis t = get_axis();
    std::vector<Axis> rev;
    for (std::uint32_t k = 1; k < naxes; ++k) rev.push_back(get_axis());
    std::reverse(rev.begin(), rev.end());
    auto grid = std::make_shared<const Grid>(std::move(rev), t);
    Field out(grid);
    for (double& v : out.values) v = detail::get_le<double>(is);
    return out;
}

}  // namespace degpar
