#pragma once

// Multilinear finite elements for the weighted weak form
//     -int rho u d_t phi + int rho A grad u . grad phi = int rho (f phi - F . grad phi)
// on tensor cells. Every cell matrix is a sum of tensor products of 1-D
// factors; the y-factors carry the weight through exact cell moments.

#include "degpar/domain.hpp"
#include "degpar/weights.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <array>
#include <cmath>
#include <algorithm>
#include <functional>
#include <iomanip>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace degpar {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Vector = Eigen::VectorXd;

/// Symmetric coefficient matrix A, per spatial node or uniform, with its
/// declared ellipticity bounds.
class CoefficientField {
public:
    CoefficientField() = default;

    static CoefficientField identity(int dim) { return uniform(Eigen::MatrixXd::Identity(dim, dim), 1.0, 1.0); }

    static CoefficientField uniform(const Eigen::MatrixXd& a, double lambda, double Lambda) {
        CoefficientField c;
        c.dim_ = static_cast<int>(a.rows());
        c.lambda_ = lambda;
        c.Lambda_ = Lambda;
        c.uniform_ = true;
        c.entries_.assign(a.data(), a.data() + a.size());
        c.validate();
        return c;
    }

    /// Samples fn(z) -> matrix at every spatial node of the grid.
    template <class Fn>
    static CoefficientField from_function(const Grid& g, Fn&& fn, double lambda, double Lambda) {
        CoefficientField c;
        c.dim_ = g.dim();
        c.lambda_ = lambda;
        c.Lambda_ = Lambda;
        c.uniform_ = false;
        const auto dd = static_cast<std::size_t>(c.dim_ * c.dim_);
        c.entries_.resize(g.spatial_size() * dd);
        std::vector<double> z(static_cast<std::size_t>(g.dim()));
        for (std::size_t i = 0; i < g.spatial_size(); ++i) {
            g.coords(i, z);
            const Eigen::MatrixXd a = fn(std::span<const double>(z));
            DEGPAR_REQUIRE(a.rows() == c.dim_ && a.cols() == c.dim_, InvalidArgument,
                           "coefficient matrix has the wrong size");
            std::copy(a.data(), a.data() + a.size(), c.entries_.begin() + static_cast<std::ptrdiff_t>(i * dd));
        }
        c.validate();
        return c;
    }

    [[nodiscard]] int dim() const { return dim_; }
    [[nodiscard]] double lambda() const { return lambda_; }
    [[nodiscard]] double Lambda() const { return Lambda_; }
    [[nodiscard]] bool is_uniform() const { return uniform_; }
    [[nodiscard]] std::size_t node_count() const {
        return uniform_ ? 0 : entries_.size() / static_cast<std::size_t>(dim_ * dim_);
    }

    [[nodiscard]] Eigen::Map<const Eigen::MatrixXd> at(std::size_t node) const {
        const std::size_t off = uniform_ ? 0 : node * static_cast<std::size_t>(dim_ * dim_);
        return {entries_.data() + off, dim_, dim_};
    }

    /// Exact symmetry and lambda|xi|^2 <= A xi.xi <= Lambda|xi|^2 at every node.
    void validate() const {
        DEGPAR_REQUIRE(dim_ >= 2, InvalidArgument, "coefficient dimension must be >= 2");
        DEGPAR_REQUIRE(lambda_ > 0.0 && lambda_ <= Lambda_, InvalidArgument,
                       "ellipticity bounds need 0 < lambda <= Lambda");
        const std::size_t n = uniform_ ? 1 : node_count();
        for (std::size_t i = 0; i < n; ++i) {
            const auto a = at(i);
            for (int r = 0; r < dim_; ++r)
                for (int c = r + 1; c < dim_; ++c)
                    DEGPAR_REQUIRE(a(r, c) == a(c, r), InvalidArgument, "coefficient matrix is not symmetric");
            const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a, Eigen::EigenvaluesOnly);
            const double tol = 1e-12 * Lambda_;
            DEGPAR_REQUIRE(eig.eigenvalues().minCoeff() >= lambda_ - tol &&
                               eig.eigenvalues().maxCoeff() <= Lambda_ + tol,
                           InvalidArgument,
                           "ellipticity violated at node " + std::to_string(i) + ": eigenvalues in [" +
                               std::to_string(eig.eigenvalues().minCoeff()) + ", " +
                               std::to_string(eig.eigenvalues().maxCoeff()) + "]");
        }
    }

private:
    int dim_ = 0;
    double lambda_ = 1.0;
    double Lambda_ = 1.0;
    bool uniform_ = true;
    std::vector<double> entries_;
};

/// Right-hand side data: f and the components of F, each over the grid.
/// Empty fields stand for zero.
struct SourceData {
    Field f;
    std::vector<Field> F;

    [[nodiscard]] bool has_f() const { return f.grid != nullptr; }
    [[nodiscard]] bool has_F() const {
        for (const auto& c : F)
            if (c.grid) return true;
        return false;
    }
};

enum class FaceKind { Natural, Dirichlet };

using TraceFn = std::function<double(std::span<const double>, double)>;

/// One condition per face. Faces are numbered 2k (low end of axis k) and
/// 2k+1 (high end); the y-low face, 2(dim-1), is the hyperplane y = 0.
struct BoundaryCondition {
    std::vector<FaceKind> kind;
    std::vector<TraceFn> trace;  // empty function = homogeneous

    static BoundaryCondition all_natural(int dim) {
        BoundaryCondition bc;
        bc.kind.assign(static_cast<std::size_t>(2 * dim), FaceKind::Natural);
        bc.trace.resize(static_cast<std::size_t>(2 * dim));
        return bc;
    }
    /// Homogeneous Dirichlet everywhere except the conormal face y = 0.
    static BoundaryCondition conormal_sigma(int dim) {
        BoundaryCondition bc = all_natural(dim);
        for (int f = 0; f < 2 * dim; ++f)
            if (f != 2 * (dim - 1)) bc.kind[static_cast<std::size_t>(f)] = FaceKind::Dirichlet;
        return bc;
    }
    static BoundaryCondition all_dirichlet(int dim) {
        BoundaryCondition bc = all_natural(dim);
        std::fill(bc.kind.begin(), bc.kind.end(), FaceKind::Dirichlet);
        return bc;
    }
    BoundaryCondition& set(int face, FaceKind k, TraceFn g = {}) {
        kind.at(static_cast<std::size_t>(face)) = k;
        trace.at(static_cast<std::size_t>(face)) = std::move(g);
        return *this;
    }
    /// Same trace function on every Dirichlet face.
    BoundaryCondition& set_trace_all(const TraceFn& g) {
        for (std::size_t f = 0; f < kind.size(); ++f)
            if (kind[f] == FaceKind::Dirichlet) trace[f] = g;
        return *this;
    }
    [[nodiscard]] bool has_dirichlet() const {
        return std::any_of(kind.begin(), kind.end(), [](FaceKind k) { return k == FaceKind::Dirichlet; });
    }
};

namespace detail {

// Products of 1-D shape functions psi_0 = 1 - s, psi_1 = s on one cell.
struct Factors1D {
    std::array<std::array<double, 2>, 2> mass{};   // int w psi_p psi_q
    std::array<std::array<double, 2>, 2> stiff{};  // int w psi_p' psi_q'
    std::array<std::array<double, 2>, 2> mixed{};  // int w psi_p' psi_q
};

inline Factors1D plain_factors(double h) {
    Factors1D f;
    f.mass = {{{h / 3.0, h / 6.0}, {h / 6.0, h / 3.0}}};
    f.stiff = {{{1.0 / h, -1.0 / h}, {-1.0 / h, 1.0 / h}}};
    f.mixed = {{{-0.5, -0.5}, {0.5, 0.5}}};
    return f;
}

inline Factors1D weighted_factors(const std::array<double, 6>& m, double h) {
    Factors1D f;
    f.mass = {{{m[0] - 2.0 * m[1] + m[2], m[1] - m[2]}, {m[1] - m[2], m[2]}}};
    const double s = m[0] / (h * h);
    f.stiff = {{{s, -s}, {-s, s}}};
    const double c0 = (m[0] - m[1]) / h;
    const double c1 = m[1] / h;
    f.mixed = {{{-c0, -c1}, {c0, c1}}};
    return f;
}

}  // namespace detail

/// Discretization of one (weight, grid) pair; caches the per-cell factors.
class Discretization {
public:
    Discretization(WeightSpec w, GridPtr grid) : w_(w), grid_(std::move(grid)) {
        validate(w_);
        DEGPAR_REQUIRE(std::abs(w_.a) <= 100.0, InvalidArgument, "weight exponent |a| > 100 is not supported");
        const Axis& ya = grid_->y_axis();
        DEGPAR_REQUIRE(ya.count >= 2, InvalidArgument, "the y-axis needs at least one cell");
        const bool touches_sigma = ya.coord(0) <= 0.0 && ya.coord(ya.count - 1) >= 0.0;
        DEGPAR_REQUIRE(!(touches_sigma && w_.eps == 0.0 && w_.a <= -1.0), InvalidArgument,
                       "a <= -1 is not integrable on cells touching y = 0");
        yaxis_ = WeightedAxis(w_, ya.nodes());
        for (int k = 0; k + 1 < grid_->dim(); ++k) {
            DEGPAR_REQUIRE(grid_->axis(k).count >= 2, InvalidArgument, "every axis needs at least one cell");
            xfactors_.push_back(detail::plain_factors(grid_->axis(k).spacing()));
        }
        const double hy = ya.spacing();
        for (const auto& m : yaxis_.moments) yfactors_.push_back(detail::weighted_factors(m, hy));
    }

    [[nodiscard]] const WeightSpec& weight() const { return w_; }
    [[nodiscard]] const GridPtr& grid() const { return grid_; }
    [[nodiscard]] const WeightedAxis& weighted_axis() const { return yaxis_; }

    /// M_ij = int rho b phi_i phi_j, b cell-averaged over vertices.
    [[nodiscard]] SparseMatrix mass(std::span<const double> b = {}) const {
        if (!b.empty()) {
            DEGPAR_REQUIRE(b.size() == grid_->spatial_size(), InvalidArgument, "mass factor has the wrong size");
            for (double v : b) DEGPAR_REQUIRE(v > 0.0 && std::isfinite(v), InvalidArgument, "mass factor must be positive");
        }
        return assemble([&](const CellView& c, auto&& emit) {
            const double scale = b.empty() ? 1.0 : c.average(b);
            for (int v = 0; v < c.nv; ++v)
                for (int u = v; u < c.nv; ++u) emit(v, u, scale * c.mass(v, u));
        });
    }

    /// K_ij = int rho A grad phi_i . grad phi_j with A cell-averaged over vertices.
    [[nodiscard]] SparseMatrix stiffness(const CoefficientField& A) const {
        DEGPAR_REQUIRE(A.dim() == grid_->dim(), InvalidArgument, "coefficient dimension does not match the grid");
        DEGPAR_REQUIRE(A.is_uniform() || A.node_count() == grid_->spatial_size(), InvalidArgument,
                       "coefficient field does not match the grid");
        const int d = grid_->dim();
        return assemble([&](const CellView& c, auto&& emit) {
            Eigen::MatrixXd acell = Eigen::MatrixXd::Zero(d, d);
            if (A.is_uniform()) {
                acell = A.at(0);
            } else {
                for (int v = 0; v < c.nv; ++v) acell += A.at(c.node[static_cast<std::size_t>(v)]);
                acell /= c.nv;
            }
            for (int v = 0; v < c.nv; ++v)
                for (int u = v; u < c.nv; ++u) {
                    double s = 0.0;
                    for (int p = 0; p < d; ++p)
                        for (int q = 0; q < d; ++q)
                            if (acell(p, q) != 0.0) s += acell(p, q) * c.grad_grad(v, u, p, q);
                    emit(v, u, s);
                }
        });
    }

    /// L_i = int rho (f phi_i - F . grad phi_i) with f, F multilinear interpolants.
    /// No flux term appears on natural faces: that is the conormal condition.
    [[nodiscard]] Vector load(std::span<const double> f, const std::vector<std::span<const double>>& F) const {
        const Grid& g = *grid_;
        const int d = g.dim();
        Vector out = Vector::Zero(static_cast<Eigen::Index>(g.spatial_size()));
        if (!f.empty()) DEGPAR_REQUIRE(f.size() == g.spatial_size(), InvalidArgument, "f has the wrong size");
        DEGPAR_REQUIRE(F.empty() || static_cast<int>(F.size()) == d, InvalidArgument,
                       "F needs one component per spatial axis");
        for (const auto& c : F)
            if (!c.empty()) DEGPAR_REQUIRE(c.size() == g.spatial_size(), InvalidArgument, "F has the wrong size");
        for_each_cell([&](const CellView& c) {
            for (int v = 0; v < c.nv; ++v) {
                double acc = 0.0;
                for (int u = 0; u < c.nv; ++u) {
                    const std::size_t nu = c.node[static_cast<std::size_t>(u)];
                    if (!f.empty()) acc += c.mass(v, u) * f[nu];
                    for (int p = 0; p < static_cast<int>(F.size()); ++p) {
                        if (F[static_cast<std::size_t>(p)].empty()) continue;
                        acc -= c.grad_value(v, u, p) * F[static_cast<std::size_t>(p)][nu];
                    }
                }
                out(static_cast<Eigen::Index>(c.node[static_cast<std::size_t>(v)])) += acc;
            }
        });
        return out;
    }

    [[nodiscard]] Vector load(const SourceData& data, int level) const {
        std::span<const double> f;
        if (data.has_f()) f = data.f.level(level);
        std::vector<std::span<const double>> F;
        if (data.has_F()) {
            for (const auto& c : data.F) F.push_back(c.grid ? c.level(level) : std::span<const double>{});
        }
        return load(f, F);
    }

private:
    struct CellView {
        const Discretization* disc = nullptr;
        int nv = 0;
        int dim = 0;
        std::array<std::size_t, 8> node{};
        std::array<const detail::Factors1D*, 3> fac{};

        [[nodiscard]] static int bit(int v, int k) { return (v >> k) & 1; }

        [[nodiscard]] double mass(int v, int u) const {
            double m = 1.0;
            for (int k = 0; k < dim; ++k) m *= fac[static_cast<std::size_t>(k)]->mass[bit(v, k)][bit(u, k)];
            return m;
        }
        // int rho d_p phi_v d_q phi_u
        [[nodiscard]] double grad_grad(int v, int u, int p, int q) const {
            double m = 1.0;
            for (int k = 0; k < dim; ++k) {
                const auto& f = *fac[static_cast<std::size_t>(k)];
                const int a = bit(v, k);
                const int b = bit(u, k);
                if (k == p && k == q) m *= f.stiff[a][b];
                else if (k == p) m *= f.mixed[a][b];
                else if (k == q) m *= f.mixed[b][a];
                else m *= f.mass[a][b];
            }
            return m;
        }
        // int rho phi_u d_p phi_v
        [[nodiscard]] double grad_value(int v, int u, int p) const {
            double m = 1.0;
            for (int k = 0; k < dim; ++k) {
                const auto& f = *fac[static_cast<std::size_t>(k)];
                m *= (k == p) ? f.mixed[bit(v, k)][bit(u, k)] : f.mass[bit(v, k)][bit(u, k)];
            }
            return m;
        }
        [[nodiscard]] double average(std::span<const double> nodal) const {
            double s = 0.0;
            for (int v = 0; v < nv; ++v) s += nodal[node[static_cast<std::size_t>(v)]];
            return s / nv;
        }
    };

    template <class Visit>
    void for_each_cell(Visit&& visit) const {
        const Grid& g = *grid_;
        const int d = g.dim();
        DEGPAR_REQUIRE(d <= 3, InvalidArgument, "assembly supports at most two x-dimensions");
        std::vector<int> cells(static_cast<std::size_t>(d));
        std::size_t total = 1;
        for (int k = 0; k < d; ++k) {
            cells[static_cast<std::size_t>(k)] = g.axis(k).count - 1;
            total *= static_cast<std::size_t>(cells[static_cast<std::size_t>(k)]);
        }
        CellView c;
        c.disc = this;
        c.dim = d;
        c.nv = 1 << d;
        std::vector<int> idx(static_cast<std::size_t>(d));
        for (std::size_t cell = 0; cell < total; ++cell) {
            std::size_t rem = cell;
            for (int k = 0; k < d; ++k) {
                idx[static_cast<std::size_t>(k)] = static_cast<int>(rem % static_cast<std::size_t>(cells[static_cast<std::size_t>(k)]));
                rem /= static_cast<std::size_t>(cells[static_cast<std::size_t>(k)]);
            }
            std::size_t base = 0;
            for (int k = 0; k < d; ++k) base += static_cast<std::size_t>(idx[static_cast<std::size_t>(k)]) * g.stride(k);
            for (int v = 0; v < c.nv; ++v) {
                std::size_t n = base;
                for (int k = 0; k < d; ++k)
                    if (CellView::bit(v, k)) n += g.stride(k);
                c.node[static_cast<std::size_t>(v)] = n;
            }
            for (int k = 0; k + 1 < d; ++k) c.fac[static_cast<std::size_t>(k)] = &xfactors_[static_cast<std::size_t>(k)];
            c.fac[static_cast<std::size_t>(d - 1)] = &yfactors_[static_cast<std::size_t>(idx.back())];
            visit(c);
        }
    }

    // Local entries are produced for v <= u only and mirrored with identical
    // values, so the assembled matrix is exactly symmetric.
    template <class Local>
    SparseMatrix assemble(Local&& local) const {
        const auto n = static_cast<Eigen::Index>(grid_->spatial_size());
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(grid_->cell_count() * static_cast<std::size_t>((1 << grid_->dim()) * (1 << grid_->dim())));
        for_each_cell([&](const CellView& c) {
            local(c, [&](int v, int u, double val) {
                const auto i = static_cast<Eigen::Index>(c.node[static_cast<std::size_t>(v)]);
                const auto j = static_cast<Eigen::Index>(c.node[static_cast<std::size_t>(u)]);
                trip.emplace_back(i, j, val);
                if (i != j) trip.emplace_back(j, i, val);
            });
        });
        SparseMatrix m(n, n);
        m.setFromTriplets(trip.begin(), trip.end());
        m.makeCompressed();
        return m;
    }

    WeightSpec w_;
    GridPtr grid_;
    WeightedAxis yaxis_;
    std::vector<detail::Factors1D> xfactors_;
    std::vector<detail::Factors1D> yfactors_;
};

inline SparseMatrix assemble_mass(const WeightSpec& w, GridPtr grid, std::span<const double> b = {}) {
    return Discretization(w, std::move(grid)).mass(b);
}

inline SparseMatrix assemble_stiffness(const WeightSpec& w, const CoefficientField& A, GridPtr grid) {
    A.validate();
    return Discretization(w, std::move(grid)).stiffness(A);
}

inline Vector assemble_load(const WeightSpec& w, const SourceData& data, GridPtr grid, int level = 0) {
    return Discretization(w, std::move(grid)).load(data, level);
}

/// Splits spatial nodes into free and Dirichlet-constrained sets.
class DirichletSplit {
public:
    DirichletSplit(const Grid& g, const BoundaryCondition& bc) : grid_(&g), bc_(bc) {
        const int d = g.dim();
        DEGPAR_REQUIRE(static_cast<int>(bc.kind.size()) == 2 * d && bc.trace.size() == bc.kind.size(),
                       InvalidArgument, "boundary condition needs exactly one entry per face");
        global_to_free_.assign(g.spatial_size(), -1);
        for (std::size_t i = 0; i < g.spatial_size(); ++i) {
            std::vector<int> faces;
            for (int k = 0; k < d; ++k) {
                for (int hi = 0; hi < 2; ++hi) {
                    const int face = 2 * k + hi;
                    if (bc.kind[static_cast<std::size_t>(face)] == FaceKind::Dirichlet && g.on_face(i, k, hi == 1))
                        faces.push_back(face);
                }
            }
            if (faces.empty()) {
                global_to_free_[i] = static_cast<int>(free_.size());
                free_.push_back(i);
            } else {
                fixed_.push_back(i);
                fixed_faces_.push_back(std::move(faces));
            }
        }
    }

    [[nodiscard]] std::size_t free_count() const { return free_.size(); }
    [[nodiscard]] std::size_t fixed_count() const { return fixed_.size(); }
    [[nodiscard]] const std::vector<std::size_t>& free_nodes() const { return free_; }
    [[nodiscard]] const std::vector<std::size_t>& fixed_nodes() const { return fixed_; }
    [[nodiscard]] bool is_free(std::size_t node) const { return global_to_free_[node] >= 0; }

    /// Dirichlet values at time t; traces of faces meeting at an edge must agree.
    [[nodiscard]] Vector trace_values(double t) const {
        Vector g(static_cast<Eigen::Index>(fixed_.size()));
        std::vector<double> z(static_cast<std::size_t>(grid_->dim()));
        for (std::size_t k = 0; k < fixed_.size(); ++k) {
            grid_->coords(fixed_[k], z);
            double value = 0.0;
            bool first = true;
            for (int face : fixed_faces_[k]) {
                const auto& fn = bc_.trace[static_cast<std::size_t>(face)];
                const double v = fn ? fn(z, t) : 0.0;
                DEGPAR_REQUIRE(std::isfinite(v), InvalidArgument, "Dirichlet trace is not finite");
                if (first) {
                    value = v;
                    first = false;
                } else {
                    DEGPAR_REQUIRE(std::abs(v - value) <= 1e-10 * (1.0 + std::abs(value)), InvalidArgument,
                                   "inconsistent Dirichlet traces on a shared edge");
                }
            }
            g(static_cast<Eigen::Index>(k)) = value;
        }
        return g;
    }

    /// Blocks (free,free) and (free,fixed) of a spatial matrix.
    [[nodiscard]] std::pair<SparseMatrix, SparseMatrix> split(const SparseMatrix& a) const {
        std::vector<int> fixed_index(grid_->spatial_size(), -1);
        for (std::size_t k = 0; k < fixed_.size(); ++k) fixed_index[fixed_[k]] = static_cast<int>(k);
        std::vector<Eigen::Triplet<double>> ff, fc;
        for (Eigen::Index col = 0; col < a.outerSize(); ++col) {
            for (SparseMatrix::InnerIterator it(a, col); it; ++it) {
                const int r = global_to_free_[static_cast<std::size_t>(it.row())];
                if (r < 0) continue;
                const int cf = global_to_free_[static_cast<std::size_t>(it.col())];
                if (cf >= 0) ff.emplace_back(r, cf, it.value());
                else fc.emplace_back(r, fixed_index[static_cast<std::size_t>(it.col())], it.value());
            }
        }
        SparseMatrix mff(static_cast<Eigen::Index>(free_.size()), static_cast<Eigen::Index>(free_.size()));
        SparseMatrix mfc(static_cast<Eigen::Index>(free_.size()), static_cast<Eigen::Index>(fixed_.size()));
        mff.setFromTriplets(ff.begin(), ff.end());
        mfc.setFromTriplets(fc.begin(), fc.end());
        return {std::move(mff), std::move(mfc)};
    }

    [[nodiscard]] Vector restrict_free(const Vector& full) const {
        Vector out(static_cast<Eigen::Index>(free_.size()));
        for (std::size_t k = 0; k < free_.size(); ++k)
            out(static_cast<Eigen::Index>(k)) = full(static_cast<Eigen::Index>(free_[k]));
        return out;
    }

    [[nodiscard]] Vector expand(const Vector& free_values, const Vector& fixed_values) const {
        Vector out(static_cast<Eigen::Index>(grid_->spatial_size()));
        for (std::size_t k = 0; k < free_.size(); ++k)
            out(static_cast<Eigen::Index>(free_[k])) = free_values(static_cast<Eigen::Index>(k));
        for (std::size_t k = 0; k < fixed_.size(); ++k)
            out(static_cast<Eigen::Index>(fixed_[k])) = fixed_values(static_cast<Eigen::Index>(k));
        return out;
    }

private:
    const Grid* grid_;
    BoundaryCondition bc_;
    std::vector<int> global_to_free_;
    std::vector<std::size_t> free_;
    std::vector<std::size_t> fixed_;
    std::vector<std::vector<int>> fixed_faces_;
};

/// Dirichlet-reduced linear system A_ff u_f = L_f - A_fc g.
struct ConstrainedSystem {
    SparseMatrix matrix;
    Vector rhs;
    Vector fixed_values;
};

inline ConstrainedSystem apply_dirichlet(const SparseMatrix& a, const Vector& load, const DirichletSplit& split,
                                         double t) {
    auto [ff, fc] = split.split(a);
    ConstrainedSystem sys;
    sys.fixed_values = split.trace_values(t);
    sys.rhs = split.restrict_free(load);
    if (split.fixed_count() > 0) sys.rhs -= fc * sys.fixed_values;
    sys.matrix = std::move(ff);
    return sys;
}

/// Coordinate text export: one "row col value" line per stored entry.
inline void write_coordinate(const SparseMatrix& m, std::ostream& os) {
    os << std::setprecision(17);
    for (Eigen::Index col = 0; col < m.outerSize(); ++col)
        for (SparseMatrix::InnerIterator it(m, col); it; ++it) os << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
}

}  // namespace degpar
