#pragma once

// Uniform tensor grids on (0,L1) or (0,L1)x(0,L2) with homogeneous Dirichlet
// boundary, nodal fields, trapezoid quadrature and two-point face gradients.
//
// Fields store every node including the boundary ring. State fields of the
// PDE keep the ring at zero; generic sampled data (quadrature tests, CSV
// import) may carry boundary values and are integrated with the trapezoid
// weights, so that a constant integrates to itself times |Omega|.

#include <pmwell/error.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <istream>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace pmwell {

class Grid {
public:
    static constexpr int kMinCells = 4;

    /// Throws InvalidArgument on dim outside {1,2}, non-positive extents or
    /// fewer than kMinCells cells along any axis.
    static std::shared_ptr<const Grid> build(int dim, std::span<const double> extents,
                                             std::span<const int> cells) {
        if (dim != 1 && dim != 2) {
            throw InvalidArgument("grid dimension must be 1 or 2, got " + std::to_string(dim));
        }
        if (extents.size() != static_cast<std::size_t>(dim) ||
            cells.size() != static_cast<std::size_t>(dim)) {
            throw InvalidArgument("grid needs one extent and one cell count per axis");
        }
        auto g = std::shared_ptr<Grid>(new Grid());
        g->dim_ = dim;
        for (int a = 0; a < dim; ++a) {
            if (!(extents[a] > 0.0) || !std::isfinite(extents[a])) {
                throw InvalidArgument("grid extents must be positive and finite");
            }
            if (cells[a] < kMinCells) {
                throw InvalidArgument("grid needs at least " + std::to_string(kMinCells) +
                                      " cells per axis, got " + std::to_string(cells[a]));
            }
            g->extents_[a] = extents[a];
            g->cells_[a] = cells[a];
            g->spacing_[a] = extents[a] / static_cast<double>(cells[a]);
        }
        g->finalize();
        return g;
    }

    static std::shared_ptr<const Grid> build(int dim, std::initializer_list<double> extents,
                                             std::initializer_list<int> cells) {
        return build(dim, std::span<const double>(extents.begin(), extents.size()),
                     std::span<const int>(cells.begin(), cells.size()));
    }

    int dim() const noexcept { return dim_; }
    double extent(int axis) const noexcept { return extents_[axis]; }
    int cells(int axis) const noexcept { return cells_[axis]; }
    double spacing(int axis) const noexcept { return spacing_[axis]; }

    /// Nodes along an axis including both boundary nodes; 1 for unused axes.
    std::size_t nodes_along(int axis) const noexcept {
        return axis < dim_ ? static_cast<std::size_t>(cells_[axis]) + 1 : 1;
    }
    std::size_t node_count() const noexcept { return nodes_along(0) * nodes_along(1); }
    std::size_t interior_count() const noexcept { return interior_.size(); }

    std::size_t index(std::size_t i, std::size_t j = 0) const noexcept {
        return j * nodes_along(0) + i;
    }
    std::size_t stride(int axis) const noexcept { return axis == 0 ? 1 : nodes_along(0); }

    std::array<std::size_t, 2> ij(std::size_t node) const noexcept {
        return {node % nodes_along(0), node / nodes_along(0)};
    }

    bool on_boundary(std::size_t node) const noexcept { return !is_interior_[node]; }

    std::array<double, 2> coords(std::size_t node) const noexcept {
        auto [i, j] = ij(node);
        return {static_cast<double>(i) * spacing_[0], static_cast<double>(j) * spacing_[1]};
    }

    /// Interior node indices in storage order.
    std::span<const std::size_t> interior() const noexcept { return interior_; }

    /// Position of a node inside interior(), or npos for boundary nodes.
    std::size_t interior_slot(std::size_t node) const noexcept { return slot_[node]; }
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    std::span<const double> weights() const noexcept { return weights_; }
    double measure() const noexcept { return extents_[0] * (dim_ == 2 ? extents_[1] : 1.0); }
    double diameter() const noexcept {
        return std::hypot(extents_[0], dim_ == 2 ? extents_[1] : 0.0);
    }
    /// Quadrature weight of an interior node (product of spacings).
    double cell_volume() const noexcept { return spacing_[0] * (dim_ == 2 ? spacing_[1] : 1.0); }

    // Faces along `axis` join node n to n + stride(axis).
    std::size_t face_count(int axis) const noexcept {
        if (axis >= dim_) return 0;
        return axis == 0 ? static_cast<std::size_t>(cells_[0]) * nodes_along(1)
                         : nodes_along(0) * static_cast<std::size_t>(cells_[1]);
    }
    std::size_t face_lower_node(int axis, std::size_t face) const noexcept {
        if (axis == 0) {
            std::size_t nx = static_cast<std::size_t>(cells_[0]);
            return index(face % nx, face / nx);
        }
        return face;  // storage order of y-faces matches their lower node
    }
    double face_weight(int axis, std::size_t face) const noexcept { return face_weights_[axis][face]; }

    /// Faces above and below a node along an axis (node must be interior).
    std::pair<std::size_t, std::size_t> node_faces(int axis, std::size_t node) const noexcept {
        if (axis == 0) {
            auto [i, j] = ij(node);
            std::size_t plus = j * static_cast<std::size_t>(cells_[0]) + i;
            return {plus, plus - 1};
        }
        return {node, node - stride(1)};
    }

    bool operator==(const Grid& o) const noexcept {
        return dim_ == o.dim_ && extents_ == o.extents_ && cells_ == o.cells_;
    }

private:
    Grid() = default;

    void finalize() {
        if (dim_ == 1) {
            extents_[1] = 0.0;
            cells_[1] = 0;
            spacing_[1] = 1.0;
        }
        const std::size_t n = node_count();
        weights_.assign(n, 0.0);
        is_interior_.assign(n, false);
        slot_.assign(n, npos);
        for (std::size_t node = 0; node < n; ++node) {
            auto [i, j] = ij(node);
            double w = spacing_[0] * ((i == 0 || i + 1 == nodes_along(0)) ? 0.5 : 1.0);
            bool interior = i > 0 && i + 1 < nodes_along(0);
            if (dim_ == 2) {
                bool edge = j == 0 || j + 1 == nodes_along(1);
                w *= spacing_[1] * (edge ? 0.5 : 1.0);
                interior = interior && !edge;
            }
            weights_[node] = w;
            if (interior) {
                is_interior_[node] = true;
                slot_[node] = interior_.size();
                interior_.push_back(node);
            }
        }
        for (int a = 0; a < dim_; ++a) {
            auto& fw = face_weights_[a];
            fw.assign(face_count(a), 0.0);
            for (std::size_t f = 0; f < fw.size(); ++f) {
                double w = cell_volume();
                if (dim_ == 2) {
                    // Faces lying on the boundary lines parallel to `axis`
                    // carry half a cell, as in the trapezoid rule.
                    auto [i, j] = ij(face_lower_node(a, f));
                    std::size_t across = a == 0 ? j : i;
                    std::size_t last = a == 0 ? nodes_along(1) - 1 : nodes_along(0) - 1;
                    if (across == 0 || across == last) w *= 0.5;
                }
                fw[f] = w;
            }
        }
    }

    int dim_ = 1;
    std::array<double, 2> extents_{};
    std::array<int, 2> cells_{};
    std::array<double, 2> spacing_{};
    std::vector<double> weights_;
    std::vector<bool> is_interior_;
    std::vector<std::size_t> interior_;
    std::vector<std::size_t> slot_;
    std::array<std::vector<double>, 2> face_weights_;
};

using GridPtr = std::shared_ptr<const Grid>;

/// Convenience wrapper matching the functional constructor signature.
inline GridPtr build_grid(int dim, std::span<const double> extents, std::span<const int> cells) {
    return Grid::build(dim, extents, cells);
}

/// Nodal scalar field on a grid (boundary ring included).
class Field {
public:
    Field() = default;
    explicit Field(GridPtr grid) : grid_(std::move(grid)), values_(grid_->node_count(), 0.0) {}
    Field(GridPtr grid, std::vector<double> values) : grid_(std::move(grid)), values_(std::move(values)) {
        if (values_.size() != grid_->node_count()) {
            throw InvalidArgument("field size does not match grid node count");
        }
    }

    static Field zeros(GridPtr grid) { return Field(std::move(grid)); }

    /// Samples fn at every node, boundary included.
    static Field sample(GridPtr grid, const std::function<double(double, double)>& fn) {
        Field out(grid);
        for (std::size_t n = 0; n < grid->node_count(); ++n) {
            auto [x, y] = grid->coords(n);
            out.values_[n] = fn(x, y);
        }
        return out;
    }

    /// Samples fn at interior nodes; boundary values are zero.
    static Field sample_interior(GridPtr grid, const std::function<double(double, double)>& fn) {
        Field out(grid);
        for (std::size_t n : grid->interior()) {
            auto [x, y] = grid->coords(n);
            out.values_[n] = fn(x, y);
        }
        return out;
    }

    const Grid& grid() const { return *grid_; }
    const GridPtr& grid_ptr() const noexcept { return grid_; }
    std::size_t size() const noexcept { return values_.size(); }
    double operator[](std::size_t n) const { return values_[n]; }
    double& operator[](std::size_t n) { return values_[n]; }
    std::span<const double> values() const noexcept { return values_; }
    std::span<double> values() noexcept { return values_; }

    bool same_grid(const Field& o) const noexcept {
        return grid_ == o.grid_ || (grid_ && o.grid_ && *grid_ == *o.grid_);
    }
    void require_same_grid(const Field& o) const {
        if (!same_grid(o)) throw GridMismatch();
    }

    template <class Fn>
    Field map(Fn&& fn) const {
        Field out(grid_);
        for (std::size_t n = 0; n < values_.size(); ++n) out.values_[n] = fn(values_[n]);
        return out;
    }

    Field scaled(double s) const {
        return map([s](double v) { return s * v; });
    }

    double max_abs() const noexcept {
        double m = 0.0;
        for (double v : values_) m = std::max(m, std::abs(v));
        return m;
    }
    double min_value() const noexcept {
        return values_.empty() ? 0.0 : *std::min_element(values_.begin(), values_.end());
    }

    /// Resets the boundary ring to zero.
    void clear_boundary() {
        for (std::size_t n = 0; n < values_.size(); ++n) {
            if (grid_->on_boundary(n)) values_[n] = 0.0;
        }
    }

private:
    GridPtr grid_;
    std::vector<double> values_;
};

/// Samples on cell faces, one array per axis (see Grid::face_lower_node).
struct FaceField {
    std::array<std::vector<double>, 2> axis;
};

inline double integrate(const Grid& grid, const Field& f) {
    if (!(f.grid() == grid)) throw GridMismatch();
    auto w = grid.weights();
    double s = 0.0;
    for (std::size_t n = 0; n < w.size(); ++n) s += w[n] * f[n];
    return s;
}

inline double integrate(const Field& f) { return integrate(f.grid(), f); }

/// Quadrature of g(f(x)) without materializing the intermediate field.
template <class Fn>
double integrate_map(const Field& f, Fn&& g) {
    auto w = f.grid().weights();
    double s = 0.0;
    for (std::size_t n = 0; n < w.size(); ++n) {
        if (w[n] != 0.0) s += w[n] * g(f[n]);
    }
    return s;
}

inline double lq_norm(const Field& f, double q) {
    if (!(q >= 1.0)) throw InvalidArgument("L^q norm needs q >= 1");
    double s = integrate_map(f, [q](double v) { return std::pow(std::abs(v), q); });
    return std::pow(s, 1.0 / q);
}

inline double lq_norm(const Grid& grid, const Field& f, double q) {
    if (!(f.grid() == grid)) throw GridMismatch();
    return lq_norm(f, q);
}

/// Two-point differences on every face; uses whatever boundary values f holds.
inline FaceField gradient(const Field& f) {
    const Grid& g = f.grid();
    FaceField out;
    for (int a = 0; a < g.dim(); ++a) {
        auto& ax = out.axis[a];
        ax.resize(g.face_count(a));
        const double inv_h = 1.0 / g.spacing(a);
        const std::size_t s = g.stride(a);
        for (std::size_t face = 0; face < ax.size(); ++face) {
            std::size_t lo = g.face_lower_node(a, face);
            ax[face] = (f[lo + s] - f[lo]) * inv_h;
        }
    }
    return out;
}

inline FaceField gradient(const Grid& grid, const Field& f) {
    if (!(f.grid() == grid)) throw GridMismatch();
    return gradient(f);
}

/// Discrete divergence at interior nodes; the boundary ring is zero. Adjoint
/// of -gradient under the node and face quadratures for fields vanishing on
/// the boundary.
inline Field divergence(const GridPtr& grid, const FaceField& flux) {
    const Grid& g = *grid;
    Field out(grid);
    for (int a = 0; a < g.dim(); ++a) {
        const auto& ax = flux.axis[a];
        const double inv_h = 1.0 / g.spacing(a);
        for (std::size_t n : g.interior()) {
            auto [plus, minus] = g.node_faces(a, n);
            out[n] += (ax[plus] - ax[minus]) * inv_h;
        }
    }
    return out;
}

/// Face quadrature of a*b summed over axes.
inline double face_inner(const Grid& g, const FaceField& a, const FaceField& b) {
    double s = 0.0;
    for (int ax = 0; ax < g.dim(); ++ax) {
        for (std::size_t f = 0; f < a.axis[ax].size(); ++f) {
            s += g.face_weight(ax, f) * a.axis[ax][f] * b.axis[ax][f];
        }
    }
    return s;
}

/// Face quadrature of |g|^p; each face carries one gradient component.
inline double face_power_sum(const Grid& g, const FaceField& grad, double p) {
    double s = 0.0;
    for (int ax = 0; ax < g.dim(); ++ax) {
        for (std::size_t f = 0; f < grad.axis[ax].size(); ++f) {
            double v = std::abs(grad.axis[ax][f]);
            if (v != 0.0) s += g.face_weight(ax, f) * (p == 2.0 ? v * v : std::pow(v, p));
        }
    }
    return s;
}

/// Node-quadrature inner product.
inline double inner(const Field& a, const Field& b) {
    a.require_same_grid(b);
    auto w = a.grid().weights();
    double s = 0.0;
    for (std::size_t n = 0; n < w.size(); ++n) s += w[n] * a[n] * b[n];
    return s;
}

// ---------------------------------------------------------------------------
// Serialization

/// One row per node: coordinates then value.
inline void write_csv(std::ostream& os, const Field& f) {
    const Grid& g = f.grid();
    os << (g.dim() == 1 ? "x,value\n" : "x,y,value\n");
    os.precision(17);
    for (std::size_t n = 0; n < f.size(); ++n) {
        auto [x, y] = g.coords(n);
        os << x << ',';
        if (g.dim() == 2) os << y << ',';
        os << f[n] << '\n';
    }
}

namespace detail {
inline void put_u64_le(std::ostream& os, std::uint64_t v) {
    char buf[8];
    for (int b = 0; b < 8; ++b) buf[b] = static_cast<char>((v >> (8 * b)) & 0xffu);
    os.write(buf, 8);
}
inline std::uint64_t get_u64_le(std::istream& is) {
    unsigned char buf[8];
    if (!is.read(reinterpret_cast<char*>(buf), 8)) throw InvalidArgument("truncated field dump");
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(buf[b]) << (8 * b);
    return v;
}
}  // namespace detail

/// Binary dump: dim, n_cells[dim] as little-endian int64, extents[dim] as
/// little-endian float64, then every node value as little-endian float64.
inline void write_binary(std::ostream& os, const Field& f) {
    const Grid& g = f.grid();
    detail::put_u64_le(os, static_cast<std::uint64_t>(g.dim()));
    for (int a = 0; a < g.dim(); ++a) detail::put_u64_le(os, static_cast<std::uint64_t>(g.cells(a)));
    for (int a = 0; a < g.dim(); ++a) detail::put_u64_le(os, std::bit_cast<std::uint64_t>(g.extent(a)));
    for (double v : f.values()) detail::put_u64_le(os, std::bit_cast<std::uint64_t>(v));
}

inline Field read_binary(std::istream& is) {
    auto dim = static_cast<int>(detail::get_u64_le(is));
    if (dim != 1 && dim != 2) throw InvalidArgument("field dump has invalid dimension");
    std::vector<int> cells(dim);
    std::vector<double> extents(dim);
    for (auto& c : cells) c = static_cast<int>(detail::get_u64_le(is));
    for (auto& e : extents) e = std::bit_cast<double>(detail::get_u64_le(is));
    auto grid = Grid::build(dim, extents, cells);
    std::vector<double> values(grid->node_count());
    for (auto& v : values) v = std::bit_cast<double>(detail::get_u64_le(is));
    return Field(grid, std::move(values));
}

}  // namespace pmwell
