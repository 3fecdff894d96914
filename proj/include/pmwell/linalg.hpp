#pragma once

// Linear solves on interior unknowns: the Dirichlet Laplacian used as a
// Sobolev preconditioner, and the lagged-coefficient diffusion system of the
// semi-implicit step. 1D systems are tridiagonal and solved directly; 2D
// systems go through Eigen's sparse factorizations.

#include <pmwell/error.hpp>
#include <pmwell/mesh.hpp>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <cmath>
#include <memory>
#include <vector>

namespace pmwell {

namespace detail {

/// Solves a tridiagonal system without pivoting (sub, diag, super, rhs are
/// overwritten). Safe for column diagonally dominant M-matrices.
inline void thomas(std::vector<double>& sub, std::vector<double>& diag, std::vector<double>& super,
                   std::vector<double>& rhs) {
    const std::size_t n = diag.size();
    for (std::size_t i = 1; i < n; ++i) {
        if (diag[i - 1] == 0.0) throw LinearSolveFailure("zero pivot in tridiagonal solve");
        const double w = sub[i] / diag[i - 1];
        diag[i] -= w * super[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    if (diag[n - 1] == 0.0) throw LinearSolveFailure("zero pivot in tridiagonal solve");
    rhs[n - 1] /= diag[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) rhs[i] = (rhs[i] - super[i] * rhs[i + 1]) / diag[i];
    for (double v : rhs) {
        if (!std::isfinite(v)) throw LinearSolveFailure("non-finite value in tridiagonal solve");
    }
}

}  // namespace detail

/// -Delta_h with homogeneous Dirichlet data, factorized once.
class DirichletLaplacian {
public:
    explicit DirichletLaplacian(GridPtr grid) : grid_(std::move(grid)) {
        if (grid_->dim() == 2) {
            const auto& g = *grid_;
            const std::size_t n = g.interior_count();
            std::vector<Eigen::Triplet<double>> trip;
            trip.reserve(5 * n);
            for (std::size_t k = 0; k < n; ++k) {
                const std::size_t node = g.interior()[k];
                double diag = 0.0;
                for (int a = 0; a < 2; ++a) {
                    const double ih2 = 1.0 / (g.spacing(a) * g.spacing(a));
                    diag += 2.0 * ih2;
                    for (std::size_t nb : {node + g.stride(a), node - g.stride(a)}) {
                        std::size_t s = g.interior_slot(nb);
                        if (s != Grid::npos) trip.emplace_back(static_cast<int>(k), static_cast<int>(s), -ih2);
                    }
                }
                trip.emplace_back(static_cast<int>(k), static_cast<int>(k), diag);
            }
            Eigen::SparseMatrix<double> A(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
            A.setFromTriplets(trip.begin(), trip.end());
            llt_ = std::make_shared<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>(A);
            if (llt_->info() != Eigen::Success) throw LinearSolveFailure("Laplacian factorization failed");
        }
    }

    const GridPtr& grid() const noexcept { return grid_; }

    /// x with -Delta_h x = rhs at interior nodes; boundary of x is zero.
    Field solve(const Field& rhs) const {
        const Grid& g = *grid_;
        const std::size_t n = g.interior_count();
        Field out(grid_);
        if (g.dim() == 1) {
            const double ih2 = 1.0 / (g.spacing(0) * g.spacing(0));
            std::vector<double> sub(n, -ih2), diag(n, 2.0 * ih2), super(n, -ih2), b(n);
            for (std::size_t k = 0; k < n; ++k) b[k] = rhs[g.interior()[k]];
            detail::thomas(sub, diag, super, b);
            for (std::size_t k = 0; k < n; ++k) out[g.interior()[k]] = b[k];
            return out;
        }
        Eigen::VectorXd b(static_cast<Eigen::Index>(n));
        for (std::size_t k = 0; k < n; ++k) b[static_cast<Eigen::Index>(k)] = rhs[g.interior()[k]];
        Eigen::VectorXd x = llt_->solve(b);
        for (std::size_t k = 0; k < n; ++k) out[g.interior()[k]] = x[static_cast<Eigen::Index>(k)];
        return out;
    }

private:
    GridPtr grid_;
    std::shared_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> llt_;
};

/// Solves  x/dt - div(coef * grad(b x)) = rhs  on interior nodes with x = 0
/// on the boundary. coef lives on faces, b on nodes (both nonnegative). The
/// matrix is a column diagonally dominant M-matrix, so a nonnegative rhs
/// gives a nonnegative solution.
inline Field solve_lagged_diffusion(const GridPtr& grid, const FaceField& coef, const Field& b, double dt,
                                    const Field& rhs) {
    const Grid& g = *grid;
    const std::size_t n = g.interior_count();
    const double inv_dt = 1.0 / dt;
    Field out(grid);
    if (g.dim() == 1) {
        const double ih2 = 1.0 / (g.spacing(0) * g.spacing(0));
        std::vector<double> sub(n, 0.0), diag(n, inv_dt), super(n, 0.0), r(n);
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t node = g.interior()[k];
            const auto [fp, fm] = g.node_faces(0, node);
            const double cp = coef.axis[0][fp] * ih2;
            const double cm = coef.axis[0][fm] * ih2;
            diag[k] += (cp + cm) * b[node];
            if (k + 1 < n) super[k] = -cp * b[node + 1];
            if (k > 0) sub[k] = -cm * b[node - 1];
            r[k] = rhs[node];
        }
        detail::thomas(sub, diag, super, r);
        for (std::size_t k = 0; k < n; ++k) out[g.interior()[k]] = r[k];
        return out;
    }
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(5 * n);
    Eigen::VectorXd r(static_cast<Eigen::Index>(n));
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t node = g.interior()[k];
        double diag = inv_dt;
        for (int a = 0; a < 2; ++a) {
            const double ih2 = 1.0 / (g.spacing(a) * g.spacing(a));
            const auto [fp, fm] = g.node_faces(a, node);
            const double cp = coef.axis[a][fp] * ih2;
            const double cm = coef.axis[a][fm] * ih2;
            diag += (cp + cm) * b[node];
            const std::size_t up = node + g.stride(a);
            const std::size_t dn = node - g.stride(a);
            if (auto s = g.interior_slot(up); s != Grid::npos) {
                trip.emplace_back(static_cast<int>(k), static_cast<int>(s), -cp * b[up]);
            }
            if (auto s = g.interior_slot(dn); s != Grid::npos) {
                trip.emplace_back(static_cast<int>(k), static_cast<int>(s), -cm * b[dn]);
            }
        }
        trip.emplace_back(static_cast<int>(k), static_cast<int>(k), diag);
        r[static_cast<Eigen::Index>(k)] = rhs[node];
    }
    Eigen::SparseMatrix<double> A(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    A.setFromTriplets(trip.begin(), trip.end());
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(A);
    if (lu.info() != Eigen::Success) throw LinearSolveFailure("sparse LU factorization failed");
    Eigen::VectorXd x = lu.solve(r);
    if (lu.info() != Eigen::Success || !x.allFinite()) throw LinearSolveFailure("sparse LU solve failed");
    for (std::size_t k = 0; k < n; ++k) out[g.interior()[k]] = x[static_cast<Eigen::Index>(k)];
    return out;
}

}  // namespace pmwell
