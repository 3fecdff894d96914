#pragma once

// Discrete doubly nonlinear operator div(|grad u^m|^{p-2} grad u^m) and the
// energy J, the Nehari functional I and its delta-family I_delta.
//
// The operator is the exact first variation of the discrete gradient energy
// (1/p) sum_faces w_f |D_f u^m|^p, so
//     <-p_laplacian_m(u), u^m> = ||grad u^m||_p^p
// holds to roundoff on every grid.

#include <pmwell/mesh.hpp>
#include <pmwell/nonlinearity.hpp>

#include <cmath>
#include <ostream>

namespace pmwell {

struct EnergyReport {
    double J = 0.0;
    double I = 0.0;
    double grad_pm_norm = 0.0;    // ||grad u^m||_{L^p}^p
    double source_pairing = 0.0;  // int u^m f(u)
    double potential = 0.0;       // int (F(u) - sigma)
    double mass_m1 = 0.0;         // int u^{m+1}
};

/// u^m nodewise. Negative entries are treated as zero.
inline Field power_field(const Field& u, double m) {
    if (m == 1.0) return u.map([](double v) { return v > 0.0 ? v : 0.0; });
    if (m == 2.0) return u.map([](double v) { return v > 0.0 ? v * v : 0.0; });
    return u.map([m](double v) { return v > 0.0 ? std::pow(v, m) : 0.0; });
}

/// Face fluxes (|g|^2 + eps^2)^{(p-2)/2} g for a face gradient g.
inline FaceField p_flux(const Grid& grid, FaceField g, double p, double eps_reg) {
    if (p == 2.0) return g;
    const double e2 = eps_reg * eps_reg;
    const double half = 0.5 * (p - 2.0);
    for (int a = 0; a < grid.dim(); ++a) {
        for (double& v : g.axis[a]) v *= std::pow(v * v + e2, half);
    }
    return g;
}

/// div(|grad u^m|^{p-2} grad u^m) at interior nodes, zero on the boundary.
inline Field p_laplacian_m(const Field& u, double m, double p, double eps_reg = 0.0) {
    const Grid& g = u.grid();
    return divergence(u.grid_ptr(), p_flux(g, gradient(power_field(u, m)), p, eps_reg));
}

inline Field p_laplacian_m(const Grid& grid, const Field& u, double m, double p, double eps_reg) {
    if (!(u.grid() == grid)) throw GridMismatch();
    return p_laplacian_m(u, m, p, eps_reg);
}

inline double grad_pm_norm(const Field& u, double m, double p) {
    return face_power_sum(u.grid(), gradient(power_field(u, m)), p);
}

inline double source_pairing(const Field& u, const ProblemParams& prm) {
    const double m = prm.m;
    return integrate_map(u, [&](double v) {
        if (v <= 0.0) return 0.0;
        return (m == 1.0 ? v : std::pow(v, m)) * prm.f(v);
    });
}

/// int (F(u) - sigma) dx; the sigma part is exact, sigma |Omega|.
inline double potential_energy(const Field& u, const ProblemParams& prm) {
    return integrate_map(u, [&](double v) { return prm.F(std::max(v, 0.0)); }) -
           prm.sigma * u.grid().measure();
}

inline EnergyReport energy_report(const Field& u, const ProblemParams& prm) {
    EnergyReport r;
    r.grad_pm_norm = grad_pm_norm(u, prm.m, prm.p);
    r.source_pairing = source_pairing(u, prm);
    r.potential = potential_energy(u, prm);
    const double m1 = prm.m + 1.0;
    r.mass_m1 = integrate_map(u, [m1](double v) { return v > 0.0 ? std::pow(v, m1) : 0.0; });
    r.J = r.grad_pm_norm / prm.pm() - r.potential;
    r.I = r.grad_pm_norm - r.source_pairing;
    return r;
}

inline double energy_J(const Field& u, const ProblemParams& prm) {
    return grad_pm_norm(u, prm.m, prm.p) / prm.pm() - potential_energy(u, prm);
}

inline double nehari_I(const Field& u, const ProblemParams& prm) {
    return grad_pm_norm(u, prm.m, prm.p) - source_pairing(u, prm);
}

inline double nehari_I_delta(const Field& u, const ProblemParams& prm, double delta) {
    if (!(delta > 0.0)) throw InvalidArgument("I_delta needs delta > 0");
    return delta * grad_pm_norm(u, prm.m, prm.p) - source_pairing(u, prm);
}

/// Nodal (quadrature-weighted L2) gradient of J: u^{m-1} (-Delta_p u^m - f(u)).
inline Field energy_gradient(const Field& u, const ProblemParams& prm) {
    Field lap = p_laplacian_m(u, prm.m, prm.p);
    Field out(u.grid_ptr());
    for (std::size_t n : u.grid().interior()) {
        const double v = std::max(u[n], 0.0);
        const double w = prm.m == 1.0 ? 1.0 : std::pow(v, prm.m - 1.0);
        out[n] = w * (-lap[n] - prm.f(v));
    }
    return out;
}

/// Nodal gradient of I_delta:
/// delta p m u^{m-1} (-Delta_p u^m) - (m u^{m-1} f(u) + u^m f'(u)).
inline Field nehari_delta_gradient(const Field& u, const ProblemParams& prm, double delta) {
    Field lap = p_laplacian_m(u, prm.m, prm.p);
    Field out(u.grid_ptr());
    const double m = prm.m;
    for (std::size_t n : u.grid().interior()) {
        const double v = std::max(u[n], 0.0);
        const double vm1 = m == 1.0 ? 1.0 : std::pow(v, m - 1.0);
        out[n] = delta * prm.p * m * vm1 * (-lap[n]) - (m * vm1 * prm.f(v) + vm1 * v * prm.source.df(v));
    }
    return out;
}

/// "J,I,grad_pm_norm,source_pairing,potential,mass_m1" preceded by t.
inline void write_report_header(std::ostream& os) {
    os << "t,J,I,grad_pm_norm,source_pairing,potential,mass_m1\n";
}

inline void write_report_row(std::ostream& os, double t, const EnergyReport& r) {
    os << t << ',' << r.J << ',' << r.I << ',' << r.grad_pm_norm << ',' << r.source_pairing << ','
       << r.potential << ',' << r.mass_m1 << '\n';
}

}  // namespace pmwell
