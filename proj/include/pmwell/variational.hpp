#pragma once

// Constrained minimizations behind the potential-well construction: the
// first p-Laplace eigenvalue, the embedding constant C_*, the fibering scale
// onto {I_delta = 0}, and the well depth d(delta).
//
// All three minimizations are functionals on rays (homogeneous of degree 0
// after normalization) and share one descent loop, preconditioned by the
// inverse Dirichlet Laplacian so that iteration counts do not grow with
// resolution.

#include <pmwell/error.hpp>
#include <pmwell/linalg.hpp>
#include <pmwell/mesh.hpp>
#include <pmwell/nonlinearity.hpp>
#include <pmwell/operators.hpp>

#include <boost/math/tools/toms748_solve.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <future>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <vector>

namespace pmwell {

// ---------------------------------------------------------------------------
// Ray descent

struct DescentOptions {
    double tol = 1e-10;        // relative change of the objective between accepted steps
    int max_iter = 2000;
    double tau0 = 0.5;
    double tau_max = 1e6;
    double abs_floor = 1e-300;  // floor for the relative-change denominator
};

struct DescentResult {
    Field field;
    double value = 0.0;
    double residual = 0.0;  // preconditioned gradient norm over |value|
    int iterations = 0;
    bool converged = false;
};

/// Minimizes obj over nonnegative fields with zero boundary. Obj provides
/// value(u), gradient(u) (quadrature-weighted nodal gradient) and
/// normalize(u&). Steps are u - tau L^{-1} grad, clipped at zero, with
/// Armijo backtracking.
template <class Obj>
DescentResult ray_descent(Field u, const DirichletLaplacian& L, const Obj& obj, const DescentOptions& opt) {
    obj.normalize(u);
    DescentResult out;
    double val = obj.value(u);
    double tau = opt.tau0;
    int quiet = 0;
    int it = 0;
    for (; it < opt.max_iter; ++it) {
        const Field g = obj.gradient(u);
        const Field d = L.solve(g);
        const double slope = inner(g, d);
        out.residual = std::sqrt(std::max(slope, 0.0)) / std::max(std::abs(val), opt.abs_floor);
        if (!(slope > 0.0)) {
            out.converged = true;
            break;
        }
        Field trial = u;
        double tv = val;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            for (std::size_t n : u.grid().interior()) trial[n] = std::max(u[n] - tau * d[n], 0.0);
            obj.normalize(trial);
            tv = obj.value(trial);
            if (tv <= val - 1e-4 * tau * slope) {
                accepted = true;
                break;
            }
            tau *= 0.5;
        }
        if (!accepted) {
            // no decrease left at working precision
            out.converged = true;
            break;
        }
        const double change = val - tv;
        u = std::move(trial);
        val = tv;
        tau = std::min(2.0 * tau, opt.tau_max);
        if (change <= opt.tol * std::max(std::abs(val), opt.abs_floor)) {
            if (++quiet >= 2) {
                out.converged = true;
                ++it;
                break;
            }
        } else {
            quiet = 0;
        }
    }
    out.field = std::move(u);
    out.value = val;
    out.iterations = it;
    return out;
}

namespace detail {

inline double pos_pow(double v, double e) {
    if (v <= 0.0) return 0.0;
    if (e == 1.0) return v;
    if (e == 2.0) return v * v;
    return std::pow(v, e);
}

inline void scale_to(Field& u, double target, double current) {
    if (current > 0.0 && std::isfinite(current)) {
        const double s = target / current;
        for (double& v : u.values()) v *= s;
    }
}

/// Product of first sine modes, zero on the boundary.
inline Field sine_bump(const GridPtr& grid) {
    const double L0 = grid->extent(0);
    const double L1 = grid->dim() == 2 ? grid->extent(1) : 0.0;
    return Field::sample_interior(grid, [&](double x, double y) {
        double v = std::sin(std::numbers::pi * x / L0);
        if (L1 > 0.0) v *= std::sin(std::numbers::pi * y / L1);
        return v;
    });
}

}  // namespace detail

/// Positive random start: sine bump times exp(sum_k c_k cos(k pi x / L)).
/// Deterministic in (seed, index).
inline Field random_positive_start(const GridPtr& grid, std::uint64_t seed, std::uint64_t index) {
    std::mt19937_64 rng(seed + 0x9e3779b97f4a7c15ULL * (index + 1));
    std::normal_distribution<double> nd(0.0, 1.0);
    constexpr int kModes = 4;
    std::array<std::array<double, kModes>, 2> c{};
    for (int a = 0; a < grid->dim(); ++a) {
        for (int k = 0; k < kModes; ++k) c[a][k] = 0.5 * nd(rng) / (k + 1);
    }
    Field base = detail::sine_bump(grid);
    Field out(grid);
    for (std::size_t n : grid->interior()) {
        auto x = grid->coords(n);
        double s = 0.0;
        for (int a = 0; a < grid->dim(); ++a) {
            for (int k = 0; k < kModes; ++k) s += c[a][k] * std::cos((k + 1) * std::numbers::pi * x[a] / grid->extent(a));
        }
        out[n] = base[n] * std::exp(s);
    }
    return out;
}

/// Runs job(i) for i in [0, count) on up to `workers` threads and returns the
/// results in index order.
template <class Job>
auto run_indexed(int count, int workers, Job&& job) -> std::vector<decltype(job(0))> {
    using R = decltype(job(0));
    std::vector<std::optional<R>> slots(static_cast<std::size_t>(count));
    workers = std::max(1, workers);
    for (int base = 0; base < count; base += workers) {
        std::vector<std::future<R>> batch;
        const int hi = std::min(count, base + workers);
        for (int i = base + 1; i < hi; ++i) batch.push_back(std::async(std::launch::async, job, i));
        slots[base].emplace(job(base));
        for (int i = base + 1; i < hi; ++i) slots[i].emplace(batch[i - base - 1].get());
    }
    std::vector<R> out;
    out.reserve(slots.size());
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

// ---------------------------------------------------------------------------
// First eigenvalue

struct EigenResult {
    double lambda1p = 0.0;
    Field eigenfield;  // positive, ||w||_{L^p} = 1
    double residual = 0.0;
    int iterations = 0;
};

namespace detail {

struct RayleighObjective {
    double p;
    double value(const Field& v) const {
        return face_power_sum(v.grid(), pmwell::gradient(v), p) / integrate_map(v, [this](double x) { return pos_pow(x, p); });
    }
    Field gradient(const Field& v) const {
        const double A = face_power_sum(v.grid(), pmwell::gradient(v), p);
        const double B = integrate_map(v, [this](double x) { return pos_pow(x, p); });
        const double R = A / B;
        Field lap = p_laplacian_m(v, 1.0, p);
        Field g(v.grid_ptr());
        for (std::size_t n : v.grid().interior()) g[n] = p / B * (-lap[n] - R * pos_pow(v[n], p - 1.0));
        return g;
    }
    void normalize(Field& v) const { scale_to(v, 1.0, lq_norm(v, p)); }
};

}  // namespace detail

/// lambda_{1,p} = inf ||grad v||_p^p / ||v||_p^p by normalized descent.
/// Throws NonConvergence<EigenResult> after max_iter iterations.
inline EigenResult first_eigen_p(const GridPtr& grid, double p, double tol = 1e-10, int max_iter = 5000) {
    if (!(p >= 2.0)) throw InvalidArgument("first_eigen_p needs p >= 2");
    DirichletLaplacian L(grid);
    detail::RayleighObjective obj{p};
    DescentOptions opt;
    opt.tol = tol;
    opt.max_iter = max_iter;
    auto r = ray_descent(detail::sine_bump(grid), L, obj, opt);
    EigenResult out{obj.value(r.field), std::move(r.field), r.residual, r.iterations};
    if (!r.converged) throw NonConvergence<EigenResult>("first eigenvalue iteration did not converge", out, r.residual);
    return out;
}

// ---------------------------------------------------------------------------
// Embedding constant

struct EmbeddingResult {
    double C_star = 0.0;
    Field maximizer;
    bool converged = false;
};

struct SearchOptions {
    int starts = 8;
    std::uint64_t seed = 0;
    int workers = 1;
    double tol = 1e-12;
    int max_iter = 3000;
};

namespace detail {

/// (1/p) log ||grad v||_p^p - (1/gamma) log ||v||_gamma^gamma.
struct EmbeddingObjective {
    double p;
    double gamma;
    double value(const Field& v) const {
        const double A = face_power_sum(v.grid(), pmwell::gradient(v), p);
        const double B = integrate_map(v, [this](double x) { return pos_pow(x, gamma); });
        if (!(A > 0.0) || !(B > 0.0)) return std::numeric_limits<double>::infinity();
        return std::log(A) / p - std::log(B) / gamma;
    }
    Field gradient(const Field& v) const {
        const double A = face_power_sum(v.grid(), pmwell::gradient(v), p);
        const double B = integrate_map(v, [this](double x) { return pos_pow(x, gamma); });
        Field lap = p_laplacian_m(v, 1.0, p);
        Field g(v.grid_ptr());
        for (std::size_t n : v.grid().interior()) g[n] = -lap[n] / A - pos_pow(v[n], gamma - 1.0) / B;
        return g;
    }
    void normalize(Field& v) const { scale_to(v, 1.0, v.max_abs()); }
};

}  // namespace detail

/// ||v||_gamma / ||grad v||_p for a single candidate.
inline double embedding_ratio(const Field& v, double p, double gamma) {
    return lq_norm(v, gamma) / std::pow(face_power_sum(v.grid(), gradient(v), p), 1.0 / p);
}

/// C_* ~ sup ||v||_gamma / ||grad v||_p by multi-start ascent. The value is
/// the best ratio found, hence a lower bound on the true constant.
inline EmbeddingResult embedding_constant(const GridPtr& grid, double p, double gamma, const SearchOptions& so = {}) {
    if (!(gamma >= p)) throw InvalidArgument("embedding_constant needs gamma >= p");
    DirichletLaplacian L(grid);
    detail::EmbeddingObjective obj{p, gamma};
    DescentOptions opt;
    opt.tol = so.tol;
    opt.max_iter = so.max_iter;
    opt.abs_floor = 1.0;
    const int starts = std::max(1, so.starts);
    auto runs = run_indexed(starts, so.workers, [&](int i) {
        Field s = i == 0 ? detail::sine_bump(grid) : random_positive_start(grid, so.seed, static_cast<std::uint64_t>(i));
        return ray_descent(std::move(s), L, obj, opt);
    });
    std::size_t best = 0;
    for (std::size_t i = 1; i < runs.size(); ++i) {
        if (runs[i].value < runs[best].value) best = i;
    }
    EmbeddingResult out{embedding_ratio(runs[best].field, p, gamma), runs[best].field, runs[best].converged};
    return out;
}

// ---------------------------------------------------------------------------
// Fibering map and Nehari scale

/// phi(eps) = eps^{-m(p-1)} int u^m f(eps u).
inline double fibering_phi(const Field& u, const ProblemParams& prm, double eps) {
    if (!(eps > 0.0)) throw InvalidArgument("fibering_phi needs eps > 0");
    const double m = prm.m;
    const double s = integrate_map(u, [&](double v) { return v > 0.0 ? detail::pos_pow(v, m) * prm.f(eps * v) : 0.0; });
    return std::pow(eps, -m * (prm.p - 1.0)) * s;
}

/// The eps > 0 with I_delta(eps u) = 0. Since
/// I_delta(eps u) = eps^{pm} (delta ||grad u^m||_p^p - phi(eps)), the root is
/// bracketed by doubling from eps = 1 inside [1e-8, 1e8] and then refined to
/// relative accuracy 1e-10. Throws NoRoot with the observed sign of I_delta.
inline double nehari_scale(const Field& u, const ProblemParams& prm, double delta = 1.0) {
    if (!(delta > 0.0)) throw InvalidArgument("nehari_scale needs delta > 0");
    const double G = grad_pm_norm(u, prm.m, prm.p);
    if (!(G > 0.0)) throw InvalidArgument("nehari_scale needs a nonzero field");
    auto h = [&](double e) { return delta * G - fibering_phi(u, prm, e); };
    constexpr double kLo = 1e-8, kHi = 1e8;
    double a = 1.0, b = 1.0;
    double ha = h(1.0), hb = ha;
    if (ha == 0.0) return 1.0;
    if (ha > 0.0) {
        while (hb > 0.0) {
            a = b;
            ha = hb;
            if (b >= kHi) throw NoRoot("I_delta(eps u) stays positive on [1e-8, 1e8]", +1);
            b = std::min(2.0 * b, kHi);
            hb = h(b);
        }
    } else {
        while (ha < 0.0) {
            b = a;
            hb = ha;
            if (a <= kLo) throw NoRoot("I_delta(eps u) stays negative on [1e-8, 1e8]", -1);
            a = std::max(0.5 * a, kLo);
            ha = h(a);
        }
    }
    if (ha == 0.0) return a;
    if (hb == 0.0) return b;
    std::uintmax_t iters = 200;
    auto tol = [](double x, double y) { return std::abs(y - x) <= 1e-11 * std::min(std::abs(x), std::abs(y)); };
    auto r = boost::math::tools::toms748_solve(h, a, b, ha, hb, tol, iters);
    return 0.5 * (r.first + r.second);
}

/// Root of I(eps u) = 0.
inline double epsilon_star(const Field& u, const ProblemParams& prm) { return nehari_scale(u, prm, 1.0); }

// ---------------------------------------------------------------------------
// Well depth

namespace detail {

/// j(u) = J(eps_delta(u) u): J restricted to {I_delta = 0} along rays.
struct NehariObjective {
    const ProblemParams& prm;
    double delta;

    double value(const Field& u) const {
        try {
            const double e = nehari_scale(u, prm, delta);
            return energy_J(u.scaled(e), prm);
        } catch (const Error&) {
            return std::numeric_limits<double>::infinity();
        }
    }
    Field gradient(const Field& u) const {
        const double e = nehari_scale(u, prm, delta);
        const Field v = u.scaled(e);
        const Field gJ = energy_gradient(v, prm);
        const Field gI = nehari_delta_gradient(v, prm, delta);
        const double c = inner(gJ, v) / inner(gI, v);
        Field g(u.grid_ptr());
        for (std::size_t n : u.grid().interior()) g[n] = e * (gJ[n] - c * gI[n]);
        return g;
    }
    void normalize(Field& u) const { scale_to(u, 1.0, u.max_abs()); }
};

}  // namespace detail

struct WellDepthResult {
    double d = std::numeric_limits<double>::infinity();
    Field minimizer;  // on {I_delta = 0}
    Field direction;  // normalized ray direction
    bool converged = false;
    double residual = 0.0;
};

/// J(eps_delta(u) u) for one direction; an upper bound on d(delta).
inline double nehari_ray_energy(const Field& u, const ProblemParams& prm, double delta) {
    return energy_J(u.scaled(nehari_scale(u, prm, delta)), prm);
}

/// Multi-start minimization of J over {I_delta = 0}. Start 0 is the warm
/// start when given (else the sine bump); starts 1.. are random positive
/// fields. The reduction is the minimum by (value, start index), so the result
/// does not depend on the worker count.
inline WellDepthResult well_depth_search(const GridPtr& grid, const ProblemParams& prm, double delta,
                                         const SearchOptions& so = {}, const Field* warm = nullptr,
                                         const DirichletLaplacian* precond = nullptr) {
    if (!(delta > 0.0)) throw InvalidArgument("well_depth needs delta > 0");
    std::optional<DirichletLaplacian> own;
    if (!precond) precond = &own.emplace(grid);
    detail::NehariObjective obj{prm, delta};
    DescentOptions opt;
    opt.tol = so.tol;
    opt.max_iter = so.max_iter;
    const int starts = std::max(1, so.starts);
    auto runs = run_indexed(starts, so.workers, [&](int i) {
        Field s = i == 0 ? (warm ? *warm : detail::sine_bump(grid))
                         : random_positive_start(grid, so.seed, static_cast<std::uint64_t>(i));
        return ray_descent(std::move(s), *precond, obj, opt);
    });
    std::size_t best = 0;
    for (std::size_t i = 1; i < runs.size(); ++i) {
        if (runs[i].value < runs[best].value) best = i;
    }
    WellDepthResult out;
    auto& r = runs[best];
    if (!std::isfinite(r.value)) throw NoRoot("no start reached the Nehari set", +1);
    out.d = r.value;
    out.direction = r.field;
    out.minimizer = r.field.scaled(nehari_scale(r.field, prm, delta));
    out.converged = r.converged;
    out.residual = r.residual;
    return out;
}

/// d(delta). Throws NonConvergence<double> carrying the best value (still an
/// upper bound) when the winning start did not converge.
inline double well_depth(const GridPtr& grid, const ProblemParams& prm, double delta, int starts, double tol,
                         std::uint64_t seed = 0) {
    SearchOptions so;
    so.starts = starts;
    so.tol = tol;
    so.seed = seed;
    auto r = well_depth_search(grid, prm, delta, so);
    if (!r.converged) throw NonConvergence<double>("well depth search did not converge", r.d, r.residual);
    return r.d;
}

// ---------------------------------------------------------------------------
// Closed forms of the well construction

/// r(delta) = (delta / (a C_*^gamma))^{1/(gamma - p)}.
inline double r_delta(const ProblemParams& prm, double a_coef, double C_star, double delta) {
    if (!(prm.gamma > prm.p)) throw InvalidArgument("r_delta needs gamma > p");
    if (!(a_coef > 0.0) || !(C_star > 0.0)) throw InvalidArgument("r_delta needs a > 0 and C_* > 0");
    return std::pow(delta / (a_coef * std::pow(C_star, prm.gamma)), 1.0 / (prm.gamma - prm.p));
}

/// a(delta) = 1/(pm) - delta/alpha - beta/(lambda_{1,p} alpha).
inline double a_delta(const ProblemParams& prm, double delta) {
    if (!prm.lambda1p) throw InvalidArgument("a_delta needs lambda1p");
    return 1.0 / prm.pm() - delta / prm.alpha - prm.beta / (*prm.lambda1p * prm.alpha);
}

/// Right end alpha/(pm) - beta/lambda_{1,p} of the range where a(delta) > 0
/// is asserted.
inline double a_positive_end(const ProblemParams& prm) {
    if (!prm.lambda1p) throw InvalidArgument("needs lambda1p");
    return prm.alpha / prm.pm() - prm.beta / *prm.lambda1p;
}

/// a = sup u^m f(u) / (u^m)^gamma over log-spaced samples in [1e-3 u_max, u_max].
inline double sample_a_coefficient(const ProblemParams& prm, double u_max, int n_samples = 2000) {
    double a = 0.0;
    for (double u : log_samples(u_max, std::max(n_samples, 2))) {
        const double um = detail::pos_pow(u, prm.m);
        a = std::max(a, um * prm.f(u) / std::pow(um, prm.gamma));
    }
    return a;
}

// ---------------------------------------------------------------------------
// Well profile

struct WellProfileOptions {
    int delta_points = 25;
    SearchOptions search;
    int embed_starts = 8;
    double a_u_max = 10.0;
    double zero_threshold = 1e-8;  // relative to d_peak, for locating b
};

struct WellProfile {
    std::vector<double> delta_grid;
    std::vector<double> d_values;
    std::vector<double> r_values;
    std::vector<double> a_values;
    std::vector<double> lower_bounds;  // a(delta) r(delta)^p
    std::vector<bool> converged;
    double d_peak = 0.0;
    double b_est = 0.0;
    bool b_at_upper = false;  // d stayed above threshold up to gamma/(pm)
    double lambda1p = 0.0;
    double C_star = 0.0;
    double a_coef = 0.0;
    Field peak_minimizer;
};

/// Zero of d(delta) inside [alpha/(pm) - beta/lambda, gamma/(pm)], by
/// bisection on the computed curve down to the threshold z.
template <class DFn>
std::pair<double, bool> locate_b(const ProblemParams& prm, double z, DFn&& d) {
    double lo = a_positive_end(prm);
    double hi = prm.gamma / prm.pm();
    if (d(hi) > z) return {hi, true};
    if (d(lo) <= z) return {lo, false};
    while (hi - lo > 1e-7 * hi) {
        const double mid = 0.5 * (lo + hi);
        (d(mid) > z ? lo : hi) = mid;
    }
    return {0.5 * (lo + hi), false};
}

/// Computes lambda_{1,p} and C_* on the grid, the peak d = d(1), the zero b
/// of d(delta), and d on delta_i = b i / (N + 1), i = 1..N.
inline WellProfile well_profile(const GridPtr& grid, ProblemParams prm, const WellProfileOptions& wo = {}) {
    WellProfile wp;
    wp.lambda1p = first_eigen_p(grid, prm.p).lambda1p;
    prm.lambda1p = wp.lambda1p;
    SearchOptions es = wo.search;
    es.starts = wo.embed_starts;
    wp.C_star = embedding_constant(grid, prm.p, prm.gamma, es).C_star;
    wp.a_coef = sample_a_coefficient(prm, wo.a_u_max);

    DirichletLaplacian L(grid);
    auto peak = well_depth_search(grid, prm, 1.0, wo.search, nullptr, &L);
    wp.d_peak = peak.d;
    wp.peak_minimizer = peak.minimizer;
    const Field warm = peak.direction;

    SearchOptions quick = wo.search;
    quick.starts = 1;
    auto [b, capped] = locate_b(prm, wo.zero_threshold * wp.d_peak, [&](double delta) {
        return well_depth_search(grid, prm, delta, quick, &warm, &L).d;
    });
    wp.b_est = b;
    wp.b_at_upper = capped;

    const int N = wo.delta_points;
    for (int i = 1; i <= N; ++i) {
        const double delta = wp.b_est * i / (N + 1);
        auto r = well_depth_search(grid, prm, delta, wo.search, &warm, &L);
        const double rr = r_delta(prm, wp.a_coef, wp.C_star, delta);
        const double aa = a_delta(prm, delta);
        wp.delta_grid.push_back(delta);
        wp.d_values.push_back(r.d);
        wp.r_values.push_back(rr);
        wp.a_values.push_back(aa);
        wp.lower_bounds.push_back(aa * std::pow(rr, prm.p));
        wp.converged.push_back(r.converged);
    }
    return wp;
}

inline void write_profile_csv(std::ostream& os, const WellProfile& wp) {
    os << "delta,d,r,a,lower_bound\n";
    os.precision(17);
    for (std::size_t i = 0; i < wp.delta_grid.size(); ++i) {
        os << wp.delta_grid[i] << ',' << wp.d_values[i] << ',' << wp.r_values[i] << ',' << wp.a_values[i] << ','
           << wp.lower_bounds[i] << '\n';
    }
}

// ---------------------------------------------------------------------------
// Classification

enum class WellState { InW, InV, OnNehari, OutsideWells };

inline const char* to_string(WellState s) {
    switch (s) {
        case WellState::InW: return "InW";
        case WellState::InV: return "InV";
        case WellState::OnNehari: return "OnNehari";
        case WellState::OutsideWells: return "OutsideWells";
    }
    return "?";
}

inline double nehari_tolerance(const EnergyReport& r) { return 1e-8 * std::max(1.0, r.grad_pm_norm); }

inline WellState classify_state(const EnergyReport& r, double d, const ProblemParams&) {
    if (!(d > 0.0)) throw InvalidArgument("classify_state needs d > 0");
    if (r.grad_pm_norm == 0.0 && r.mass_m1 == 0.0) return WellState::InW;
    const double tol = nehari_tolerance(r);
    if (std::abs(r.I) <= tol) return WellState::OnNehari;
    if (r.J < d) return r.I > 0.0 ? WellState::InW : WellState::InV;
    return WellState::OutsideWells;
}

}  // namespace pmwell
