#pragma once

// Time integration of u_t = div(|grad u^m|^{p-2} grad u^m) + f(u) with zero
// Dirichlet data, and the trajectory diagnostics built on it: dissipation
// identity, blow-up functionals, concavity margins and decay fits.

#include <pmwell/error.hpp>
#include <pmwell/linalg.hpp>
#include <pmwell/mesh.hpp>
#include <pmwell/nonlinearity.hpp>
#include <pmwell/operators.hpp>
#include <pmwell/variational.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace pmwell {

enum class Scheme { SemiImplicit, Explicit };

struct StepperConfig {
    double dt_init = 1e-4;
    double dt_min = 1e-10;
    double dt_max = 1e-2;
    double t_end = 1.0;
    double blowup_norm_threshold = 1e8;
    double decay_norm_threshold = 1e-10;
    double eps_reg = -1.0;  // negative: 1e-8 / diameter
    Scheme scheme = Scheme::SemiImplicit;
    double picard_tol = 1e-12;
    int picard_max = 200;
    double energy_change_limit = 1e-2;  // max |dJ| per step relative to |J|
    double ep_offset = 1.0;             // M in E_p(t) = int_0^t int u^{m+1} + M
    long max_steps = 2'000'000;

    void validate() const {
        if (!(dt_min > 0.0 && dt_init > 0.0 && dt_max > 0.0 && t_end > 0.0)) {
            throw ConfigError("stepper times must be positive");
        }
        if (!(dt_min <= dt_init && dt_init <= dt_max)) throw ConfigError("stepper needs dt_min <= dt_init <= dt_max");
        if (!(picard_tol > 0.0) || picard_max < 1) throw ConfigError("picard_tol > 0 and picard_max >= 1 required");
    }

    double regularization(const Grid& g) const { return eps_reg >= 0.0 ? eps_reg : 1e-8 / g.diameter(); }
};

inline const char* to_string(Scheme s) { return s == Scheme::SemiImplicit ? "SemiImplicit" : "Explicit"; }

// ---------------------------------------------------------------------------
// One step

namespace detail {

inline Field source_field(const Field& u, const ProblemParams& prm) {
    Field out(u.grid_ptr());
    for (std::size_t n : u.grid().interior()) out[n] = prm.f(std::max(u[n], 0.0));
    return out;
}

inline void clip_negative(Field& u) {
    for (double& v : u.values()) v = std::max(v, 0.0);
    u.clear_boundary();
}

/// (|D w|^2 + eps^2)^{(p-2)/2} on faces of w = u^m.
inline FaceField lagged_coefficient(const Field& u, double m, double p, double eps) {
    const Grid& g = u.grid();
    FaceField c = gradient(power_field(u, m));
    const double e2 = eps * eps;
    for (int a = 0; a < g.dim(); ++a) {
        for (double& v : c.axis[a]) v = p == 2.0 ? 1.0 : std::pow(v * v + e2, 0.5 * (p - 2.0));
    }
    return c;
}

/// d/ds of s (s^2 + eps^2)^{(p-2)/2} at the faces of w = u^m.
inline FaceField flux_derivative(const Field& u, double m, double p, double eps) {
    const Grid& g = u.grid();
    FaceField c = gradient(power_field(u, m));
    const double e2 = eps * eps;
    for (int a = 0; a < g.dim(); ++a) {
        for (double& v : c.axis[a]) {
            if (p == 2.0) {
                v = 1.0;
                continue;
            }
            const double q = std::max(v * v + e2, std::numeric_limits<double>::min());
            v = std::pow(q, 0.5 * (p - 4.0)) * ((p - 1.0) * v * v + e2);
        }
    }
    return c;
}

}  // namespace detail

/// Advances u by dt. SemiImplicit solves
///   (u_new - u)/dt = div(coef(u_lag) grad(u_lag^{m-1} u_new)) + f(u)
/// once, then corrects with damped Newton on the fully implicit diffusion
///   (u_new - u)/dt = div(flux(u_new^m)) + f(u).
/// Throws PicardStall when the correction does not settle in picard_max
/// iterations.
inline Field step(const Field& u, const ProblemParams& prm, const StepperConfig& cfg, double dt) {
    const Grid& g = u.grid();
    const double eps = cfg.regularization(g);
    const Field src = detail::source_field(u, prm);
    if (cfg.scheme == Scheme::Explicit) {
        Field lap = p_laplacian_m(u, prm.m, prm.p, eps);
        Field out(u.grid_ptr());
        for (std::size_t n : g.interior()) out[n] = u[n] + dt * (lap[n] + src[n]);
        detail::clip_negative(out);
        return out;
    }
    Field rhs(u.grid_ptr());
    for (std::size_t n : g.interior()) rhs[n] = u[n] / dt + src[n];
    const bool linear = prm.m == 1.0 && prm.p == 2.0;
    // One lagged solve gives the starting guess; damped Newton on
    //   R(x) = x/dt - div(flux(x^m)) - rhs
    // finishes. The Jacobian has the lagged-diffusion form with coefficient
    // flux'(D x^m) and weight m x^{m-1}.
    const FaceField coef0 = detail::lagged_coefficient(u, prm.m, prm.p, eps);
    const Field b0 = prm.m == 1.0 ? Field::sample(u.grid_ptr(), [](double, double) { return 1.0; })
                                  : power_field(u, prm.m - 1.0);
    Field x = solve_lagged_diffusion(u.grid_ptr(), coef0, b0, dt, rhs);
    detail::clip_negative(x);
    if (linear) return x;

    auto residual = [&](const Field& v, double& norm) {
        Field r = p_laplacian_m(v, prm.m, prm.p, eps);
        norm = 0.0;
        for (std::size_t n : g.interior()) {
            r[n] = v[n] / dt - r[n] - rhs[n];
            norm = std::max(norm, std::abs(r[n]));
        }
        return r;
    };
    double rn = 0.0;
    Field r = residual(x, rn);
    double update = std::numeric_limits<double>::infinity();
    for (int k = 0; k < cfg.picard_max; ++k) {
        const double floor = 1e-14 * std::max(1.0, x.max_abs()) / dt;
        if (rn <= floor) return x;
        const FaceField jc = detail::flux_derivative(x, prm.m, prm.p, eps);
        Field b(u.grid_ptr());
        for (std::size_t n : g.interior()) b[n] = prm.m * detail::pos_pow(x[n], prm.m - 1.0);
        Field neg(u.grid_ptr());
        for (std::size_t n : g.interior()) neg[n] = -r[n];
        const Field d = solve_lagged_diffusion(u.grid_ptr(), jc, b, dt, neg);
        double lam = 1.0;
        bool accepted = false;
        for (int bt = 0; bt < 30; ++bt, lam *= 0.5) {
            Field trial = x;
            for (std::size_t n : g.interior()) trial[n] += lam * d[n];
            detail::clip_negative(trial);
            double tn = 0.0;
            Field tr = residual(trial, tn);
            if (tn < rn || tn <= floor) {
                update = 0.0;
                for (std::size_t n : g.interior()) update = std::max(update, std::abs(trial[n] - x[n]));
                x = std::move(trial);
                r = std::move(tr);
                rn = tn;
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
        if (update <= cfg.picard_tol * std::max(1.0, x.max_abs())) return x;
    }
    throw PicardStall("Picard iteration did not settle", update);
}

// ---------------------------------------------------------------------------
// Trajectories

enum class Outcome { GlobalDecay, BlowUp, ReachedTEnd, Inconclusive };

inline const char* to_string(Outcome o) {
    switch (o) {
        case Outcome::GlobalDecay: return "GlobalDecay";
        case Outcome::BlowUp: return "BlowUp";
        case Outcome::ReachedTEnd: return "ReachedTEnd";
        case Outcome::Inconclusive: return "Inconclusive";
    }
    return "?";
}

struct TrajectoryRecord {
    double m = 1.0;  // exponent of the monitored L^{m+1} norm
    double ep_offset = 1.0;
    std::vector<double> times;
    std::vector<EnergyReport> reports;
    std::vector<double> dissipation;  // int_0^t int u^{m-1} u_t^2
    std::vector<double> M_series;     // int_0^t int u^{m+1}
    std::vector<double> Ep_series;    // M_series + ep_offset
    std::vector<double> norms;        // ||u||_{L^{m+1}}
    std::vector<double> dts;          // step that led to each sample (0 for the first)
    Outcome outcome = Outcome::Inconclusive;
    std::optional<double> T_star;
    int I_sign_flips = 0;
    int I_sign_at_start = 0;
    double min_value = 0.0;  // smallest nodal value over all stored states
    long rejected_steps = 0;
    std::string diagnostics;
    Field final_state;
    Field previous_state;  // state before the last accepted step
    double last_dt = 0.0;

    std::size_t size() const noexcept { return times.size(); }
};

namespace detail {

inline int nehari_sign(const EnergyReport& r) {
    const double tol = nehari_tolerance(r);
    return r.I > tol ? 1 : (r.I < -tol ? -1 : 0);
}

inline double norm_m1(const EnergyReport& r, double m) { return std::pow(std::max(r.mass_m1, 0.0), 1.0 / (m + 1.0)); }

/// int 0.5 (u^{m-1} + v^{m-1}) ((v - u)/dt)^2, the trapezoid weight of one step.
inline double step_dissipation(const Field& u, const Field& v, double m, double dt) {
    const auto w = u.grid().weights();
    double s = 0.0;
    for (std::size_t n : u.grid().interior()) {
        const double r = (v[n] - u[n]) / dt;
        const double a = m == 1.0 ? 1.0 : 0.5 * (pos_pow(u[n], m - 1.0) + pos_pow(v[n], m - 1.0));
        s += w[n] * a * r * r;
    }
    return s * dt;
}

}  // namespace detail

/// Integrates from u0 with adaptive dt: a step is retried at dt/2 on a
/// Picard stall or when |dJ| exceeds energy_change_limit times
/// max(|J|, 1e-3 |J0|); dt grows by 1.2 after 5 clean steps. BlowUp is
/// declared when the L^{m+1} norm passes the threshold, or when dt would drop
/// below dt_min while the norm grows; GlobalDecay when the norm falls under
/// decay_norm_threshold.
inline TrajectoryRecord integrate_trajectory(const Field& u0, const ProblemParams& prm, const StepperConfig& cfg) {
    cfg.validate();
    if (u0.min_value() < 0.0) throw InvalidArgument("initial data must be nonnegative");
    TrajectoryRecord tr;
    tr.m = prm.m;
    tr.ep_offset = cfg.ep_offset;
    Field u = u0;
    u.clear_boundary();
    EnergyReport rep = energy_report(u, prm);
    const double J0 = rep.J;
    double t = 0.0, D = 0.0, Mi = 0.0;
    tr.min_value = u.min_value();

    auto record = [&](double dt_used) {
        tr.times.push_back(t);
        tr.reports.push_back(rep);
        tr.dissipation.push_back(D);
        tr.M_series.push_back(Mi);
        tr.Ep_series.push_back(Mi + cfg.ep_offset);
        tr.norms.push_back(detail::norm_m1(rep, prm.m));
        tr.dts.push_back(dt_used);
    };
    record(0.0);
    tr.I_sign_at_start = detail::nehari_sign(rep);
    int last_sign = tr.I_sign_at_start;
    tr.previous_state = u;

    auto finish = [&](Outcome o) {
        tr.outcome = o;
        if (o == Outcome::BlowUp) tr.T_star = t;
        tr.final_state = u;
        return tr;
    };
    if (tr.norms.back() < cfg.decay_norm_threshold) return finish(Outcome::GlobalDecay);

    double dt = cfg.dt_init;
    int clean = 0;
    long steps = 0;
    while (t < cfg.t_end * (1.0 - 1e-14)) {
        if (++steps > cfg.max_steps) {
            tr.diagnostics = "step budget exhausted at t = " + std::to_string(t);
            return finish(Outcome::Inconclusive);
        }
        const double h = std::min(dt, cfg.t_end - t);
        Field next;
        try {
            next = step(u, prm, cfg, h);
        } catch (const PicardStall& e) {
            ++tr.rejected_steps;
            if (0.5 * dt < cfg.dt_min) {
                tr.diagnostics = std::string("Picard stall at dt_min: ") + e.what();
                return finish(Outcome::Inconclusive);
            }
            dt *= 0.5;
            clean = 0;
            continue;
        } catch (const LinearSolveFailure& e) {
            ++tr.rejected_steps;
            if (0.5 * dt < cfg.dt_min) {
                tr.diagnostics = std::string("linear solve failed at dt_min: ") + e.what();
                return finish(Outcome::Inconclusive);
            }
            dt *= 0.5;
            clean = 0;
            continue;
        }
        EnergyReport nrep = energy_report(next, prm);
        const double scale = std::max({std::abs(rep.J), 1e-3 * std::abs(J0), 1e-12});
        const bool finite = std::isfinite(nrep.J) && std::isfinite(nrep.mass_m1);
        const bool too_big = !finite || std::abs(nrep.J - rep.J) > cfg.energy_change_limit * scale;
        if (too_big) {
            const bool growing = !finite || nrep.mass_m1 > rep.mass_m1;
            if (0.5 * h >= cfg.dt_min) {
                ++tr.rejected_steps;
                dt = 0.5 * h;
                clean = 0;
                continue;
            }
            if (growing) {
                tr.diagnostics = "time step collapsed below dt_min while the norm grew";
                return finish(Outcome::BlowUp);
            }
            if (!finite) {
                tr.diagnostics = "non-finite state at dt_min";
                return finish(Outcome::Inconclusive);
            }
        }
        D += detail::step_dissipation(u, next, prm.m, h);
        Mi += 0.5 * h * (rep.mass_m1 + nrep.mass_m1);
        t += h;
        tr.previous_state = std::move(u);
        u = std::move(next);
        rep = nrep;
        tr.last_dt = h;
        tr.min_value = std::min(tr.min_value, u.min_value());
        record(h);

        const int s = detail::nehari_sign(rep);
        if (s != 0) {
            if (last_sign != 0 && s != last_sign) ++tr.I_sign_flips;
            last_sign = s;
        }
        if (tr.norms.back() > cfg.blowup_norm_threshold) {
            tr.diagnostics = "norm passed the blow-up threshold";
            return finish(Outcome::BlowUp);
        }
        if (tr.norms.back() < cfg.decay_norm_threshold) return finish(Outcome::GlobalDecay);
        if (++clean >= 5) {
            dt = std::min(1.2 * dt, cfg.dt_max);
            clean = 0;
        }
    }
    return finish(Outcome::ReachedTEnd);
}

/// max_k |J(t_k) + dissipation(t_k) - J(0)| / max(1, |J(0)|).
inline double energy_identity_residual(const TrajectoryRecord& tr) {
    if (tr.size() < 2) return 0.0;
    const double J0 = tr.reports.front().J;
    double r = 0.0;
    for (std::size_t k = 0; k < tr.size(); ++k) r = std::max(r, std::abs(tr.reports[k].J + tr.dissipation[k] - J0));
    return r / std::max(1.0, std::abs(J0));
}

/// Largest increase of J between consecutive samples relative to |J(0)|.
inline double max_energy_increase(const TrajectoryRecord& tr) {
    double worst = 0.0;
    for (std::size_t k = 1; k < tr.size(); ++k) worst = std::max(worst, tr.reports[k].J - tr.reports[k - 1].J);
    return worst / std::max(std::abs(tr.reports.front().J), std::numeric_limits<double>::min());
}

/// Residual of the last step in the weak form, tested against the first
/// `modes` sine products: for each test function phi,
///   <(u - u_prev)/dt, phi> + <flux(u), grad phi> - <f(u_prev), phi>,
/// relative to the largest term seen over all test functions.
inline double weak_form_residual(const TrajectoryRecord& tr, const ProblemParams& prm, double eps_reg = 0.0,
                                 int modes = 4) {
    if (tr.last_dt <= 0.0) return 0.0;
    const Field& u = tr.final_state;
    const Field& up = tr.previous_state;
    const GridPtr& g = u.grid_ptr();
    const FaceField flux = p_flux(*g, gradient(power_field(u, prm.m)), prm.p, eps_reg);
    const Field src = detail::source_field(up, prm);
    double worst = 0.0, scale = 0.0;
    for (int k = 1; k <= modes; ++k) {
        for (int l = 1; l <= (g->dim() == 2 ? modes : 1); ++l) {
            Field phi = Field::sample_interior(g, [&](double x, double y) {
                double v = std::sin(k * std::numbers::pi * x / g->extent(0));
                if (g->dim() == 2) v *= std::sin(l * std::numbers::pi * y / g->extent(1));
                return v;
            });
            double a = 0.0;
            const auto w = g->weights();
            for (std::size_t n : g->interior()) a += w[n] * (u[n] - up[n]) / tr.last_dt * phi[n];
            const double b = face_inner(*g, flux, gradient(phi));
            const double c = inner(src, phi);
            scale = std::max({scale, std::abs(a), std::abs(b), std::abs(c)});
            worst = std::max(worst, std::abs(a + b - c));
        }
    }
    return scale > 0.0 ? worst / scale : 0.0;
}

// ---------------------------------------------------------------------------
// Blow-up diagnostics

struct BlowupBound {
    double T_bound;
    double epsilon;
};

/// eps = sqrt(pm alpha)/(m+1) - 1 and T <= M / (eps int u0^{m+1}).
/// NotApplicable when J(u0) >= 0 or eps <= 0.
inline BlowupBound blowup_bound(const Field& u0, const ProblemParams& prm, double M) {
    const double eps = std::sqrt(prm.pm() * prm.alpha) / (prm.m + 1.0) - 1.0;
    if (!(eps > 0.0)) throw NotApplicable("blow-up bound needs pm alpha > (m+1)^2");
    const double J = energy_J(u0, prm);
    if (!(J < 0.0)) throw NotApplicable("blow-up bound needs J(u0) < 0");
    const double mass = integrate_map(u0, [&](double v) { return detail::pos_pow(v, prm.m + 1.0); });
    return {M / (eps * mass), eps};
}

inline double blowup_bound_from(double M, double eps, double mass_m1) { return M / (eps * mass_m1); }

namespace detail {

/// First derivative of y at interior sample k on a nonuniform grid.
inline double first_divided_difference(const std::vector<double>& t, const std::vector<double>& y, std::size_t k) {
    const double h0 = t[k] - t[k - 1];
    const double h1 = t[k + 1] - t[k];
    return (h0 * h0 * y[k + 1] - h1 * h1 * y[k - 1] + (h1 * h1 - h0 * h0) * y[k]) / (h0 * h1 * (h0 + h1));
}

}  // namespace detail

/// E''E - (1+eps) E'^2 at interior samples, with E = M + int_0^t int u^{m+1},
/// E' = int u^{m+1} taken exactly and E'' the divided difference of E'.
inline std::vector<double> concavity_series(const TrajectoryRecord& tr, double M, double one_plus_eps) {
    std::vector<double> out;
    if (tr.size() < 3) return out;
    std::vector<double> mp(tr.size());
    for (std::size_t k = 0; k < tr.size(); ++k) mp[k] = tr.reports[k].mass_m1;
    for (std::size_t k = 1; k + 1 < tr.size(); ++k) {
        const double E = M + tr.M_series[k];
        const double E2 = detail::first_divided_difference(tr.times, mp, k);
        out.push_back(E2 * E - one_plus_eps * mp[k] * mp[k]);
    }
    return out;
}

struct TightenedM {
    double M;
    bool found;
};

/// Smallest M (to relative 1e-9) keeping every concavity margin positive.
/// Starts from M_start, doubles until all margins are positive, then halves
/// until some margin fails and bisects the last bracket.
inline TightenedM tighten_M(const TrajectoryRecord& tr, double one_plus_eps, double M_start = 1.0) {
    auto ok = [&](double M) {
        for (double v : concavity_series(tr, M, one_plus_eps)) {
            if (!(v > 0.0)) return false;
        }
        return true;
    };
    double hi = M_start;
    int guard = 0;
    while (!ok(hi)) {
        hi *= 2.0;
        if (++guard > 200) return {hi, false};
    }
    double lo = 0.5 * hi;
    guard = 0;
    while (ok(lo)) {
        hi = lo;
        lo *= 0.5;
        if (++guard > 2000 || lo == 0.0) return {hi, true};
    }
    while (hi - lo > 1e-9 * hi) {
        const double mid = 0.5 * (lo + hi);
        (ok(mid) ? hi : lo) = mid;
    }
    return {hi, true};
}

/// True when the tail (last `fraction` of samples) of the series is positive
/// and its last value exceeds its first.
inline bool eventually_positive(const std::vector<double>& s, double fraction = 0.25) {
    if (s.size() < 4) return false;
    const std::size_t from = s.size() - std::max<std::size_t>(2, static_cast<std::size_t>(fraction * s.size()));
    for (std::size_t k = from; k < s.size(); ++k) {
        if (!(s[k] > 0.0)) return false;
    }
    return s.back() > s[from];
}

struct BlowupReport {
    double T_star_observed = 0.0;
    double T_star_bound = 0.0;
    double M_used = 0.0;
    double epsilon_used = 0.0;
    std::vector<double> concavity_margin_series;
};

/// Bound and margins for a BlowUp trajectory, using the tightened M.
inline BlowupReport blowup_report(const TrajectoryRecord& tr, const Field& u0, const ProblemParams& prm) {
    if (tr.outcome != Outcome::BlowUp || !tr.T_star) throw NotApplicable("trajectory did not blow up");
    BlowupReport br;
    br.T_star_observed = *tr.T_star;
    const auto b = blowup_bound(u0, prm, 1.0);
    br.epsilon_used = b.epsilon;
    auto tm = tighten_M(tr, 1.0 + b.epsilon, std::max(tr.ep_offset, 1e-12));
    if (!tm.found) throw NotApplicable("no M keeps the concavity margins positive");
    br.M_used = tm.M;
    br.T_star_bound = blowup_bound(u0, prm, tm.M).T_bound;
    br.concavity_margin_series = concavity_series(tr, tm.M, 1.0 + b.epsilon);
    return br;
}

// ---------------------------------------------------------------------------
// Decay

enum class DecayMode { Polynomial, Exponential };

inline const char* to_string(DecayMode d) { return d == DecayMode::Polynomial ? "Polynomial" : "Exponential"; }

struct DecayFit {
    DecayMode mode;
    double rate_or_exponent;  // exponent of t (Polynomial) or decay rate (Exponential)
    double fit_r2;
    double predicted_exponent;  // -1/(pm-m-1) for Polynomial, NaN otherwise
};

/// Least-squares fit of log ||u||_{L^{m+1}} on the tail (samples after the
/// first 10%) against log t when pm > m+1, against t when pm = m+1.
inline DecayFit decay_fit(const TrajectoryRecord& tr, const ProblemParams& prm) {
    if (tr.outcome != Outcome::GlobalDecay && tr.outcome != Outcome::ReachedTEnd) {
        throw InsufficientDecay("decay fit needs a decaying or completed trajectory");
    }
    if (tr.size() < 10) throw InsufficientDecay("too few samples for a decay fit");
    if (!(tr.norms.back() * 10.0 <= tr.norms.front())) throw InsufficientDecay("norm dropped by less than 10x");
    const double excess = prm.pm() - prm.m - 1.0;
    const bool poly = excess > 1e-12;
    const std::size_t from = std::max<std::size_t>(1, tr.size() / 10);
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    std::size_t n = 0;
    for (std::size_t k = from; k < tr.size(); ++k) {
        if (!(tr.norms[k] > 0.0) || !(tr.times[k] > 0.0)) continue;
        const double x = poly ? std::log(tr.times[k]) : tr.times[k];
        const double y = std::log(tr.norms[k]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
        ++n;
    }
    if (n < 3) throw InsufficientDecay("too few positive samples in the fit window");
    const double cxx = sxx - sx * sx / n, cxy = sxy - sx * sy / n, cyy = syy - sy * sy / n;
    const double slope = cxy / cxx;
    const double r2 = cyy > 0.0 ? cxy * cxy / (cxx * cyy) : 1.0;
    DecayFit out{poly ? DecayMode::Polynomial : DecayMode::Exponential, poly ? slope : -slope, r2,
                 poly ? -1.0 / excess : std::numeric_limits<double>::quiet_NaN()};
    return out;
}

// ---------------------------------------------------------------------------
// Output

/// Columns t, J, I, dissipation, L{m+1} norm, Ep, M, dt, outcome flag
/// (empty except on the final row).
inline void write_trajectory_csv(std::ostream& os, const TrajectoryRecord& tr) {
    os << "t,J,I,dissipation,norm_m1,Ep,M,dt,outcome\n";
    os.precision(17);
    for (std::size_t k = 0; k < tr.size(); ++k) {
        os << tr.times[k] << ',' << tr.reports[k].J << ',' << tr.reports[k].I << ',' << tr.dissipation[k] << ','
           << tr.norms[k] << ',' << tr.Ep_series[k] << ',' << tr.M_series[k] << ',' << tr.dts[k] << ','
           << (k + 1 == tr.size() ? to_string(tr.outcome) : "") << '\n';
    }
}

}  // namespace pmwell
