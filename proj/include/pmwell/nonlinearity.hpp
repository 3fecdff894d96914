#pragma once

// Source terms f(u), their weighted primitives F(u) = int_0^u s^{m-1} f(s) ds,
// the problem constants, and a sampling checker for the structural
// hypotheses on f.

#include <pmwell/error.hpp>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdio>
#include <optional>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

namespace pmwell {

struct PowerLaw {
    double k = 1.0;
    double q = 3.0;
};

/// Piecewise-linear interpolant through (x_i, y_i); linear extrapolation with
/// the last slope beyond the final point. Linear interpolation of monotone
/// convex data is itself monotone and convex.
struct Tabulated {
    std::vector<double> x;
    std::vector<double> y;
};

/// f == 0. Used for the pure diffusion checks.
struct NoSource {};

class SourceSpec {
public:
    using Kind = std::variant<NoSource, PowerLaw, Tabulated>;

    SourceSpec() = default;

    static SourceSpec none() { return SourceSpec(NoSource{}); }

    static SourceSpec power(double k, double q) {
        if (!(k > 0.0) || !(q >= 1.0)) {
            throw InvalidArgument("power-law source needs k > 0 and q >= 1");
        }
        return SourceSpec(PowerLaw{k, q});
    }

    static SourceSpec tabulated(std::vector<double> x, std::vector<double> y) {
        if (x.size() < 2 || x.size() != y.size()) {
            throw InvalidArgument("tabulated source needs at least two (x, y) pairs");
        }
        if (x.front() != 0.0 || y.front() != 0.0) {
            throw InvalidArgument("tabulated source must start at (0, 0)");
        }
        for (std::size_t i = 1; i < x.size(); ++i) {
            if (!(x[i] > x[i - 1])) throw InvalidArgument("tabulated abscissae must increase");
        }
        for (double v : y) {
            if (!(v >= 0.0)) throw InvalidArgument("tabulated source values must be nonnegative");
        }
        return SourceSpec(Tabulated{std::move(x), std::move(y)});
    }

    const Kind& kind() const noexcept { return kind_; }
    const PowerLaw* as_power() const noexcept { return std::get_if<PowerLaw>(&kind_); }
    bool is_none() const noexcept { return std::holds_alternative<NoSource>(kind_); }

    /// f(u) for u >= 0 (no argument check; see f_eval for the checked form).
    double f(double u) const {
        return std::visit(
            [u](const auto& s) -> double {
                using T = std::decay_t<decltype(s)>;
                if constexpr (std::is_same_v<T, NoSource>) {
                    return 0.0;
                } else if constexpr (std::is_same_v<T, PowerLaw>) {
                    if (u <= 0.0) return 0.0;
                    return s.q == 3.0 ? s.k * u * u * u : s.k * std::pow(u, s.q);
                } else {
                    return interpolate(s, u);
                }
            },
            kind_);
    }

    /// f'(u): analytic for power laws, segment slope for tabulated data.
    double df(double u) const {
        return std::visit(
            [u](const auto& s) -> double {
                using T = std::decay_t<decltype(s)>;
                if constexpr (std::is_same_v<T, NoSource>) {
                    return 0.0;
                } else if constexpr (std::is_same_v<T, PowerLaw>) {
                    if (u <= 0.0) return s.q == 1.0 ? s.k : 0.0;
                    return s.k * s.q * std::pow(u, s.q - 1.0);
                } else {
                    std::size_t i = segment(s, u);
                    return (s.y[i + 1] - s.y[i]) / (s.x[i + 1] - s.x[i]);
                }
            },
            kind_);
    }

    /// F(u) = int_0^u s^{m-1} f(s) ds.
    double F(double m, double u) const {
        if (u <= 0.0) return 0.0;
        return std::visit(
            [m, u](const auto& s) -> double {
                using T = std::decay_t<decltype(s)>;
                if constexpr (std::is_same_v<T, NoSource>) {
                    return 0.0;
                } else if constexpr (std::is_same_v<T, PowerLaw>) {
                    return s.k * std::pow(u, m + s.q) / (m + s.q);
                } else {
                    return primitive_tabulated(s, m, u);
                }
            },
            kind_);
    }

private:
    explicit SourceSpec(Kind k) : kind_(std::move(k)) {}

    static std::size_t segment(const Tabulated& t, double u) {
        auto it = std::upper_bound(t.x.begin(), t.x.end(), u);
        std::size_t i = it == t.x.begin() ? 0 : static_cast<std::size_t>(it - t.x.begin()) - 1;
        return std::min(i, t.x.size() - 2);
    }

    static double interpolate(const Tabulated& t, double u) {
        if (u <= 0.0) return 0.0;
        std::size_t i = segment(t, u);
        double slope = (t.y[i + 1] - t.y[i]) / (t.x[i + 1] - t.x[i]);
        return t.y[i] + slope * (u - t.x[i]);
    }

    // Integrates piecewise between breakpoints so every panel is smooth.
    static double primitive_tabulated(const Tabulated& t, double m, double u) {
        using boost::math::quadrature::gauss_kronrod;
        auto integrand = [&](double s) { return std::pow(s, m - 1.0) * interpolate(t, s); };
        double total = 0.0;
        double a = 0.0;
        for (std::size_t i = 1; i < t.x.size() && a < u; ++i) {
            double b = std::min(t.x[i], u);
            if (i + 1 == t.x.size()) b = u;
            double err = 0.0;
            total += gauss_kronrod<double, 15>::integrate(integrand, a, b, 12, 1e-13, &err);
            a = b;
        }
        if (a < u) {
            double err = 0.0;
            total += gauss_kronrod<double, 15>::integrate(integrand, a, u, 12, 1e-13, &err);
        }
        return total;
    }

    Kind kind_ = NoSource{};
};

/// Checked evaluation of f; negative arguments are rejected.
inline double f_eval(const SourceSpec& spec, double u) {
    if (u < 0.0) throw InvalidArgument("source evaluated at negative u");
    return spec.f(u);
}

inline double F_eval(const SourceSpec& spec, double m, double u) {
    if (u < 0.0) throw InvalidArgument("primitive evaluated at negative u");
    return spec.F(m, u);
}

/// Every constant of the structural hypotheses, plus the source.
struct ProblemParams {
    double m = 1.0;
    double p = 2.0;
    double sigma = 0.0;
    double alpha = 3.5;
    double beta = 0.1;
    double gamma = 4.0;
    std::optional<double> lambda1p;
    SourceSpec source = SourceSpec::power(1.0, 3.0);

    double pm() const noexcept { return p * m; }

    /// Exponent of the lower growth bound F(u) - sigma >= B|u|^lambda.
    double lambda_growth() const noexcept { return alpha / (1.0 + beta); }

    /// Upper bound on beta, available once lambda1p is known.
    std::optional<double> beta_bound() const {
        if (!lambda1p) return std::nullopt;
        return *lambda1p * (alpha - m - 1.0) / (m + 1.0);
    }

    double F(double u) const { return source.F(m, u); }
    double f(double u) const { return source.f(u); }

    /// Clause-level messages for every violated invariant; empty when valid.
    std::vector<std::string> violations() const {
        std::vector<std::string> out;
        if (!(m >= 1.0)) out.push_back("m >= 1 violated (m = " + num(m) + ")");
        if (!(p >= 2.0)) out.push_back("p >= 2 violated (p = " + num(p) + ")");
        if (!(sigma >= 0.0)) out.push_back("sigma >= 0 violated (sigma = " + num(sigma) + ")");
        if (!(p < alpha)) out.push_back("p < alpha violated (p = " + num(p) + ", alpha = " + num(alpha) + ")");
        if (!(alpha <= gamma)) {
            out.push_back("alpha <= gamma violated (alpha = " + num(alpha) + ", gamma = " + num(gamma) + ")");
        }
        if (auto bb = beta_bound(); bb && !(beta < *bb)) {
            out.push_back("beta < lambda1p*(alpha-m-1)/(m+1) violated (beta = " + num(beta) +
                          ", bound = " + num(*bb) + ")");
        }
        return out;
    }

    void require_valid() const {
        auto v = violations();
        if (!v.empty()) {
            std::string msg = "invalid problem parameters:";
            for (const auto& s : v) msg += " " + s + ";";
            throw ConfigError(msg);
        }
    }

private:
    static std::string num(double v) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.6g", v);
        return buf;
    }
};

// ---------------------------------------------------------------------------
// Hypothesis checker

enum class Clause { H_i, H_ii, H_iii_upper, H_iii_lower, L31a };

inline const char* to_string(Clause c) {
    switch (c) {
        case Clause::H_i: return "H_i";
        case Clause::H_ii: return "H_ii";
        case Clause::H_iii_upper: return "H_iii_upper";
        case Clause::H_iii_lower: return "H_iii_lower";
        case Clause::L31a: return "L31a";
    }
    return "?";
}

struct ConditionReport {
    Clause clause;
    double u_lo = 0.0;
    double u_hi = 0.0;
    std::size_t samples = 0;
    std::vector<double> violations;  // u values where the inequality fails
    double min_margin = std::numeric_limits<double>::infinity();
    double max_margin = -std::numeric_limits<double>::infinity();

    bool holds() const noexcept { return violations.empty(); }
};

namespace detail {

inline void record_margin(ConditionReport& r, double u, double margin, double tol) {
    r.min_margin = std::min(r.min_margin, margin);
    r.max_margin = std::max(r.max_margin, margin);
    ++r.samples;
    if (margin < -tol || !std::isfinite(margin)) r.violations.push_back(u);
}

/// Centered difference with h = max(1e-6, 1e-6 u), shrunk to u/2 near zero.
inline double centered_derivative(const SourceSpec& s, double u) {
    double h = std::max(1e-6, 1e-6 * u);
    h = std::min(h, 0.5 * u);
    return (s.f(u + h) - s.f(u - h)) / (2.0 * h);
}

}  // namespace detail

/// Log-spaced sample points on [1e-3 u_max, u_max].
inline std::vector<double> log_samples(double u_max, int n) {
    std::vector<double> u(static_cast<std::size_t>(n));
    const double lo = std::log(1e-3 * u_max);
    const double hi = std::log(u_max);
    for (int i = 0; i < n; ++i) u[i] = std::exp(lo + (hi - lo) * i / (n - 1));
    u.back() = u_max;
    return u;
}

/// One report per clause. Margins are the signed slack of each inequality;
/// a sample violates when its margin is below a roundoff-scaled tolerance.
inline std::vector<ConditionReport> check_H(const ProblemParams& prm, double u_max, int n_samples) {
    if (!(u_max > 0.0)) throw InvalidArgument("check_H needs u_max > 0");
    if (n_samples < 100) throw InvalidArgument("check_H needs at least 100 samples");
    const auto u = log_samples(u_max, n_samples);
    const double eps = std::numeric_limits<double>::epsilon();
    const double m = prm.m;
    const auto& s = prm.source;

    std::vector<ConditionReport> out;
    for (Clause c : {Clause::H_i, Clause::H_ii, Clause::H_iii_upper, Clause::H_iii_lower, Clause::L31a}) {
        ConditionReport r;
        r.clause = c;
        r.u_lo = u.front();
        r.u_hi = u.back();
        out.push_back(r);
    }
    auto& hi = out[0];
    auto& hii = out[1];
    auto& up = out[2];
    auto& low = out[3];
    auto& l31 = out[4];

    if (s.f(0.0) != 0.0) hi.violations.push_back(0.0);
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double x = u[i];
        const double fx = s.f(x);
        const double Fx = s.F(m, x);

        // (i) positivity and a finite local Lipschitz quotient
        {
            const double lip = i > 0 ? std::abs(fx - s.f(u[i - 1])) / (x - u[i - 1]) : 0.0;
            hi.min_margin = std::min(hi.min_margin, fx);
            hi.max_margin = std::max(hi.max_margin, fx);
            ++hi.samples;
            if (!(fx > 0.0) || !std::isfinite(lip)) hi.violations.push_back(x);
        }

        // (ii) second divided difference on the nonuniform grid
        if (i > 0 && i + 1 < u.size()) {
            const double h1 = x - u[i - 1];
            const double h2 = u[i + 1] - x;
            const double f0 = s.f(u[i - 1]);
            const double f2 = s.f(u[i + 1]);
            const double dd = 2.0 * ((f2 - fx) / h2 - (fx - f0) / h1) / (h1 + h2);
            const double tol = 64.0 * eps * (std::abs(f0) + std::abs(fx) + std::abs(f2)) / (h1 * h2);
            detail::record_margin(hii, x, dd, tol);
        }

        // (iii) upper: u^m f(u) <= gamma (F(u) - sigma)
        const double umf = std::pow(x, m) * fx;
        {
            const double rhs = prm.gamma * (Fx - prm.sigma);
            detail::record_margin(up, x, rhs - umf, 1e-12 * (std::abs(rhs) + std::abs(umf)));
        }
        // (iii) lower: alpha F(u) <= u^m f(u) + beta u^{pm} + alpha sigma
        {
            const double lhs = prm.alpha * Fx;
            const double rhs = umf + prm.beta * std::pow(x, prm.pm()) + prm.alpha * prm.sigma;
            detail::record_margin(low, x, rhs - lhs, 1e-12 * (std::abs(rhs) + std::abs(lhs)));
        }
        // u f'(u) - m (p - 1) f(u) >= 0
        {
            const double d = detail::centered_derivative(s, x);
            const double a = x * d;
            const double b = m * (prm.p - 1.0) * fx;
            detail::record_margin(l31, x, a - b, 1e-6 * (std::abs(a) + std::abs(b)));
        }
    }
    return out;
}

struct GrowthConstants {
    double A;       // |F(u) - sigma| <= A |u|^gamma
    double B;       // F(u) - sigma >= B |u|^lambda for |u| >= 1
    double lambda;  // alpha / (1 + beta)
};

/// Constants of the two growth bounds, evaluated at a reference point the
/// way their derivation prescribes.
inline GrowthConstants growth_constants(const ProblemParams& prm, double u_ref) {
    if (u_ref == 0.0) throw InvalidArgument("growth constants need u_ref != 0");
    const double au = std::abs(u_ref);
    const double Fu = prm.F(au);
    const double lambda = prm.lambda_growth();
    return {std::abs(Fu - prm.sigma) / std::pow(au, prm.gamma), Fu / std::pow(au, lambda), lambda};
}

}  // namespace pmwell
