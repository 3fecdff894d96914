#pragma once

// Configuration-driven experiments: initial data, energy targeting along
// rays, single runs, the existence/blow-up dichotomy table, parameter sweeps,
// and the on-disk artifacts (CSV, summary JSON, checksummed manifest).

#include <pmwell/config.hpp>
#include <pmwell/error.hpp>
#include <pmwell/evolve.hpp>
#include <pmwell/mesh.hpp>
#include <pmwell/nonlinearity.hpp>
#include <pmwell/operators.hpp>
#include <pmwell/variational.hpp>

#include <json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace pmwell {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Formatting and files

/// Shortest round-trip decimal form; empty for NaN.
inline std::string fmt(double v) {
    if (std::isnan(v)) return "";
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

inline Json num_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 digest failed");
    }
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return os.str();
}

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

template <class Writer>
void write_file(const fs::path& p, Writer&& w) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("cannot write " + p.string());
    w(out);
    if (!out) throw Error("write failed for " + p.string());
}

/// Lists every regular file under dir (relative paths, sorted) with size and
/// SHA-256, skipping manifest.json itself.
inline Json build_manifest(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    Json arr = Json::array();
    for (const auto& f : files) {
        const std::string bytes = read_file(f);
        arr.push_back(Json{{"path", fs::relative(f, dir).generic_string()},
                           {"bytes", bytes.size()},
                           {"sha256", sha256_hex(bytes)}});
    }
    return Json{{"files", arr}};
}

/// Timestamped log lines; kept apart from the deterministic outputs.
class RunLog {
public:
    explicit RunLog(const fs::path& p) : out_(p, std::ios::app) {}
    void operator()(const std::string& msg) {
        const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        std::tm tm{};
        gmtime_r(&now, &tm);
        out_ << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ") << ' ' << msg << '\n';
        out_.flush();
    }

private:
    std::ofstream out_;
};

// ---------------------------------------------------------------------------
// JSON views of the configuration

inline Json to_json(const SourceSpec& s) {
    return std::visit(
        [](const auto& k) -> Json {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, NoSource>) {
                return Json{{"kind", "none"}};
            } else if constexpr (std::is_same_v<T, PowerLaw>) {
                return Json{{"kind", "power"}, {"k", k.k}, {"q", k.q}};
            } else {
                return Json{{"kind", "tabulated"}, {"x", k.x}, {"y", k.y}};
            }
        },
        s.kind());
}

inline Json to_json(const ProblemParams& p) {
    return Json{{"m", p.m},
                {"p", p.p},
                {"sigma", p.sigma},
                {"alpha", p.alpha},
                {"beta", p.beta},
                {"gamma", p.gamma},
                {"lambda1p", p.lambda1p ? Json(*p.lambda1p) : Json(nullptr)},
                {"source", to_json(p.source)}};
}

inline Json to_json(const ExperimentConfig& c) {
    const auto& s = c.stepper;
    const auto& i = c.initial;
    const auto& e = c.experiment;
    return Json{{"grid", {{"dim", c.grid.dim}, {"extents", c.grid.extents}, {"cells", c.grid.cells}}},
                {"params", to_json(c.params)},
                {"initial",
                 {{"family", to_string(i.family)},
                  {"amplitude", i.amplitude},
                  {"mode", i.mode},
                  {"target", to_string(i.target)},
                  {"fraction", i.fraction},
                  {"branch", to_string(i.branch)},
                  {"tol", i.tol}}},
                {"stepper",
                 {{"dt_init", s.dt_init},
                  {"dt_min", s.dt_min},
                  {"dt_max", s.dt_max},
                  {"t_end", s.t_end},
                  {"blowup_norm_threshold", s.blowup_norm_threshold},
                  {"decay_norm_threshold", s.decay_norm_threshold},
                  {"eps_reg", s.eps_reg},
                  {"scheme", s.scheme == Scheme::SemiImplicit ? "semi_implicit" : "explicit"},
                  {"picard_tol", s.picard_tol},
                  {"picard_max", s.picard_max},
                  {"energy_change_limit", s.energy_change_limit},
                  {"ep_offset", s.ep_offset},
                  {"max_steps", s.max_steps}}},
                {"experiment",
                 {{"kind", to_string(e.kind)},
                  {"seed", e.seed},
                  {"workers", e.workers},
                  {"starts", e.starts},
                  {"search_tol", e.search_tol},
                  {"search_max_iter", e.search_max_iter},
                  {"eigen_tol", e.eigen_tol},
                  {"delta_points", e.delta_points},
                  {"energy_points", e.energy_points},
                  {"energy_eps_max", e.energy_eps_max},
                  {"critical_tol", e.critical_tol}}}};
}

// ---------------------------------------------------------------------------
// Problem setup

struct Prepared {
    GridPtr grid;
    ProblemParams params;  // lambda1p always filled
    std::vector<std::string> warnings;
};

/// Builds the grid, fills lambda_{1,p} from the discrete eigenproblem when the
/// config does not pin it, and validates every parameter clause.
inline Prepared prepare(const ExperimentConfig& c) {
    Prepared out;
    out.grid = c.grid.build();
    out.params = c.params;
    if (!out.params.lambda1p) out.params.lambda1p = first_eigen_p(out.grid, c.params.p, c.experiment.eigen_tol).lambda1p;
    out.params.require_valid();
    if (!(out.params.p < out.grid->dim())) {
        out.warnings.push_back("p < n does not hold on this grid; the embedding constant is the discrete one");
    }
    return out;
}

inline SearchOptions search_options(const ExperimentConfig& c, int workers) {
    SearchOptions so;
    so.starts = c.experiment.starts;
    so.seed = c.experiment.seed;
    so.workers = workers;
    so.tol = c.experiment.search_tol;
    so.max_iter = c.experiment.search_max_iter;
    return so;
}

// ---------------------------------------------------------------------------
// Initial data

/// Unit-scale profile of the requested family; the amplitude is applied by
/// the caller. Sine: |sin(k pi x/L1)| (times sin(pi y/L2) in 2D). Eigen: the
/// first p-eigenfunction scaled to max 1. Bump: a seeded Gaussian times the
/// first sine mode, scaled to max 1.
inline Field initial_profile(const GridPtr& g, InitialFamily family, int mode, double p, std::uint64_t seed,
                             double eigen_tol = 1e-10) {
    constexpr double pi = std::numbers::pi;
    const double L0 = g->extent(0);
    const double L1 = g->dim() == 2 ? g->extent(1) : 1.0;
    const bool two = g->dim() == 2;
    switch (family) {
        case InitialFamily::Sine:
            return Field::sample_interior(g, [&](double x, double y) {
                double v = std::abs(std::sin(mode * pi * x / L0));
                if (two) v *= std::sin(pi * y / L1);
                return v;
            });
        case InitialFamily::Eigen: {
            Field e = first_eigen_p(g, p, eigen_tol).eigenfield;
            return e.scaled(1.0 / e.max_abs());
        }
        case InitialFamily::Bump: {
            std::mt19937_64 rng(seed);
            std::uniform_real_distribution<double> C(0.3, 0.7), W(0.08, 0.2);
            const double cx = C(rng) * L0, wx = W(rng) * L0;
            const double cy = C(rng) * L1, wy = W(rng) * L1;
            Field b = Field::sample_interior(g, [&](double x, double y) {
                double r2 = (x - cx) * (x - cx) / (wx * wx);
                double v = std::sin(pi * x / L0);
                if (two) {
                    r2 += (y - cy) * (y - cy) / (wy * wy);
                    v *= std::sin(pi * y / L1);
                }
                return v * std::exp(-0.5 * r2);
            });
            return b.scaled(1.0 / b.max_abs());
        }
    }
    throw InvalidArgument("unknown initial family");
}

struct TuneResult {
    double amplitude = 0.0;
    double J = 0.0;
    double I = 0.0;
    double epsilon_star = std::numeric_limits<double>::quiet_NaN();
    double target = 0.0;
    Branch branch = Branch::Stable;
};

/// Scales `base` so that J(amplitude * base) hits the target. Along the ray
/// J rises from sigma|Omega| to its peak at eps* (where I = 0) and falls
/// after; the Stable branch searches (0, eps*], the Unstable branch
/// [eps*, inf). Negative returns the smallest amplitude with J < 0, to
/// relative amplitude tolerance `tol`; the energy targets return |J - T| <= tol
/// with T = fraction * d (Subcritical) or d (Critical).
inline TuneResult tune_initial_energy(const Field& base, const ProblemParams& prm, EnergyTarget target, Branch branch,
                                      double tol, double d = 0.0, double fraction = 0.5) {
    if (target == EnergyTarget::None) throw InvalidArgument("tune_initial_energy needs a target");
    if (!(tol > 0.0)) throw InvalidArgument("tune_initial_energy needs tol > 0");
    auto J = [&](double e) { return energy_J(base.scaled(e), prm); };
    TuneResult out;
    out.branch = branch;
    out.target = target == EnergyTarget::Negative ? 0.0 : (target == EnergyTarget::Critical ? d : fraction * d);
    const double T = out.target;
    const double J0 = J(0.0);

    std::optional<double> es;
    try {
        es = epsilon_star(base, prm);
    } catch (const NoRoot&) {
    }
    auto finish = [&](double a) {
        out.amplitude = a;
        const auto r = energy_report(base.scaled(a), prm);
        out.J = r.J;
        out.I = r.I;
        if (es) out.epsilon_star = *es;
        return out;
    };

    if (branch == Branch::Stable) {
        if (target == EnergyTarget::Negative) {
            throw TargetUnreachable("J < 0 is not attainable on the stable branch", J0, es ? J(*es) : HUGE_VAL);
        }
        double lo = 0.0, hi;
        if (es) {
            hi = *es;
        } else {
            hi = 1.0;
            while (J(hi) < T && hi < 1e8) hi *= 2.0;
        }
        const double peak = J(hi);
        if (T < J0 - tol || T > peak + tol) {
            throw TargetUnreachable("energy target outside the stable branch range", J0, peak);
        }
        double best = hi, best_err = std::abs(peak - T);
        for (int k = 0; k < 200; ++k) {
            const double mid = 0.5 * (lo + hi);
            const double v = J(mid);
            if (std::abs(v - T) < best_err) best = mid, best_err = std::abs(v - T);
            if (best_err <= tol) break;
            (v < T ? lo : hi) = mid;
        }
        return finish(best);
    }

    if (!es) throw TargetUnreachable("no Nehari crossing on this ray, so no unstable branch", J0, HUGE_VAL);
    const double peak = J(*es);
    if (target != EnergyTarget::Negative && T > peak + tol) {
        throw TargetUnreachable("energy target above the ray maximum", -HUGE_VAL, peak);
    }
    double lo = *es, hi = 2.0 * *es;
    auto above = [&](double v) { return target == EnergyTarget::Negative ? v >= 0.0 : v > T; };
    double jh = J(hi);
    while (above(jh)) {
        if (hi > 1e8 * std::max(1.0, *es)) throw TargetUnreachable("energy target below the ray range", jh, peak);
        lo = hi;
        hi *= 2.0;
        jh = J(hi);
    }
    if (target == EnergyTarget::Negative) {
        while (hi - lo > tol * hi) {
            const double mid = 0.5 * (lo + hi);
            (above(J(mid)) ? lo : hi) = mid;
        }
        return finish(hi);
    }
    double best = hi, best_err = std::abs(jh - T);
    for (int k = 0; k < 200 && best_err > tol; ++k) {
        const double mid = 0.5 * (lo + hi);
        const double v = J(mid);
        if (std::abs(v - T) < best_err) best = mid, best_err = std::abs(v - T);
        (v > T ? lo : hi) = mid;
    }
    return finish(best);
}

struct InitialData {
    Field base;
    Field u0;
    double amplitude = 1.0;
    std::optional<TuneResult> tune;
    std::optional<double> d;
};

inline double default_tolerance(const ExperimentConfig& c, EnergyTarget t, double d) {
    if (c.initial.tol > 0.0) return c.initial.tol;
    return t == EnergyTarget::Negative ? 1e-6 : c.experiment.critical_tol * std::abs(d);
}

/// Base profile plus amplitude, tuned when the config names an energy target.
inline InitialData prepare_initial(const ExperimentConfig& c, const Prepared& pr, int workers = 1) {
    InitialData out;
    const auto& in = c.initial;
    out.base = initial_profile(pr.grid, in.family, in.mode, pr.params.p, c.experiment.seed, c.experiment.eigen_tol);
    out.amplitude = in.amplitude;
    if (in.target != EnergyTarget::None) {
        double d = 0.0;
        if (in.target != EnergyTarget::Negative) {
            d = well_depth_search(pr.grid, pr.params, 1.0, search_options(c, workers)).d;
            out.d = d;
        }
        out.tune = tune_initial_energy(out.base, pr.params, in.target, in.branch, default_tolerance(c, in.target, d), d,
                                       in.fraction);
        out.amplitude = out.tune->amplitude;
    }
    out.u0 = out.base.scaled(out.amplitude);
    return out;
}

/// Config-level form: builds the base profile and, for energy targets, the
/// well depth, then tunes.
inline TuneResult tune_initial_energy(const ExperimentConfig& c, EnergyTarget target, double tol) {
    ExperimentConfig cc = c;
    cc.initial.target = target;
    cc.initial.tol = tol;
    const Prepared pr = prepare(cc);
    return *prepare_initial(cc, pr, cc.experiment.workers).tune;
}

// ---------------------------------------------------------------------------
// Single runs

struct RunRecord {
    TrajectoryRecord traj;
    double identity_residual = 0.0;
    double weak_residual = 0.0;
    double energy_increase = 0.0;
    std::optional<BlowupReport> blowup;
    std::string blowup_note;
    std::optional<DecayFit> decay;
    std::string decay_note;
};

inline RunRecord simulate(const Field& u0, const ProblemParams& prm, const StepperConfig& cfg) {
    RunRecord r;
    r.traj = integrate_trajectory(u0, prm, cfg);
    r.identity_residual = energy_identity_residual(r.traj);
    r.weak_residual = weak_form_residual(r.traj, prm, cfg.regularization(u0.grid()));
    r.energy_increase = max_energy_increase(r.traj);
    if (r.traj.outcome == Outcome::BlowUp) {
        try {
            r.blowup = blowup_report(r.traj, u0, prm);
        } catch (const NotApplicable& e) {
            r.blowup_note = e.what();
        }
    }
    if (r.traj.outcome == Outcome::GlobalDecay || r.traj.outcome == Outcome::ReachedTEnd) {
        try {
            r.decay = decay_fit(r.traj, prm);
        } catch (const InsufficientDecay& e) {
            r.decay_note = e.what();
        }
    }
    return r;
}

inline int sign_of(double v, double tol) { return v > tol ? 1 : (v < -tol ? -1 : 0); }

inline Json to_json(const RunRecord& r) {
    const auto& t = r.traj;
    Json j{{"outcome", to_string(t.outcome)},
           {"T_star_observed", t.T_star ? Json(*t.T_star) : Json(nullptr)},
           {"final_time", t.times.back()},
           {"samples", t.size()},
           {"rejected_steps", t.rejected_steps},
           {"J0", t.reports.front().J},
           {"I0", t.reports.front().I},
           {"I_sign_at_start", t.I_sign_at_start},
           {"I_sign_flips", t.I_sign_flips},
           {"min_value", t.min_value},
           {"final_norm_m1", t.norms.back()},
           {"energy_identity_residual", r.identity_residual},
           {"weak_form_residual", r.weak_residual},
           {"max_energy_increase", r.energy_increase},
           {"diagnostics", t.diagnostics}};
    if (r.blowup) {
        j["blowup"] = Json{{"T_star_bound", r.blowup->T_star_bound},
                           {"M_used", r.blowup->M_used},
                           {"epsilon_used", r.blowup->epsilon_used},
                           {"margins_eventually_positive", eventually_positive(r.blowup->concavity_margin_series)}};
    } else if (!r.blowup_note.empty()) {
        j["blowup"] = Json{{"note", r.blowup_note}};
    }
    if (r.decay) {
        j["decay"] = Json{{"mode", to_string(r.decay->mode)},
                          {"rate_or_exponent", r.decay->rate_or_exponent},
                          {"fit_r2", r.decay->fit_r2},
                          {"predicted_exponent", num_or_null(r.decay->predicted_exponent)}};
    } else if (!r.decay_note.empty()) {
        j["decay"] = Json{{"note", r.decay_note}};
    }
    return j;
}

// ---------------------------------------------------------------------------
// Dichotomy table

enum class EnergyClass { JNeg, SubcriticalD, CriticalD, Supercritical };
enum class Prediction { GlobalExistence, BlowUp, NotPredicted };

inline const char* to_string(EnergyClass e) {
    switch (e) {
        case EnergyClass::JNeg: return "JNeg";
        case EnergyClass::SubcriticalD: return "SubcriticalD";
        case EnergyClass::CriticalD: return "CriticalD";
        case EnergyClass::Supercritical: return "Supercritical";
    }
    return "?";
}

inline const char* to_string(Prediction p) {
    switch (p) {
        case Prediction::GlobalExistence: return "+ global existence";
        case Prediction::BlowUp: return "- blow-up";
        case Prediction::NotPredicted: return "?";
    }
    return "?";
}

struct DichotomyRow {
    EnergyClass energy_class = EnergyClass::JNeg;
    Branch branch = Branch::Stable;
    int I_sign_at_start = 0;
    double J0 = 0.0;
    double I0 = 0.0;
    double amplitude = 0.0;
    Outcome observed_outcome = Outcome::Inconclusive;
    std::optional<double> T_star;
    int I_sign_flips = 0;
    Prediction theorem_prediction = Prediction::NotPredicted;
    std::optional<bool> agreement;  // empty for NotPredicted rows
    std::string trajectory_file;
    double identity_residual = std::numeric_limits<double>::quiet_NaN();
    double weak_residual = std::numeric_limits<double>::quiet_NaN();
    std::string diagnostics;
};

struct DichotomyTable {
    double d = 0.0;
    bool d_converged = false;
    std::vector<DichotomyRow> rows;

    bool predicted_rows_agree() const {
        for (const auto& r : rows) {
            if (r.theorem_prediction != Prediction::NotPredicted && !r.agreement.value_or(false)) return false;
        }
        return true;
    }
};

inline bool agrees(Prediction p, Outcome o) {
    if (p == Prediction::BlowUp) return o == Outcome::BlowUp;
    return o == Outcome::GlobalDecay || o == Outcome::ReachedTEnd;
}

/// Runs the seven cells: J<0; 0<J<d on both branches; J=d on both
/// branches; and two exploratory d<J cells on the mode-2 sine. Cells run
/// concurrently; a cell that fails numerically is recorded as Inconclusive.
/// Trajectories go to out_dir when it is non-empty.
inline DichotomyTable dichotomy_table(const ExperimentConfig& c, const fs::path& out_dir = {}) {
    const Prepared pr = prepare(c);
    DichotomyTable table;
    const auto wd = well_depth_search(pr.grid, pr.params, 1.0, search_options(c, c.experiment.workers));
    table.d = wd.d;
    table.d_converged = wd.converged;
    const double d = wd.d;
    const double etol = c.experiment.critical_tol * std::abs(d);

    struct Cell {
        EnergyClass cls;
        Branch branch;
        EnergyTarget target;
        double fraction;
        Prediction pred;
        bool second_mode;
    };
    const std::vector<Cell> cells{
        {EnergyClass::JNeg, Branch::Unstable, EnergyTarget::Negative, 0.0, Prediction::BlowUp, false},
        {EnergyClass::SubcriticalD, Branch::Stable, EnergyTarget::Subcritical, 0.5, Prediction::GlobalExistence, false},
        {EnergyClass::SubcriticalD, Branch::Unstable, EnergyTarget::Subcritical, 0.5, Prediction::BlowUp, false},
        {EnergyClass::CriticalD, Branch::Stable, EnergyTarget::Critical, 1.0, Prediction::GlobalExistence, false},
        {EnergyClass::CriticalD, Branch::Unstable, EnergyTarget::Critical, 1.0, Prediction::BlowUp, false},
        {EnergyClass::Supercritical, Branch::Stable, EnergyTarget::Subcritical, 1.5, Prediction::NotPredicted, true},
        {EnergyClass::Supercritical, Branch::Unstable, EnergyTarget::Subcritical, 1.5, Prediction::NotPredicted, true},
    };
    const Field base =
        initial_profile(pr.grid, c.initial.family, c.initial.mode, pr.params.p, c.experiment.seed, c.experiment.eigen_tol);
    const Field base2 = initial_profile(pr.grid, InitialFamily::Sine, 2, pr.params.p, c.experiment.seed);

    table.rows = run_indexed(static_cast<int>(cells.size()), c.experiment.workers, [&](int i) {
        const Cell& cell = cells[static_cast<std::size_t>(i)];
        DichotomyRow row;
        row.energy_class = cell.cls;
        row.branch = cell.branch;
        row.theorem_prediction = cell.pred;
        try {
            const Field& b = cell.second_mode ? base2 : base;
            const double tol = cell.target == EnergyTarget::Negative ? 1e-6 : etol;
            auto tr = tune_initial_energy(b, pr.params, cell.target, cell.branch, tol, d, cell.fraction);
            // J(u0) < 0 is pushed 10% past the J = 0 crossing so the cell is not borderline.
            row.amplitude = cell.target == EnergyTarget::Negative ? 1.1 * tr.amplitude : tr.amplitude;
            const Field u0 = b.scaled(row.amplitude);
            const auto rep = energy_report(u0, pr.params);
            row.J0 = rep.J;
            row.I0 = rep.I;
            row.I_sign_at_start = sign_of(rep.I, nehari_tolerance(rep));
            RunRecord rr = simulate(u0, pr.params, c.stepper);
            row.observed_outcome = rr.traj.outcome;
            row.T_star = rr.traj.T_star;
            row.I_sign_flips = rr.traj.I_sign_flips;
            row.identity_residual = rr.identity_residual;
            row.weak_residual = rr.weak_residual;
            row.diagnostics = rr.traj.diagnostics;
            if (!out_dir.empty()) {
                row.trajectory_file = "table_" + std::to_string(i) + "_" + to_string(cell.cls) + "_" +
                                      to_string(cell.branch) + ".csv";
                write_file(out_dir / row.trajectory_file, [&](std::ostream& os) { write_trajectory_csv(os, rr.traj); });
            }
        } catch (const Error& e) {
            row.observed_outcome = Outcome::Inconclusive;
            row.diagnostics = e.what();
        }
        if (cell.pred != Prediction::NotPredicted) row.agreement = agrees(cell.pred, row.observed_outcome);
        return row;
    });
    return table;
}

inline Json to_json(const DichotomyRow& r, double d) {
    return Json{{"energy_class", to_string(r.energy_class)},
                {"branch", to_string(r.branch)},
                {"I_sign_at_start", r.I_sign_at_start},
                {"J0", r.J0},
                {"J0_over_d", d != 0.0 ? Json(r.J0 / d) : Json(nullptr)},
                {"I0", r.I0},
                {"amplitude", r.amplitude},
                {"observed_outcome", to_string(r.observed_outcome)},
                {"T_star", r.T_star ? Json(*r.T_star) : Json(nullptr)},
                {"I_sign_flips", r.I_sign_flips},
                {"theorem_prediction", to_string(r.theorem_prediction)},
                {"agreement", r.agreement ? Json(*r.agreement) : Json("NotPredicted")},
                {"trajectory_file", r.trajectory_file},
                {"energy_identity_residual", num_or_null(r.identity_residual)},
                {"weak_form_residual", num_or_null(r.weak_residual)},
                {"diagnostics", r.diagnostics}};
}

inline void write_dichotomy_csv(std::ostream& os, const DichotomyTable& t) {
    os << "energy_class,branch,I_sign,J0,J0_over_d,I0,amplitude,prediction,observed,T_star,I_sign_flips,agreement,"
          "trajectory_file,identity_residual,weak_residual\n";
    for (const auto& r : t.rows) {
        os << to_string(r.energy_class) << ',' << to_string(r.branch) << ',' << r.I_sign_at_start << ',' << fmt(r.J0)
           << ',' << fmt(r.J0 / t.d) << ',' << fmt(r.I0) << ',' << fmt(r.amplitude) << ','
           << to_string(r.theorem_prediction) << ',' << to_string(r.observed_outcome) << ','
           << (r.T_star ? fmt(*r.T_star) : "") << ',' << r.I_sign_flips << ','
           << (r.agreement ? (*r.agreement ? "true" : "false") : "NotPredicted") << ',' << r.trajectory_file << ','
           << fmt(r.identity_residual) << ',' << fmt(r.weak_residual) << '\n';
    }
}

/// Markdown rendering: one line per cell, disagreements followed by their
/// diagnostic bundle.
inline void render_dichotomy_table(std::ostream& os, const DichotomyTable& t) {
    auto sgn = [](int s) { return s > 0 ? "+" : (s < 0 ? "-" : "0"); };
    os << "well depth d = " << fmt(t.d) << (t.d_converged ? "" : " (search not converged)") << "\n\n";
    os << "| energy | I(u0) | J(u0)/d | prediction | observed | T* | agreement |\n";
    os << "|---|---|---|---|---|---|---|\n";
    for (const auto& r : t.rows) {
        std::string energy;
        switch (r.energy_class) {
            case EnergyClass::JNeg: energy = "J < 0"; break;
            case EnergyClass::SubcriticalD: energy = "0 < J < d"; break;
            case EnergyClass::CriticalD: energy = "J = d"; break;
            case EnergyClass::Supercritical: energy = "d < J"; break;
        }
        char ratio[32];
        std::snprintf(ratio, sizeof ratio, "%.4f", r.J0 / t.d);
        os << "| " << energy << " | " << sgn(r.I_sign_at_start) << " | " << ratio << " | "
           << to_string(r.theorem_prediction) << " | " << to_string(r.observed_outcome) << " | "
           << (r.T_star ? fmt(*r.T_star) : "") << " | "
           << (r.agreement ? (*r.agreement ? "yes" : "NO") : "not predicted") << " |\n";
    }
    for (const auto& r : t.rows) {
        if (!r.agreement || *r.agreement) continue;
        os << "\nDisagreement in " << to_string(r.energy_class) << "/" << to_string(r.branch)
           << ": trajectory " << (r.trajectory_file.empty() ? "(not written)" : r.trajectory_file)
           << ", energy identity residual " << fmt(r.identity_residual) << ", weak-form residual "
           << fmt(r.weak_residual) << ", diagnostics: " << r.diagnostics << '\n';
    }
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepRow {
    double value = 0.0;
    std::string status = "ok";  // ok | config_error | numerical_error
    std::string outcome;
    double J0 = std::numeric_limits<double>::quiet_NaN();
    double I0 = std::numeric_limits<double>::quiet_NaN();
    double T_star = std::numeric_limits<double>::quiet_NaN();
    double final_time = std::numeric_limits<double>::quiet_NaN();
    double final_norm = std::numeric_limits<double>::quiet_NaN();
    double d = std::numeric_limits<double>::quiet_NaN();
    std::string message;
};

inline bool is_sweep_axis(const std::string& a) {
    return a == "amplitude" || a == "q" || a == "m" || a == "p" || a == "delta";
}

/// One cell per value, run concurrently and merged in value order (ties keep
/// input order). Per-cell failures become rows with a status; the sweep
/// itself only fails on an unknown axis or a non-finite value.
inline std::vector<SweepRow> sweep(const ExperimentConfig& c, const std::string& axis, const std::vector<double>& values,
                                   int workers) {
    if (!is_sweep_axis(axis)) throw ConfigError("sweep axis must be one of: amplitude, q, m, p, delta (got '" + axis + "')");
    for (double v : values) {
        if (!std::isfinite(v)) throw ConfigError("sweep values must be finite");
    }
    auto rows = run_indexed(static_cast<int>(values.size()), workers, [&](int i) {
        SweepRow row;
        row.value = values[static_cast<std::size_t>(i)];
        try {
            ExperimentConfig cc = c;
            if (axis == "amplitude") {
                cc.initial.amplitude = row.value;
                cc.initial.target = EnergyTarget::None;
            } else if (axis == "q") {
                const auto* pw = cc.params.source.as_power();
                if (!pw) throw ConfigError("q sweep needs a power-law source");
                try {
                    cc.params.source = SourceSpec::power(pw->k, row.value);
                } catch (const InvalidArgument& e) {
                    throw ConfigError(e.what());
                }
            } else if (axis == "m") {
                cc.params.m = row.value;
            } else if (axis == "p") {
                cc.params.p = row.value;
                cc.params.lambda1p.reset();
            }
            cc.validate();
            const Prepared pr = prepare(cc);
            if (axis == "delta") {
                if (!(row.value > 0.0)) throw ConfigError("delta must be positive");
                row.d = well_depth_search(pr.grid, pr.params, row.value, search_options(cc, 1)).d;
                return row;
            }
            const InitialData init = prepare_initial(cc, pr, 1);
            if (init.d) row.d = *init.d;
            const RunRecord rr = simulate(init.u0, pr.params, cc.stepper);
            row.outcome = to_string(rr.traj.outcome);
            row.J0 = rr.traj.reports.front().J;
            row.I0 = rr.traj.reports.front().I;
            if (rr.traj.T_star) row.T_star = *rr.traj.T_star;
            row.final_time = rr.traj.times.back();
            row.final_norm = rr.traj.norms.back();
            row.message = rr.traj.diagnostics;
        } catch (const ConfigError& e) {
            row.status = "config_error";
            row.message = e.what();
        } catch (const Error& e) {
            row.status = "numerical_error";
            row.message = e.what();
        }
        return row;
    });
    std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) { return a.value < b.value; });
    return rows;
}

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) out += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    return out + "\"";
}

inline void write_sweep_csv(std::ostream& os, const std::string& axis, const std::vector<SweepRow>& rows) {
    os << axis << ",status,outcome,J0,I0,T_star,final_time,final_norm,d,message\n";
    for (const auto& r : rows) {
        os << fmt(r.value) << ',' << r.status << ',' << r.outcome << ',' << fmt(r.J0) << ',' << fmt(r.I0) << ','
           << fmt(r.T_star) << ',' << fmt(r.final_time) << ',' << fmt(r.final_norm) << ',' << fmt(r.d) << ','
           << csv_field(r.message) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Runner

struct RunStatus {
    int exit_code = 0;  // 0 ok, 2 config error, 3 numerical failure
    std::string status;
    std::string message;
    fs::path out_dir;
};

/// True when the sequence rises (weakly) to its maximum and falls after.
inline bool unimodal(const std::vector<double>& v) {
    if (v.empty()) return false;
    const std::size_t k = static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
    for (std::size_t i = 1; i <= k; ++i) {
        if (v[i] < v[i - 1]) return false;
    }
    for (std::size_t i = k + 1; i < v.size(); ++i) {
        if (v[i] > v[i - 1]) return false;
    }
    return true;
}

namespace detail {

inline Json hypotheses_json(const ProblemParams& prm) {
    Json out = Json::object();
    if (prm.source.is_none()) return out;
    for (const auto& r : check_H(prm, 10.0, 400)) {
        out[to_string(r.clause)] = Json{{"holds", r.holds()}, {"violations", r.violations.size()}};
    }
    return out;
}

inline void run_eigen(const ExperimentConfig& c, const fs::path& out, Json& s) {
    const GridPtr g = c.grid.build();
    auto r = first_eigen_p(g, c.params.p, c.experiment.eigen_tol);
    s["lambda1p"] = r.lambda1p;
    s["residual"] = r.residual;
    s["iterations"] = r.iterations;
    if (c.params.p == 2.0) {
        double ref = 0.0;
        for (int a = 0; a < g->dim(); ++a) ref += std::pow(std::numbers::pi / g->extent(a), 2);
        s["lambda1p_continuum_p2"] = ref;
    }
    write_file(out / "eigenfield.csv", [&](std::ostream& os) { write_csv(os, r.eigenfield); });
}

inline int run_single(const ExperimentConfig& c, const fs::path& out, Json& s, RunLog& log) {
    const Prepared pr = prepare(c);
    for (const auto& w : pr.warnings) log("warning: " + w);
    s["lambda1p"] = *pr.params.lambda1p;
    s["hypotheses"] = hypotheses_json(pr.params);
    const InitialData init = prepare_initial(c, pr, c.experiment.workers);
    Json ij{{"amplitude", init.amplitude}};
    if (init.tune) {
        ij["target"] = to_string(c.initial.target);
        ij["target_J"] = init.tune->target;
        ij["achieved_J"] = init.tune->J;
        ij["epsilon_star"] = num_or_null(init.tune->epsilon_star);
    }
    if (init.d) ij["well_depth"] = *init.d;
    s["initial"] = ij;
    log("integrating trajectory");
    const RunRecord rr = simulate(init.u0, pr.params, c.stepper);
    s["run"] = to_json(rr);
    write_file(out / "trajectory.csv", [&](std::ostream& os) { write_trajectory_csv(os, rr.traj); });
    write_file(out / "initial.csv", [&](std::ostream& os) { write_csv(os, init.u0); });
    write_file(out / "final.csv", [&](std::ostream& os) { write_csv(os, rr.traj.final_state); });
    return rr.traj.outcome == Outcome::Inconclusive ? 3 : 0;
}

inline void run_energy_sweep(const ExperimentConfig& c, const fs::path& out, Json& s) {
    const Prepared pr = prepare(c);
    const Field base =
        initial_profile(pr.grid, c.initial.family, c.initial.mode, pr.params.p, c.experiment.seed, c.experiment.eigen_tol);
    std::optional<double> es;
    try {
        es = epsilon_star(base, pr.params);
    } catch (const NoRoot&) {
    }
    const double emax = c.experiment.energy_eps_max > 0.0 ? c.experiment.energy_eps_max
                                                          : (es ? 3.0 * *es : 3.0 * c.initial.amplitude);
    const int n = c.experiment.energy_points;
    int sign_errors = 0;
    write_file(out / "energy_sweep.csv", [&](std::ostream& os) {
        os << "epsilon,J,I\n";
        for (int k = 0; k < n; ++k) {
            const double e = emax * k / (n - 1);
            const auto r = energy_report(base.scaled(e), pr.params);
            if (es && e > 0.0 && std::abs(e - *es) > 1e-9 * *es) sign_errors += (r.I > 0.0) != (e < *es);
            os << fmt(e) << ',' << fmt(r.J) << ',' << fmt(r.I) << '\n';
        }
    });
    s["epsilon_star"] = es ? Json(*es) : Json(nullptr);
    s["J_at_epsilon_star"] = es ? Json(energy_J(base.scaled(*es), pr.params)) : Json(nullptr);
    s["epsilon_max"] = emax;
    s["I_sign_mismatches"] = sign_errors;
}

inline void run_well_profile(const ExperimentConfig& c, const fs::path& out, Json& s) {
    const Prepared pr = prepare(c);
    WellProfileOptions wo;
    wo.delta_points = c.experiment.delta_points;
    wo.search = search_options(c, c.experiment.workers);
    wo.embed_starts = c.experiment.starts;
    const WellProfile wp = well_profile(pr.grid, pr.params, wo);
    write_file(out / "profile.csv", [&](std::ostream& os) { write_profile_csv(os, wp); });
    const std::size_t k =
        static_cast<std::size_t>(std::max_element(wp.d_values.begin(), wp.d_values.end()) - wp.d_values.begin());
    bool lower_ok = true;
    for (std::size_t i = 0; i < wp.d_values.size(); ++i) {
        if (std::isfinite(wp.lower_bounds[i]) && wp.a_values[i] > 0.0) lower_ok = lower_ok && wp.d_values[i] > wp.lower_bounds[i];
    }
    s["lambda1p"] = wp.lambda1p;
    s["C_star"] = wp.C_star;
    s["a_coefficient"] = wp.a_coef;
    s["d_at_1"] = wp.d_peak;
    s["b_estimate"] = wp.b_est;
    s["b_at_upper_bracket"] = wp.b_at_upper;
    s["argmax_delta"] = wp.delta_grid[k];
    s["unimodal"] = unimodal(wp.d_values);
    s["lower_bound_holds"] = lower_ok;
    s["all_converged"] = std::all_of(wp.converged.begin(), wp.converged.end(), [](bool b) { return b; });
}

inline void run_table(const ExperimentConfig& c, const fs::path& out, Json& s) {
    const DichotomyTable t = dichotomy_table(c, out);
    write_file(out / "dichotomy.csv", [&](std::ostream& os) { write_dichotomy_csv(os, t); });
    write_file(out / "dichotomy_table.md", [&](std::ostream& os) { render_dichotomy_table(os, t); });
    s["well_depth"] = t.d;
    s["well_depth_converged"] = t.d_converged;
    Json rows = Json::array();
    for (const auto& r : t.rows) rows.push_back(to_json(r, t.d));
    s["rows"] = rows;
    s["predicted_rows_agree"] = t.predicted_rows_agree();
}

template <class Body>
RunStatus run_guarded(const ExperimentConfig& c, const fs::path& out, const std::string& what, Body&& body) {
    fs::create_directories(out);
    RunLog log(out / "run.log");
    log("start " + what);
    Json s;
    s["kind"] = what;
    s["config"] = to_json(c);
    RunStatus st;
    st.out_dir = out;
    try {
        st.exit_code = body(s, log);
        st.status = st.exit_code == 0 ? "ok" : "inconclusive";
    } catch (const ConfigError& e) {
        st = {2, "config_error", e.what(), out};
    } catch (const std::exception& e) {
        st = {3, "numerical_failure", e.what(), out};
    }
    s["status"] = st.status;
    if (!st.message.empty()) s["message"] = st.message;
    log("finished with status " + st.status + (st.message.empty() ? "" : ": " + st.message));
    write_file(out / "summary.json", [&](std::ostream& os) { os << s.dump(2) << '\n'; });
    write_file(out / "manifest.json", [&](std::ostream& os) { os << build_manifest(out).dump(2) << '\n'; });
    return st;
}

}  // namespace detail

/// Runs the configured experiment under out_dir. summary.json and
/// manifest.json are always written; timestamps go to run.log only.
inline RunStatus run(const ExperimentConfig& c, const fs::path& out_dir) {
    return detail::run_guarded(c, out_dir, to_string(c.experiment.kind), [&](Json& s, RunLog& log) {
        switch (c.experiment.kind) {
            case ExperimentKind::EigenOnly: detail::run_eigen(c, out_dir, s); return 0;
            case ExperimentKind::SingleRun: return detail::run_single(c, out_dir, s, log);
            case ExperimentKind::EnergySweep: detail::run_energy_sweep(c, out_dir, s); return 0;
            case ExperimentKind::WellProfile: detail::run_well_profile(c, out_dir, s); return 0;
            case ExperimentKind::DichotomyTable: detail::run_table(c, out_dir, s); return 0;
        }
        return 0;
    });
}

inline RunStatus run_sweep(const ExperimentConfig& c, const std::string& axis, const std::vector<double>& values,
                           const fs::path& out_dir) {
    return detail::run_guarded(c, out_dir, "sweep", [&](Json& s, RunLog& log) {
        s["axis"] = axis;
        s["values"] = values;
        const auto rows = sweep(c, axis, values, c.experiment.workers);
        write_file(out_dir / "sweep.csv", [&](std::ostream& os) { write_sweep_csv(os, axis, rows); });
        int failed = 0;
        for (const auto& r : rows) failed += r.status != "ok";
        s["cells"] = rows.size();
        s["failed_cells"] = failed;
        log("sweep done, " + std::to_string(failed) + " failed cells");
        return 0;
    });
}

}  // namespace pmwell
