#pragma once

// Experiment configuration: a TOML document with sections [grid], [params],
// [source], [initial], [stepper], [experiment]. Every key is optional and has
// the default shown in README; unknown sections or keys are errors.

#include <pmwell/error.hpp>
#include <pmwell/evolve.hpp>
#include <pmwell/mesh.hpp>
#include <pmwell/nonlinearity.hpp>

#include <toml.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace pmwell {

enum class ExperimentKind { SingleRun, EnergySweep, WellProfile, EigenOnly, DichotomyTable };
enum class InitialFamily { Sine, Eigen, Bump };
enum class EnergyTarget { None, Negative, Subcritical, Critical };
enum class Branch { Stable, Unstable };

inline const char* to_string(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::SingleRun: return "single_run";
        case ExperimentKind::EnergySweep: return "energy_sweep";
        case ExperimentKind::WellProfile: return "well_profile";
        case ExperimentKind::EigenOnly: return "eigen_only";
        case ExperimentKind::DichotomyTable: return "dichotomy_table";
    }
    return "?";
}

inline const char* to_string(InitialFamily f) {
    switch (f) {
        case InitialFamily::Sine: return "sine";
        case InitialFamily::Eigen: return "eigen";
        case InitialFamily::Bump: return "bump";
    }
    return "?";
}

inline const char* to_string(EnergyTarget t) {
    switch (t) {
        case EnergyTarget::None: return "none";
        case EnergyTarget::Negative: return "negative";
        case EnergyTarget::Subcritical: return "subcritical";
        case EnergyTarget::Critical: return "critical";
    }
    return "?";
}

inline const char* to_string(Branch b) { return b == Branch::Stable ? "stable" : "unstable"; }

struct GridSpec {
    int dim = 1;
    std::vector<double> extents{1.0};
    std::vector<int> cells{100};

    GridPtr build() const {
        try {
            return build_grid(dim, extents, cells);
        } catch (const InvalidArgument& e) {
            throw ConfigError(std::string("grid: ") + e.what());
        }
    }
};

struct InitialSpec {
    InitialFamily family = InitialFamily::Sine;
    double amplitude = 1.0;
    int mode = 1;  // sine family: frequency along the first axis
    EnergyTarget target = EnergyTarget::None;
    double fraction = 0.5;  // Subcritical: J(u0) = fraction * d
    Branch branch = Branch::Stable;
    double tol = -1.0;  // negative: 1e-3 d for energy targets, 1e-6 relative amplitude for Negative
};

struct ExperimentSpec {
    ExperimentKind kind = ExperimentKind::SingleRun;
    std::string output_dir = "out";
    std::uint64_t seed = 0;
    int workers = 1;
    int starts = 8;            // multi-start count for well-depth and embedding searches
    double search_tol = 1e-10;
    int search_max_iter = 3000;
    double eigen_tol = 1e-10;
    int delta_points = 25;
    int energy_points = 201;   // EnergySweep samples along the ray
    double energy_eps_max = -1.0;  // negative: 3 eps*
    double critical_tol = 1e-3;    // relative to d
};

struct ExperimentConfig {
    GridSpec grid;
    ProblemParams params;
    InitialSpec initial;
    StepperConfig stepper;
    ExperimentSpec experiment;

    /// Structural checks that need no numerics. Parameter clauses that depend
    /// on lambda_{1,p} are checked by the runner once it is known.
    void validate() const {
        if (!(initial.amplitude > 0.0)) throw ConfigError("initial.amplitude > 0 violated");
        if (initial.mode < 1) throw ConfigError("initial.mode >= 1 violated");
        if (initial.target == EnergyTarget::Subcritical && !(initial.fraction < 1.0)) {
            throw ConfigError("initial.fraction < 1 violated");
        }
        if (experiment.workers < 1) throw ConfigError("experiment.workers >= 1 violated");
        if (experiment.starts < 1) throw ConfigError("experiment.starts >= 1 violated");
        if (experiment.delta_points < 3) throw ConfigError("experiment.delta_points >= 3 violated");
        if (experiment.energy_points < 2) throw ConfigError("experiment.energy_points >= 2 violated");
        if (!(experiment.critical_tol > 0.0)) throw ConfigError("experiment.critical_tol > 0 violated");
        if (!(experiment.search_tol > 0.0) || !(experiment.eigen_tol > 0.0)) {
            throw ConfigError("experiment tolerances must be positive");
        }
        stepper.validate();
        grid.build();
    }
};

namespace detail {

class TableReader {
public:
    TableReader(const toml::table* t, std::string section, std::set<std::string> allowed)
        : t_(t), section_(std::move(section)) {
        if (!t_) return;
        for (auto&& [k, v] : *t_) {
            (void)v;
            if (!allowed.count(std::string(k.str()))) {
                throw ConfigError("unknown key '" + std::string(k.str()) + "' in [" + section_ + "]");
            }
        }
    }

    bool has(const char* key) const { return t_ && t_->contains(key); }

    void get(const char* key, double& out) const {
        if (!has(key)) return;
        auto v = (*t_)[key].value<double>();
        if (!v) bad(key, "a number");
        out = *v;
    }

    void get(const char* key, int& out) const {
        if (!has(key)) return;
        auto v = (*t_)[key].value<std::int64_t>();
        if (!v || !(*t_)[key].is_integer()) bad(key, "an integer");
        out = static_cast<int>(*v);
    }

    void get(const char* key, long& out) const {
        if (!has(key)) return;
        auto v = (*t_)[key].value<std::int64_t>();
        if (!v || !(*t_)[key].is_integer()) bad(key, "an integer");
        out = static_cast<long>(*v);
    }

    void get(const char* key, std::uint64_t& out) const {
        if (!has(key)) return;
        auto v = (*t_)[key].value<std::int64_t>();
        if (!v || !(*t_)[key].is_integer() || *v < 0) bad(key, "a nonnegative integer");
        out = static_cast<std::uint64_t>(*v);
    }

    void get(const char* key, std::string& out) const {
        if (!has(key)) return;
        auto v = (*t_)[key].value<std::string>();
        if (!v) bad(key, "a string");
        out = *v;
    }

    void get(const char* key, std::vector<double>& out) const {
        if (!has(key)) return;
        const auto* arr = (*t_)[key].as_array();
        if (!arr) bad(key, "an array of numbers");
        out.clear();
        for (auto&& el : *arr) {
            auto v = el.value<double>();
            if (!v) bad(key, "an array of numbers");
            out.push_back(*v);
        }
    }

    void get(const char* key, std::vector<int>& out) const {
        if (!has(key)) return;
        const auto* arr = (*t_)[key].as_array();
        if (!arr) bad(key, "an array of integers");
        out.clear();
        for (auto&& el : *arr) {
            if (!el.is_integer()) bad(key, "an array of integers");
            out.push_back(static_cast<int>(*el.value<std::int64_t>()));
        }
    }

    template <class E>
    void get_enum(const char* key, E& out, std::initializer_list<std::pair<const char*, E>> names) const {
        if (!has(key)) return;
        std::string s;
        get(key, s);
        std::string list;
        for (auto& [n, e] : names) {
            if (s == n) {
                out = e;
                return;
            }
            list += list.empty() ? n : std::string(", ") + n;
        }
        throw ConfigError(section_ + "." + key + " must be one of: " + list + " (got '" + s + "')");
    }

private:
    [[noreturn]] void bad(const char* key, const char* what) const {
        throw ConfigError(section_ + "." + key + " must be " + what);
    }

    const toml::table* t_;
    std::string section_;
};

inline SourceSpec parse_source(const toml::table* t, const std::string& where) {
    TableReader r(t, where, {"kind", "k", "q", "x", "y"});
    std::string kind = "power";
    double k = 1.0, q = 3.0;
    std::vector<double> x, y;
    r.get("kind", kind);
    r.get("k", k);
    r.get("q", q);
    r.get("x", x);
    r.get("y", y);
    try {
        if (kind == "power") return SourceSpec::power(k, q);
        if (kind == "tabulated") return SourceSpec::tabulated(x, y);
        if (kind == "none") return SourceSpec::none();
    } catch (const InvalidArgument& e) {
        throw ConfigError(where + ": " + e.what());
    }
    throw ConfigError(where + ".kind must be one of: power, tabulated, none (got '" + kind + "')");
}

}  // namespace detail

inline ExperimentConfig parse_config(std::string_view text, const std::string& source_name = "<config>") {
    toml::table doc;
    try {
        doc = toml::parse(text, source_name);
    } catch (const toml::parse_error& e) {
        std::ostringstream os;
        os << source_name << ":" << e.source().begin.line << ": " << e.description();
        throw ConfigError(os.str());
    }
    for (auto&& [k, v] : doc) {
        const std::string key(k.str());
        static const std::set<std::string> sections{"grid", "params", "source", "initial", "stepper", "experiment"};
        if (!sections.count(key)) throw ConfigError("unknown section [" + key + "]");
        if (!v.is_table()) throw ConfigError("'" + key + "' must be a section");
    }

    ExperimentConfig c;
    {
        detail::TableReader r(doc["grid"].as_table(), "grid", {"dim", "extents", "cells"});
        r.get("dim", c.grid.dim);
        r.get("extents", c.grid.extents);
        r.get("cells", c.grid.cells);
    }
    {
        const toml::table* t = doc["params"].as_table();
        detail::TableReader r(t, "params", {"m", "p", "sigma", "alpha", "beta", "gamma", "lambda1p", "source"});
        auto& p = c.params;
        r.get("m", p.m);
        r.get("p", p.p);
        r.get("sigma", p.sigma);
        r.get("alpha", p.alpha);
        r.get("beta", p.beta);
        r.get("gamma", p.gamma);
        if (r.has("lambda1p")) {
            double l = 0.0;
            r.get("lambda1p", l);
            p.lambda1p = l;
        }
        if (t && t->contains("source")) {
            if (doc.contains("source")) throw ConfigError("source given both inline in [params] and as [source]");
            const auto* s = (*t)["source"].as_table();
            if (!s) throw ConfigError("params.source must be an inline table");
            p.source = detail::parse_source(s, "params.source");
        }
    }
    if (const auto* s = doc["source"].as_table()) c.params.source = detail::parse_source(s, "source");
    {
        detail::TableReader r(doc["initial"].as_table(), "initial",
                              {"family", "amplitude", "mode", "target", "fraction", "branch", "tol"});
        auto& i = c.initial;
        r.get_enum("family", i.family,
                   {{"sine", InitialFamily::Sine}, {"eigen", InitialFamily::Eigen}, {"bump", InitialFamily::Bump}});
        r.get("amplitude", i.amplitude);
        r.get("mode", i.mode);
        r.get_enum("target", i.target,
                   {{"none", EnergyTarget::None},
                    {"negative", EnergyTarget::Negative},
                    {"subcritical", EnergyTarget::Subcritical},
                    {"critical", EnergyTarget::Critical}});
        r.get("fraction", i.fraction);
        r.get_enum("branch", i.branch, {{"stable", Branch::Stable}, {"unstable", Branch::Unstable}});
        r.get("tol", i.tol);
    }
    {
        detail::TableReader r(doc["stepper"].as_table(), "stepper",
                              {"dt_init", "dt_min", "dt_max", "t_end", "blowup_norm_threshold", "decay_norm_threshold",
                               "eps_reg", "scheme", "picard_tol", "picard_max", "energy_change_limit", "ep_offset",
                               "max_steps"});
        auto& s = c.stepper;
        r.get("dt_init", s.dt_init);
        r.get("dt_min", s.dt_min);
        r.get("dt_max", s.dt_max);
        r.get("t_end", s.t_end);
        r.get("blowup_norm_threshold", s.blowup_norm_threshold);
        r.get("decay_norm_threshold", s.decay_norm_threshold);
        r.get("eps_reg", s.eps_reg);
        r.get_enum("scheme", s.scheme, {{"semi_implicit", Scheme::SemiImplicit}, {"explicit", Scheme::Explicit}});
        r.get("picard_tol", s.picard_tol);
        r.get("picard_max", s.picard_max);
        r.get("energy_change_limit", s.energy_change_limit);
        r.get("ep_offset", s.ep_offset);
        r.get("max_steps", s.max_steps);
    }
    {
        detail::TableReader r(doc["experiment"].as_table(), "experiment",
                              {"kind", "output_dir", "seed", "workers", "starts", "search_tol", "search_max_iter",
                               "eigen_tol", "delta_points", "energy_points", "energy_eps_max", "critical_tol"});
        auto& e = c.experiment;
        r.get_enum("kind", e.kind,
                   {{"single_run", ExperimentKind::SingleRun},
                    {"energy_sweep", ExperimentKind::EnergySweep},
                    {"well_profile", ExperimentKind::WellProfile},
                    {"eigen_only", ExperimentKind::EigenOnly},
                    {"dichotomy_table", ExperimentKind::DichotomyTable}});
        r.get("output_dir", e.output_dir);
        r.get("seed", e.seed);
        r.get("workers", e.workers);
        r.get("starts", e.starts);
        r.get("search_tol", e.search_tol);
        r.get("search_max_iter", e.search_max_iter);
        r.get("eigen_tol", e.eigen_tol);
        r.get("delta_points", e.delta_points);
        r.get("energy_points", e.energy_points);
        r.get("energy_eps_max", e.energy_eps_max);
        r.get("critical_tol", e.critical_tol);
    }
    c.validate();
    return c;
}

inline ExperimentConfig parse_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.string());
}

}  // namespace pmwell
