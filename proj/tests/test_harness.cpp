#include <pmwell/harness.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <numbers>
#include <sstream>
#include <sys/wait.h>

using namespace pmwell;

namespace {

constexpr double kPi = std::numbers::pi;

fs::path scratch(const std::string& name) {
    fs::path p = fs::path(::testing::TempDir()) / ("pmwell_" + name);
    fs::remove_all(p);
    return p;
}

const char* kCubic = R"(
[grid]
dim = 1
extents = [1.0]
cells = [80]

[params]
m = 1.0
p = 2.0
alpha = 3.5
beta = 0.1
gamma = 4.0
source = { kind = "power", k = 1.0, q = 3.0 }

[stepper]
dt_init = 1e-4
dt_max = 1e-2
t_end = 10.0

[experiment]
starts = 4
)";

ExperimentConfig cubic_config() { return parse_config(kCubic); }

int run_cli(const std::string& args) {
    const std::string cmd = std::string(PMWELL_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string cfg_path(const char* name) { return std::string(PMWELL_SOURCE_DIR) + "/configs/" + name; }

}  // namespace

TEST(Config, Defaults) {
    auto c = parse_config("");
    EXPECT_EQ(c.grid.dim, 1);
    EXPECT_EQ(c.params.m, 1.0);
    EXPECT_EQ(c.experiment.kind, ExperimentKind::SingleRun);
    EXPECT_EQ(c.initial.family, InitialFamily::Sine);
    EXPECT_EQ(c.stepper.scheme, Scheme::SemiImplicit);
    ASSERT_NE(c.params.source.as_power(), nullptr);
}

TEST(Config, ParsesAllSections) {
    auto c = parse_config(R"(
[grid]
dim = 2
extents = [1.0, 2.0]
cells = [10, 20]
[params]
m = 2
p = 3.0
lambda1p = 12.5
[source]
kind = "tabulated"
x = [0.0, 1.0]
y = [0.0, 2.0]
[initial]
family = "bump"
target = "critical"
branch = "unstable"
[stepper]
scheme = "explicit"
picard_max = 7
[experiment]
kind = "dichotomy_table"
seed = 42
workers = 3
)");
    EXPECT_EQ(c.grid.cells[1], 20);
    EXPECT_EQ(c.params.m, 2.0);
    EXPECT_EQ(*c.params.lambda1p, 12.5);
    EXPECT_EQ(c.params.source.as_power(), nullptr);
    EXPECT_EQ(c.initial.family, InitialFamily::Bump);
    EXPECT_EQ(c.initial.target, EnergyTarget::Critical);
    EXPECT_EQ(c.initial.branch, Branch::Unstable);
    EXPECT_EQ(c.stepper.scheme, Scheme::Explicit);
    EXPECT_EQ(c.stepper.picard_max, 7);
    EXPECT_EQ(c.experiment.kind, ExperimentKind::DichotomyTable);
    EXPECT_EQ(c.experiment.seed, 42u);
}

TEST(Config, Rejections) {
    auto msg = [](const char* text) {
        try {
            parse_config(text);
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string("accepted");
    };
    EXPECT_NE(msg("[grid]\nbogus = 1\n").find("unknown key 'bogus'"), std::string::npos);
    EXPECT_NE(msg("[extra]\n").find("unknown section"), std::string::npos);
    EXPECT_NE(msg("[grid]\ndim = \"one\"\n").find("grid.dim"), std::string::npos);
    EXPECT_NE(msg("[experiment]\nkind = \"other\"\n").find("one of"), std::string::npos);
    EXPECT_NE(msg("[grid]\ncells = [2]\n").find("grid"), std::string::npos);
    EXPECT_NE(msg("[initial]\namplitude = -1.0\n").find("amplitude"), std::string::npos);
    EXPECT_NE(msg("[stepper]\ndt_min = 1.0\n").find("dt_min"), std::string::npos);
    EXPECT_NE(msg("[params]\nsource = { kind = \"power\" }\n[source]\nkind = \"none\"\n").find("both"), std::string::npos);
    EXPECT_NE(msg("[source]\nkind = \"power\"\nq = 0.5\n").find("source"), std::string::npos);
    EXPECT_NE(msg("[grid\n").find(":1:"), std::string::npos);
}

TEST(Initial, Families) {
    auto g = Grid::build(1, {1.0}, {100});
    auto s = initial_profile(g, InitialFamily::Sine, 1, 2.0, 0);
    EXPECT_NEAR(s.max_abs(), 1.0, 1e-12);
    auto s2 = initial_profile(g, InitialFamily::Sine, 2, 2.0, 0);
    EXPECT_GE(s2.min_value(), 0.0);
    EXPECT_NEAR(s2[50], 0.0, 1e-12);
    auto e = initial_profile(g, InitialFamily::Eigen, 1, 2.0, 0);
    EXPECT_NEAR(e.max_abs(), 1.0, 1e-14);
    auto b1 = initial_profile(g, InitialFamily::Bump, 1, 2.0, 3);
    auto b2 = initial_profile(g, InitialFamily::Bump, 1, 2.0, 3);
    auto b3 = initial_profile(g, InitialFamily::Bump, 1, 2.0, 4);
    auto vec = [](const Field& f) { return std::vector<double>(f.values().begin(), f.values().end()); };
    EXPECT_EQ(vec(b1), vec(b2));
    EXPECT_NE(vec(b1), vec(b3));
    EXPECT_GE(b1.min_value(), 0.0);
    EXPECT_EQ(b1[0], 0.0);
    EXPECT_EQ(b1[100], 0.0);
    EXPECT_NEAR(b1.max_abs(), 1.0, 1e-14);
}

TEST(Tune, NegativeMatchesClosedForm) {
    auto g = Grid::build(1, {1.0}, {200});
    auto c = cubic_config();
    auto u = initial_profile(g, InitialFamily::Sine, 1, 2.0, 0);
    auto r = tune_initial_energy(u, c.params, EnergyTarget::Negative, Branch::Unstable, 1e-8);
    // J(A u) = A^2 G/2 - A^4 S/4 on the grid, zero at A^2 = 2G/S
    const double G = grad_pm_norm(u, 1.0, 2.0);
    const double S = integrate_map(u, [](double v) { return v * v * v * v; });
    EXPECT_NEAR(r.amplitude, std::sqrt(2.0 * G / S), 1e-7 * r.amplitude);
    EXPECT_NEAR(r.amplitude, std::sqrt(8.0 * kPi * kPi / 3.0), 1e-3 * r.amplitude);
    EXPECT_LT(r.J, 0.0);
    EXPECT_LT(r.I, 0.0);
    EXPECT_THROW(tune_initial_energy(u, c.params, EnergyTarget::Negative, Branch::Stable, 1e-8), TargetUnreachable);
}

TEST(Tune, EnergyTargetsOnBothBranches) {
    auto c = cubic_config();
    auto g = c.grid.build();
    auto pr = prepare(c);
    const double d = well_depth_search(g, pr.params, 1.0, search_options(c, 1)).d;
    auto u = initial_profile(g, InitialFamily::Sine, 1, 2.0, 0);
    const double es = epsilon_star(u, pr.params);
    const double tol = 1e-3 * d;

    auto sub = tune_initial_energy(u, pr.params, EnergyTarget::Subcritical, Branch::Stable, tol, d, 0.5);
    EXPECT_LT(sub.amplitude, es);
    EXPECT_NEAR(sub.J, 0.5 * d, tol);
    EXPECT_GT(sub.I, 0.0);

    auto subu = tune_initial_energy(u, pr.params, EnergyTarget::Subcritical, Branch::Unstable, tol, d, 0.5);
    EXPECT_GT(subu.amplitude, es);
    EXPECT_NEAR(subu.J, 0.5 * d, tol);
    EXPECT_LT(subu.I, 0.0);

    for (Branch b : {Branch::Stable, Branch::Unstable}) {
        auto cr = tune_initial_energy(u, pr.params, EnergyTarget::Critical, b, tol, d);
        EXPECT_LE(std::abs(cr.J - d), tol);
        EXPECT_EQ(cr.I > 0.0, b == Branch::Stable);
    }

    // the config-level entry point reaches the same amplitude
    c.initial.fraction = 0.5;
    auto viaconfig = tune_initial_energy(c, EnergyTarget::Subcritical, tol);
    EXPECT_NEAR(viaconfig.amplitude, sub.amplitude, 1e-12);
}

TEST(Tune, UnreachableReportsRange) {
    auto c = cubic_config();
    c.params.sigma = 10.0;
    auto g = c.grid.build();
    auto u = initial_profile(g, InitialFamily::Sine, 1, 2.0, 0);
    try {
        tune_initial_energy(u, c.params, EnergyTarget::Subcritical, Branch::Stable, 1e-3, 10.0, 0.5);
        FAIL() << "expected TargetUnreachable";
    } catch (const TargetUnreachable& e) {
        EXPECT_NEAR(e.attainable_lo(), 10.0, 1e-12);
        EXPECT_GT(e.attainable_hi(), e.attainable_lo());
    }
    auto h = cubic_config();
    h.params.source = SourceSpec::power(1.0, 1.0);
    h.params.alpha = 3.5;
    EXPECT_THROW(tune_initial_energy(u, h.params, EnergyTarget::Critical, Branch::Unstable, 1e-3, 1.0), TargetUnreachable);
}

TEST(Dichotomy, PredictedCellsAgree) {
    auto c = cubic_config();
    const auto out = scratch("table");
    fs::create_directories(out);
    auto t = dichotomy_table(c, out);
    ASSERT_EQ(t.rows.size(), 7u);
    EXPECT_TRUE(t.predicted_rows_agree());
    int predicted = 0;
    for (const auto& r : t.rows) {
        EXPECT_EQ(r.I_sign_flips, 0);
        EXPECT_TRUE(fs::exists(out / r.trajectory_file));
        if (r.theorem_prediction == Prediction::NotPredicted) {
            EXPECT_FALSE(r.agreement.has_value());
            EXPECT_EQ(r.energy_class, EnergyClass::Supercritical);
            EXPECT_GT(r.J0, t.d);
            continue;
        }
        ++predicted;
        if (r.energy_class == EnergyClass::CriticalD) {
            EXPECT_LE(std::abs(r.J0 - t.d), 1e-3 * t.d);
        }
        if (r.energy_class == EnergyClass::JNeg) {
            EXPECT_LT(r.J0, 0.0);
        }
        if (r.energy_class == EnergyClass::SubcriticalD) {
            EXPECT_GT(r.J0, 0.0);
            EXPECT_LT(r.J0, t.d);
        }
    }
    EXPECT_EQ(predicted, 5);
    std::ostringstream csv;
    write_dichotomy_csv(csv, t);
    const std::string text = csv.str();
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 8);
}

TEST(Dichotomy, DisagreementCarriesDiagnostics) {
    DichotomyTable t;
    t.d = 2.0;
    DichotomyRow r;
    r.energy_class = EnergyClass::SubcriticalD;
    r.theorem_prediction = Prediction::GlobalExistence;
    r.observed_outcome = Outcome::BlowUp;
    r.agreement = false;
    r.trajectory_file = "table_1.csv";
    r.identity_residual = 0.25;
    r.weak_residual = 0.125;
    r.diagnostics = "norm passed the blow-up threshold";
    t.rows.push_back(r);
    std::ostringstream os;
    render_dichotomy_table(os, t);
    const std::string s = os.str();
    EXPECT_NE(s.find("| NO |"), std::string::npos);
    EXPECT_NE(s.find("table_1.csv"), std::string::npos);
    EXPECT_NE(s.find("0.25"), std::string::npos);
    EXPECT_NE(s.find("0.125"), std::string::npos);
    EXPECT_NE(s.find("blow-up threshold"), std::string::npos);
    EXPECT_FALSE(t.predicted_rows_agree());
}

TEST(Sweep, EmptyValuesGiveHeaderOnly) {
    std::ostringstream os;
    write_sweep_csv(os, "q", sweep(cubic_config(), "q", {}, 2));
    EXPECT_EQ(os.str(), "q,status,outcome,J0,I0,T_star,final_time,final_norm,d,message\n");
}

TEST(Sweep, AmplitudeSortedDeterministicAndFlips) {
    auto c = cubic_config();
    c.stepper.t_end = 5.0;
    const std::vector<double> vals{8.0, 1.0, 3.0, 6.0};
    auto a = sweep(c, "amplitude", vals, 1);
    auto b = sweep(c, "amplitude", vals, 2);
    std::ostringstream sa, sb;
    write_sweep_csv(sa, "amplitude", a);
    write_sweep_csv(sb, "amplitude", b);
    EXPECT_EQ(sa.str(), sb.str());
    ASSERT_EQ(a.size(), 4u);
    EXPECT_EQ(a[0].value, 1.0);
    EXPECT_EQ(a[3].value, 8.0);
    EXPECT_EQ(a[0].outcome, "GlobalDecay");
    EXPECT_EQ(a[1].outcome, "GlobalDecay");
    EXPECT_EQ(a[2].outcome, "BlowUp");
    EXPECT_EQ(a[3].outcome, "BlowUp");
}

TEST(Sweep, FailuresBecomeRows) {
    auto c = cubic_config();
    auto rows = sweep(c, "m", {0.5}, 1);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].status, "config_error");
    EXPECT_NE(rows[0].message.find("m >= 1"), std::string::npos);
    EXPECT_THROW(sweep(c, "zeta", {1.0}, 1), ConfigError);
    EXPECT_THROW(sweep(c, "q", {std::nan("")}, 1), ConfigError);
}

TEST(Sweep, DeltaReproducesProfileShape) {
    auto c = cubic_config();
    auto rows = sweep(c, "delta", {0.25, 0.5, 1.0, 1.5, 1.75}, 1);
    std::vector<double> d;
    for (const auto& r : rows) d.push_back(r.d);
    EXPECT_TRUE(unimodal(d));
    EXPECT_EQ(std::max_element(d.begin(), d.end()) - d.begin(), 2);
}

TEST(Unimodal, Shapes) {
    EXPECT_TRUE(unimodal({1, 2, 3, 2, 1}));
    EXPECT_TRUE(unimodal({3, 2, 1}));
    EXPECT_FALSE(unimodal({1, 3, 2, 3}));
    EXPECT_FALSE(unimodal({}));
}

TEST(Files, Sha256KnownVector) {
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    EXPECT_EQ(fmt(0.1), "0.1");
    EXPECT_EQ(fmt(std::nan("")), "");
}

TEST(Run, EigenOnlySummary) {
    auto c = parse_config("[experiment]\nkind = \"eigen_only\"\n[grid]\ncells = [200]\n");
    const auto out = scratch("eigen");
    auto st = run(c, out);
    EXPECT_EQ(st.exit_code, 0);
    auto s = Json::parse(read_file(out / "summary.json"));
    EXPECT_NEAR(s["lambda1p"].get<double>(), kPi * kPi, 1e-3 * kPi * kPi);
    EXPECT_TRUE(fs::exists(out / "eigenfield.csv"));
}

TEST(Run, InvalidBetaExitsTwoAndStillWritesSummary) {
    auto c = cubic_config();
    c.params.beta = 50.0;
    const auto out = scratch("invalid");
    auto st = run(c, out);
    EXPECT_EQ(st.exit_code, 2);
    EXPECT_NE(st.message.find("beta"), std::string::npos);
    auto s = Json::parse(read_file(out / "summary.json"));
    EXPECT_EQ(s["status"], "config_error");
}

TEST(Run, HeatSingleRunArtifactsAndDeterminism) {
    auto c = parse_config(R"(
[grid]
cells = [100]
[source]
kind = "none"
[stepper]
dt_init = 1e-4
dt_max = 1e-2
t_end = 5.0
)");
    const auto o1 = scratch("heat1"), o2 = scratch("heat2");
    ASSERT_EQ(run(c, o1).exit_code, 0);
    ASSERT_EQ(run(c, o2).exit_code, 0);
    const std::string s1 = read_file(o1 / "summary.json");
    EXPECT_EQ(s1, read_file(o2 / "summary.json"));
    auto s = Json::parse(s1);
    EXPECT_EQ(s["run"]["outcome"], "GlobalDecay");
    EXPECT_EQ(s["run"]["decay"]["mode"], "Exponential");
    EXPECT_TRUE(fs::exists(o1 / "trajectory.csv"));

    auto m = Json::parse(read_file(o1 / "manifest.json"));
    bool saw_traj = false;
    for (const auto& f : m["files"]) {
        const std::string path = f["path"];
        EXPECT_NE(path, "manifest.json");
        const std::string bytes = read_file(o1 / path);
        EXPECT_EQ(f["sha256"], sha256_hex(bytes));
        EXPECT_EQ(f["bytes"].get<std::size_t>(), bytes.size());
        saw_traj = saw_traj || path == "trajectory.csv";
    }
    EXPECT_TRUE(saw_traj);
}

TEST(Run, InconclusiveStillWritesSummary) {
    auto c = cubic_config();
    c.initial.amplitude = 1.0;
    c.stepper.max_steps = 3;
    const auto out = scratch("inconclusive");
    auto st = run(c, out);
    EXPECT_EQ(st.exit_code, 3);
    auto s = Json::parse(read_file(out / "summary.json"));
    EXPECT_EQ(s["run"]["outcome"], "Inconclusive");
}

TEST(Cli, ExitCodes) {
    const auto out = scratch("cli");
    EXPECT_EQ(run_cli("eigen " + cfg_path("eigen_1d.toml") + " --out " + (out / "e").string()), 0);
    EXPECT_TRUE(fs::exists(out / "e" / "summary.json"));
    EXPECT_EQ(run_cli("run " + cfg_path("invalid_beta.toml") + " --out " + (out / "bad").string()), 2);
    EXPECT_EQ(run_cli("run /nonexistent.toml"), 2);
    EXPECT_EQ(run_cli("frobnicate"), 2);
    EXPECT_EQ(run_cli("sweep " + cfg_path("cubic_blowup.toml") + " --axis nope --values 1"), 2);
    EXPECT_EQ(run_cli("sweep " + cfg_path("cubic_blowup.toml") + " --axis q --values '' --out " + (out / "sw").string()),
              0);
    EXPECT_EQ(read_file(out / "sw" / "sweep.csv"), "q,status,outcome,J0,I0,T_star,final_time,final_norm,d,message\n");
}

TEST(Cli, SeedAndWorkersOverride) {
    const auto out = scratch("cli_seed");
    ASSERT_EQ(run_cli("run " + cfg_path("subcritical_stable.toml") + " --seed 11 --workers 2 --out " + out.string()), 0);
    auto s = Json::parse(read_file(out / "summary.json"));
    EXPECT_EQ(s["config"]["experiment"]["seed"], 11);
    EXPECT_EQ(s["config"]["experiment"]["workers"], 2);
    EXPECT_EQ(s["run"]["outcome"], "GlobalDecay");
}
