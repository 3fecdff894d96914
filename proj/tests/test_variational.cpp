#include <pmwell/variational.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

using namespace pmwell;

namespace {

constexpr double kPi = std::numbers::pi;

ProblemParams cubic() {
    ProblemParams p;
    p.m = 1.0;
    p.p = 2.0;
    p.sigma = 0.0;
    p.alpha = 3.5;
    p.beta = 0.1;
    p.gamma = 4.0;
    p.source = SourceSpec::power(1.0, 3.0);
    return p;
}

Field sine(const GridPtr& g) {
    return Field::sample_interior(g, [](double x, double) { return std::sin(kPi * x); });
}

// d(delta) / d(1) for f = k u^q with sigma = 0: the minimizing direction does
// not depend on delta, and along it d scales like
// (1/(pm) - delta/(m+q)) delta^{pm/(m+q-pm)}.
double power_profile_shape(const ProblemParams& prm, double delta) {
    const double q = prm.source.as_power()->q;
    const double m = prm.m, pm = prm.pm();
    const double s = pm / (m + q - pm);
    return (1.0 / pm - delta / (m + q)) * std::pow(delta, s) / (1.0 / pm - 1.0 / (m + q));
}

}  // namespace

TEST(Eigen, UnitInterval) {
    auto g = Grid::build(1, {1.0}, {200});
    auto r = first_eigen_p(g, 2.0, 1e-10, 5000);
    EXPECT_NEAR(r.lambda1p / (kPi * kPi), 1.0, 1e-3);
    for (std::size_t n : g->interior()) EXPECT_GT(r.eigenfield[n], 0.0);
    EXPECT_NEAR(lq_norm(r.eigenfield, 2.0), 1.0, 1e-12);
    const double rq = grad_pm_norm(r.eigenfield, 1.0, 2.0) / std::pow(lq_norm(r.eigenfield, 2.0), 2.0);
    EXPECT_NEAR(rq, r.lambda1p, 1e-10 * r.lambda1p);
}

TEST(Eigen, LongerInterval) {
    auto g = Grid::build(1, {2.0}, {200});
    EXPECT_NEAR(first_eigen_p(g, 2.0).lambda1p / (kPi * kPi / 4.0), 1.0, 1e-3);
}

TEST(Eigen, UnitSquare) {
    auto g = Grid::build(2, {1.0, 1.0}, {60, 60});
    auto r = first_eigen_p(g, 2.0);
    EXPECT_NEAR(r.lambda1p / (2.0 * kPi * kPi), 1.0, 1e-2);
    for (std::size_t n : g->interior()) EXPECT_GT(r.eigenfield[n], 0.0);
}

TEST(Eigen, OneDimensionalPLaplacian) {
    // lambda_{1,p}(0,1) = (p-1) (2 pi / (p sin(pi/p)))^p
    const double p = 3.0;
    const double exact = (p - 1.0) * std::pow(2.0 * kPi / (p * std::sin(kPi / p)), p);
    auto g = Grid::build(1, {1.0}, {200});
    EXPECT_NEAR(first_eigen_p(g, p, 1e-11).lambda1p / exact, 1.0, 1e-2);
}

TEST(Eigen, NonConvergenceCarriesBestIterate) {
    auto g = Grid::build(1, {1.0}, {50});
    try {
        first_eigen_p(g, 3.0, 1e-15, 2);
        FAIL() << "expected NonConvergence";
    } catch (const NonConvergence<EigenResult>& e) {
        EXPECT_GT(e.best().lambda1p, 0.0);
    }
}

TEST(Embedding, PoincareConstant) {
    auto g = Grid::build(1, {1.0}, {200});
    EXPECT_NEAR(embedding_constant(g, 2.0, 2.0).C_star, 1.0 / kPi, 1e-2);
}

TEST(Embedding, RatioIsScaleInvariant) {
    auto g = Grid::build(1, {1.0}, {64});
    auto v = random_positive_start(g, 1, 2);
    EXPECT_DOUBLE_EQ(embedding_ratio(v, 2.0, 4.0), embedding_ratio(v.scaled(2.0), 2.0, 4.0));
}

TEST(Embedding, DominatesSineCandidate) {
    auto g = Grid::build(1, {1.0}, {200});
    const double oracle = std::pow(3.0 / 8.0, 0.25) / (kPi / std::sqrt(2.0));
    EXPECT_NEAR(oracle, 0.35227, 1e-5);
    EXPECT_GE(embedding_constant(g, 2.0, 4.0).C_star, oracle - 1e-6);
}

TEST(Fibering, ClosedForm) {
    auto g = Grid::build(1, {1.0}, {400});
    auto u = sine(g);
    auto prm = cubic();
    EXPECT_NEAR(fibering_phi(u, prm, 2.0), 1.5, 1e-3);
    EXPECT_NEAR(fibering_phi(u, prm, 1.0), 0.375, 1e-3);
    double prev = 0.0;
    for (double e = 0.1; e < 10.0; e *= 1.3) {
        const double phi = fibering_phi(u, prm, e);
        EXPECT_GT(phi, prev);
        prev = phi;
    }
    EXPECT_THROW(fibering_phi(u, prm, 0.0), InvalidArgument);
}

TEST(EpsilonStar, SineClosedForm) {
    auto g = Grid::build(1, {1.0}, {400});
    auto u = sine(g);
    auto prm = cubic();
    const double e = epsilon_star(u, prm);
    EXPECT_NEAR(e, 2.0 * kPi / std::sqrt(3.0), 1e-3);
    // discrete closed form (G / int u^4)^{1/2}
    const double G = grad_pm_norm(u, 1.0, 2.0);
    const double P = integrate_map(u, [](double v) { return v * v * v * v; });
    EXPECT_NEAR(e, std::sqrt(G / P), 1e-10 * e);
    EXPECT_NEAR(nehari_I(u.scaled(e), prm), 0.0, 1e-8 * G * e * e);
}

TEST(EpsilonStar, AlreadyOnNehari) {
    std::mt19937_64 rng(4);
    for (int k = 0; k < 5; ++k) {
        auto g = Grid::build(1, {1.0}, {80});
        auto u = random_positive_start(g, 3, static_cast<std::uint64_t>(k));
        auto prm = cubic();
        const double G = grad_pm_norm(u, 1.0, 2.0);
        const double P = integrate_map(u, [](double v) { return std::pow(v, 4); });
        prm.source = SourceSpec::power(G / P, 3.0);
        EXPECT_NEAR(epsilon_star(u, prm), 1.0, 1e-8);
    }
}

TEST(EpsilonStar, EnergyPeaksAtRoot) {
    auto g = Grid::build(1, {1.0}, {200});
    auto u = random_positive_start(g, 7, 1);
    auto prm = cubic();
    const double e = epsilon_star(u, prm);
    double best = -1e300, arg = 0.0;
    const double lo = e / 10.0, hi = 10.0 * e;
    const int N = 10000;
    const double step = (hi - lo) / (N - 1);
    for (int i = 0; i < N; ++i) {
        const double x = lo + step * i;
        const double J = energy_J(u.scaled(x), prm);
        if (J > best) {
            best = J;
            arg = x;
        }
    }
    EXPECT_LE(std::abs(arg - e), step);
}

TEST(EpsilonStar, SignPatternOfI) {
    auto g = Grid::build(1, {1.0}, {100});
    auto prm = cubic();
    for (int k = 0; k < 10; ++k) {
        auto u = random_positive_start(g, 99, static_cast<std::uint64_t>(k));
        const double e = epsilon_star(u, prm);
        for (int i = 0; i < 400; ++i) {
            const double x = e / 10.0 * std::pow(100.0, i / 399.0);
            const double I = nehari_I(u.scaled(x), prm);
            if (x < e * (1.0 - 1e-8)) {
                EXPECT_GT(I, 0.0);
            } else if (x > e * (1.0 + 1e-8)) {
                EXPECT_LT(I, 0.0);
            }
        }
    }
}

TEST(EpsilonStar, NoRootForLinearSource) {
    auto g = Grid::build(1, {1.0}, {50});
    auto prm = cubic();
    prm.source = SourceSpec::power(1.0, 1.0);
    try {
        epsilon_star(sine(g), prm);
        FAIL() << "expected NoRoot";
    } catch (const NoRoot& e) {
        EXPECT_EQ(e.sign(), +1);
    }
}

TEST(ClosedForms, RDelta) {
    auto prm = cubic();
    EXPECT_DOUBLE_EQ(r_delta(prm, 1.0, 0.5, 1.0), 4.0);
    const double a = 1.3, C = 0.4;
    EXPECT_DOUBLE_EQ(r_delta(prm, a, C, a * std::pow(C, 4.0)), 1.0);
    EXPECT_LT(r_delta(prm, a, C, 1e-12), 1e-5);
    prm.gamma = 2.0;
    EXPECT_THROW(r_delta(prm, 1.0, 0.5, 1.0), InvalidArgument);
}

TEST(ClosedForms, ADelta) {
    auto prm = cubic();
    prm.alpha = 5.0;
    prm.beta = 0.5;
    prm.lambda1p = kPi * kPi;
    EXPECT_NEAR(a_delta(prm, 1.0), 0.289868, 1e-6);
    EXPECT_NEAR(a_delta(prm, a_positive_end(prm)), 0.0, 1e-15);
    EXPECT_GT(a_delta(prm, 0.2), a_delta(prm, 0.3));
    prm.lambda1p.reset();
    EXPECT_THROW(a_delta(prm, 1.0), InvalidArgument);
}

TEST(ClosedForms, ACoefficientOfMatchedPower) {
    auto prm = cubic();
    prm.source = SourceSpec::power(2.5, 3.0);
    EXPECT_NEAR(sample_a_coefficient(prm, 10.0), 2.5, 1e-12);
}

class WellDepthTest : public ::testing::Test {
protected:
    GridPtr g = Grid::build(1, {1.0}, {60});
    ProblemParams prm = cubic();
    SearchOptions so = [] {
        SearchOptions s;
        s.starts = 4;
        s.tol = 1e-12;
        return s;
    }();
};

TEST_F(WellDepthTest, ProfileShapeMatchesPowerLawScaling) {
    const double d1 = well_depth_search(g, prm, 1.0, so).d;
    for (double delta : {0.3, 0.7, 1.4, 1.8}) {
        const double d = well_depth_search(g, prm, delta, so).d;
        EXPECT_NEAR(d / d1, power_profile_shape(prm, delta), 1e-6) << delta;
    }
}

TEST_F(WellDepthTest, BelowSingleModeOracle) {
    auto eig = first_eigen_p(g, 2.0);
    for (double delta : {0.5, 1.0, 1.5}) {
        const double oracle = nehari_ray_energy(eig.eigenfield, prm, delta);
        EXPECT_LE(well_depth(g, prm, delta, 4, 1e-12), oracle + 1e-9);
    }
}

TEST_F(WellDepthTest, BelowEveryNehariPoint) {
    const double d = well_depth(g, prm, 1.0, 4, 1e-12);
    for (int k = 0; k < 20; ++k) {
        auto u = random_positive_start(g, 555, static_cast<std::uint64_t>(k));
        EXPECT_LE(d, energy_J(u.scaled(epsilon_star(u, prm)), prm) + 1e-12);
    }
}

TEST_F(WellDepthTest, AboveLowerBound) {
    prm.lambda1p = first_eigen_p(g, 2.0).lambda1p;
    const double C = embedding_constant(g, 2.0, prm.gamma, so).C_star;
    const double a = sample_a_coefficient(prm, 10.0);
    for (double delta = 0.1; delta < a_positive_end(prm); delta += 0.2) {
        const double lower = a_delta(prm, delta) * std::pow(r_delta(prm, a, C, delta), prm.p);
        EXPECT_GT(well_depth(g, prm, delta, 4, 1e-12), lower) << delta;
    }
}

TEST_F(WellDepthTest, IndependentOfWorkerCount) {
    so.seed = 42;
    so.workers = 1;
    const double a = well_depth_search(g, prm, 0.8, so).d;
    so.workers = 3;
    const double b = well_depth_search(g, prm, 0.8, so).d;
    EXPECT_EQ(a, b);
}

TEST_F(WellDepthTest, SigmaShiftsDepth) {
    const double d0 = well_depth(g, prm, 1.0, 2, 1e-12);
    prm.sigma = 0.05;
    EXPECT_NEAR(well_depth(g, prm, 1.0, 2, 1e-12), d0 + 0.05, 1e-9);
}

TEST(WellRegions, SmallGradientImpliesPositiveIDelta) {
    auto g = Grid::build(1, {1.0}, {60});
    auto prm = cubic();
    SearchOptions so;
    const double C = embedding_constant(g, 2.0, prm.gamma, so).C_star;
    const double a = sample_a_coefficient(prm, 10.0);
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> U(0.0, 1.0), D(0.05, 1.9);
    int checked_converse = 0;
    for (int k = 0; k < 1000; ++k) {
        const double delta = D(rng);
        const double r = r_delta(prm, a, C, delta);
        auto u = random_positive_start(g, 31337, static_cast<std::uint64_t>(k));
        const double norm = std::pow(grad_pm_norm(u, prm.m, prm.p), 1.0 / prm.p);
        auto inside = u.scaled(r * (1.0 - U(rng)) / norm);
        if (grad_pm_norm(inside, prm.m, prm.p) > 0.0) {
            EXPECT_GT(nehari_I_delta(inside, prm, delta), 0.0);
        }
        auto any = u.scaled(4.0 * r * U(rng) / norm);
        if (nehari_I_delta(any, prm, delta) < 0.0) {
            ++checked_converse;
            EXPECT_GT(std::pow(grad_pm_norm(any, prm.m, prm.p), 1.0 / prm.p), r);
        }
    }
    EXPECT_GT(checked_converse, 50);
}

TEST(WellRegions, BoundedGradientInsideWell) {
    auto g = Grid::build(1, {1.0}, {60});
    auto prm = cubic();
    prm.lambda1p = first_eigen_p(g, 2.0).lambda1p;
    SearchOptions so;
    so.starts = 4;
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> D(0.1, 1.6), U(0.0, 1.0);
    int tested = 0;
    for (int trial = 0; tested < 200 && trial < 5000; ++trial) {
        const double delta = std::round(D(rng) * 10.0) / 10.0;
        const double d = well_depth_search(g, prm, delta, so).d;
        const double a = a_delta(prm, delta);
        if (a <= 0.0) continue;
        auto u = random_positive_start(g, 2718, static_cast<std::uint64_t>(trial));
        auto v = u.scaled(epsilon_star(u, prm) * 3.0 * U(rng));
        if (energy_J(v, prm) > d || nehari_I_delta(v, prm, delta) <= 0.0) continue;
        ++tested;
        EXPECT_LT(grad_pm_norm(v, prm.m, prm.p), d / a);
    }
    EXPECT_EQ(tested, 200);
}

TEST(Profile, SmallGridShape) {
    auto g = Grid::build(1, {1.0}, {40});
    auto prm = cubic();
    WellProfileOptions wo;
    wo.delta_points = 11;
    wo.search.starts = 3;
    auto wp = well_profile(g, prm, wo);
    ASSERT_EQ(wp.d_values.size(), 11u);
    EXPECT_NEAR(wp.b_est, 2.0, 1e-4);
    EXPECT_GE(wp.b_est, a_positive_end([&] {
                  auto q = prm;
                  q.lambda1p = wp.lambda1p;
                  return q;
              }()) - 1e-12);
    EXPECT_LE(wp.b_est, prm.gamma / prm.pm() + 1e-12);
    std::size_t peak = 0;
    for (std::size_t i = 1; i < wp.d_values.size(); ++i) {
        if (wp.d_values[i] > wp.d_values[peak]) peak = i;
    }
    EXPECT_LE(std::abs(wp.delta_grid[peak] - 1.0), wp.b_est / 12.0);
    std::ostringstream os;
    write_profile_csv(os, wp);
    EXPECT_EQ(os.str().substr(0, 24), "delta,d,r,a,lower_bound\n");
}

TEST(Classify, Examples) {
    auto g = Grid::build(1, {1.0}, {100});
    auto prm = cubic();
    const double d = well_depth(g, prm, 1.0, 2, 1e-12);
    EXPECT_EQ(classify_state(energy_report(Field::zeros(g), prm), d, prm), WellState::InW);
    auto u = sine(g);
    const double e = epsilon_star(u, prm);
    EXPECT_EQ(classify_state(energy_report(u.scaled(e), prm), d, prm), WellState::OnNehari);
    EXPECT_EQ(classify_state(energy_report(u.scaled(0.5 * e), prm), d, prm), WellState::InW);
    // beyond eps*, J falls below d once the scale is large enough
    auto far = u.scaled(1.5 * e);
    auto r = energy_report(far, prm);
    ASSERT_LT(r.I, 0.0);
    EXPECT_EQ(classify_state(r, d, prm), r.J < d ? WellState::InV : WellState::OutsideWells);
    EXPECT_EQ(classify_state(energy_report(u.scaled(3.0 * e), prm), d, prm), WellState::InV);
}
