#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <doctest.h>
#include <unsupported/Eigen/MatrixFunctions>

#include "adrctl/hsdp.hpp"

using namespace adrctl;

namespace {

constexpr double kPi = std::numbers::pi;

const TransitionGraph kPair = TransitionGraph::make(2, {{0, 1}, {1, 0}});

StackedDensity random_stack(const RectDomain& dom, int N, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.05, 1.0);
    StackedDensity Y;
    for (int k = 0; k < N; ++k) Y.states.push_back(ScalarField::from_function(dom, [&](double, double) { return u(rng); }));
    const double m = Y.total_mass();
    for (auto& s : Y.states) s.values /= m;
    return Y;
}

HybridTarget pair_target(const RectDomain& dom) {
    auto f1 = normalized(ScalarField::from_function(dom, [](double x, double) { return 1.0 + 0.5 * x; }));
    auto f2 = normalized(ScalarField::from_function(dom, [](double x, double) { return 1.0 + 0.4 * std::cos(kPi * x); }));
    f1.values *= 0.3;
    f2.values *= 0.7;
    return HybridTarget::make({f1, f2});
}

std::vector<FaceField> still(const RectDomain& dom, int N) { return std::vector<FaceField>(N, FaceField::zeros(dom)); }

}  // namespace

TEST_CASE("hybrid target validation") {
    const auto dom = build_grid_1d(1.0, 8);
    auto half = ScalarField::constant(dom, 0.5);
    CHECK(HybridTarget::make({half, half}).full_support());
    const auto partial = HybridTarget::make({ScalarField::constant(dom, 1.0), ScalarField::constant(dom, 0.0)});
    CHECK(partial.support == std::vector<int>{0});
    CHECK_THROWS_AS(HybridTarget::make({half, ScalarField::constant(dom, 0.2)}), InputError);
    auto holey = half;
    holey.values[2] = 0.0;
    CHECK_THROWS_AS(HybridTarget::make({holey, ScalarField::constant(dom, 0.5 + 0.5 / 7.0)}), CoefficientError);
}

TEST_CASE("pure reaction step matches cellwise exponentials") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 3.0);
    const auto dom = build_grid_1d(1.0, 20);
    const auto g = TransitionGraph::make(3, {{0, 1}, {1, 2}, {2, 0}, {0, 2}});
    SpatialGainSet K{dom, {}};
    for (int e = 0; e < g.num_edges(); ++e) K.gains.push_back(Eigen::VectorXd::NullaryExpr(dom.num_cells(), [&] { return u(rng); }));
    const auto Y = random_stack(dom, 3, rng);
    const double dt = 0.3;
    const auto Y1 = split_step(g, Y, still(dom, 3), {0.0, 0.0, 0.0}, K, dt);
    for (int c = 0; c < dom.num_cells(); ++c) {
        Eigen::VectorXd rates(g.num_edges());
        for (int e = 0; e < g.num_edges(); ++e) rates[e] = K.gains[e][c];
        Eigen::Vector3d y0(Y.states[0].values[c], Y.states[1].values[c], Y.states[2].values[c]);
        const Eigen::VectorXd oracle = (dt * rate_generator(g, rates)).exp() * y0;
        for (int k = 0; k < 3; ++k) CHECK(std::abs(Y1.states[k].values[c] - oracle[k]) <= 1e-12);
    }
}

TEST_CASE("zero gains decouple the states") {
    std::mt19937_64 rng(2);
    const auto dom = build_grid_1d(1.0, 32);
    const auto Y = random_stack(dom, 2, rng);
    FaceField v = FaceField::zeros(dom);
    v.x_faces.setConstant(0.7);
    const std::vector<FaceField> vel{v, FaceField::zeros(dom)};
    StepperConfig cfg;
    cfg.dt = 0.01;
    const auto Y1 = split_step(kPair, Y, vel, {1.0, 0.3}, SpatialGainSet::constant(dom, Eigen::Vector2d::Zero()), 0.01, cfg);
    CHECK((Y1.states[0].values - step_advection_diffusion(Y.states[0], v, 1.0, cfg).values).cwiseAbs().maxCoeff() <= 1e-14);
    CHECK((Y1.states[1].values - step_advection_diffusion(Y.states[1], vel[1], 0.3, cfg).values).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("split step conserves total mass and positivity") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 4.0), w(-3.0, 3.0);
    const auto dom = build_grid(2, std::vector<double>{1.0, 1.0}, std::vector<int>{8, 8});
    const auto g = TransitionGraph::make(3, {{0, 1}, {1, 2}, {2, 0}});
    for (int trial = 0; trial < 10; ++trial) {
        SpatialGainSet K{dom, {}};
        for (int e = 0; e < 3; ++e) K.gains.push_back(Eigen::VectorXd::NullaryExpr(dom.num_cells(), [&] { return u(rng); }));
        std::vector<FaceField> vel;
        for (int k = 0; k < 3; ++k) {
            FaceField v = FaceField::zeros(dom);
            for (auto& x : v.x_faces) x = w(rng);
            for (auto& x : v.y_faces) x = w(rng);
            vel.push_back(v);
        }
        const auto Y = random_stack(dom, 3, rng);
        const auto Y1 = split_step(g, Y, vel, {1.0, 0.5, 0.1}, K, 0.05);
        CHECK(std::abs(Y1.total_mass() - Y.total_mass()) <= 1e-12);
        CHECK(Y1.min() >= 0.0);
    }
}

TEST_CASE("serial and parallel split steps agree bitwise") {
    std::mt19937_64 rng(4);
    const auto dom = build_grid_1d(1.0, 64);
    const auto target = pair_target(dom);
    const std::vector<double> D{1.0, 0.5};
    const auto K = stabilizing_gains(kPair, target, synthesize_stationary_rates(kPair, target.masses));
    const auto Y = random_stack(dom, 2, rng);
    const SplitStepper a(kPair, stabilizing_velocities(target, D), D, K, 1e-3, {}, Execution::Serial);
    const SplitStepper b(kPair, stabilizing_velocities(target, D), D, K, 1e-3, {}, Execution::Parallel);
    const auto ya = a.step(Y), yb = b.step(Y);
    for (int k = 0; k < 2; ++k) CHECK(ya.states[k].values == yb.states[k].values);
}

TEST_CASE("mass consistency with zero rates") {
    std::mt19937_64 rng(5);
    const auto dom = build_grid_1d(1.0, 32);
    const Eigen::Vector2d zero = Eigen::Vector2d::Zero();
    const SplitStepper s(kPair, still(dom, 2), {1.0, 1.0}, SpatialGainSet::constant(dom, zero), 0.01);
    const auto rep = mass_trajectory_consistency(kPair, simulate(s, random_stack(dom, 2, rng), 0.5), zero);
    CHECK(rep.max_deviation <= 1e-14);
}

TEST_CASE("stabilising gains") {
    const auto dom = build_grid_1d(1.0, 64);
    auto u1 = ScalarField::constant(dom, 0.25), u2 = ScalarField::constant(dom, 0.75);
    const auto uniform = HybridTarget::make({u1, u2});
    const Eigen::VectorXd q = synthesize_stationary_rates(kPair, uniform.masses);
    const auto K = stabilizing_gains(kPair, uniform, q);
    CHECK(K.constant_in_space());
    // Uniform f_S equals its mass on the unit domain, so K_e = q_e.
    for (int e = 0; e < 2; ++e) CHECK(K.gains[e][0] == doctest::Approx(q[e]).epsilon(1e-14));

    const auto target = pair_target(dom);
    const std::vector<double> D{1.0, 0.4};
    const auto Ks = stabilizing_gains(kPair, target, synthesize_stationary_rates(kPair, target.masses));
    const SplitStepper s(kPair, stabilizing_velocities(target, D), D, Ks, 1e-3);
    const StackedDensity F{target.f};
    auto Y = F;
    for (int k = 0; k < 10; ++k) {
        Y = s.step(Y);
        CHECK((Y.stacked() - F.stacked()).cwiseAbs().maxCoeff() <= 1e-12);
    }

    const auto partial = HybridTarget::make({ScalarField::constant(dom, 1.0), ScalarField::constant(dom, 0.0)});
    CHECK_THROWS_AS(stabilizing_gains(kPair, partial, Eigen::Vector2d(1, 1)), InputError);
}

TEST_CASE("coupled generator: constant-gain mass matrix matches the chain") {
    const auto dom = build_grid_1d(1.0, 16);
    const auto g = TransitionGraph::make(3, {{0, 1}, {1, 2}, {2, 0}, {1, 0}});
    const Eigen::Vector4d rates(0.5, 1.5, 2.0, 0.25);
    const auto G = coupled_generator(g, still(dom, 3), {1.0, 1.0, 1.0}, SpatialGainSet::constant(dom, rates));
    // Mass-level matrix: sum each block over rows for a column of ones.
    const int n = dom.num_cells();
    Eigen::Matrix3d M = Eigen::Matrix3d::Zero();
    const Eigen::MatrixXd Gd(G);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) M(i, j) = Gd.block(i * n, j * n, n, n).sum() / n;
    CHECK((M - rate_generator(g, rates)).cwiseAbs().maxCoeff() <= 1e-12);
    const auto a = spectrum_of(M), b = spectrum_check(g, rates);
    CHECK((a.eigenvalues - b.eigenvalues).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("coupled spectrum: single state reduces to the scalar operator") {
    const auto dom = build_grid_1d(1.0, 32);
    const auto f = normalized(ScalarField::from_function(dom, [](double x, double) { return 1.0 + x; }));
    const auto one = TransitionGraph::make(1, {});
    const auto target = HybridTarget::make({f});
    const auto cs = coupled_spectrum(coupled_generator(one, stabilizing_velocities(target, {1.0}), {1.0},
                                                       SpatialGainSet{dom, {}}),
                                     dom.cell_volume());
    CHECK(cs.report.max_real <= 1e-10);
    CHECK(cs.report.zero_multiplicity == 1);
    CHECK(cs.report.eigenvalues.imag().cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((cs.stationary - f.values).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("coupled spectrum: gap is the slower of diffusion and switching") {
    const auto dom = build_grid_1d(1.0, 128);
    const auto half = ScalarField::constant(dom, 0.5);
    const auto target = HybridTarget::make({half, half});
    const Eigen::Vector2d q(1.0, 1.0);
    const auto K = stabilizing_gains(kPair, target, q);
    for (double D : {1.0, 0.1}) {
        const std::vector<double> Ds{D, D};
        const auto cs = coupled_spectrum(coupled_generator(kPair, stabilizing_velocities(target, Ds), Ds, K),
                                         dom.cell_volume());
        const double expect = std::min(kPi * kPi * D, 2.0);
        CHECK(std::abs(cs.report.gap - expect) / expect <= 0.02);
        CHECK(cs.report.zero_multiplicity == 1);
    }
}

TEST_CASE("zero-mass law") {
    const auto dom = build_grid_1d(1.0, 24);
    const auto g = TransitionGraph::make(3, {{0, 1}, {1, 0}, {0, 2}, {2, 0}, {2, 1}});
    auto f1 = ScalarField::constant(dom, 0.4), f2 = ScalarField::constant(dom, 0.6);
    const auto target = HybridTarget::make({f1, f2, ScalarField::constant(dom, 0.0)});
    const std::vector<double> D{1.0, 1.0, 1.0};
    const auto law = zero_mass_stabilizing_gains(g, target, D);
    CHECK(law.rates[2] == 0.0);                      // support → off-support closed
    CHECK(law.rates[3] == 1.0);                      // off-support → support
    CHECK(law.rates[4] == 1.0);
    CHECK(law.off_support_bound == doctest::Approx(-2.0).epsilon(1e-10));
    const auto G = coupled_generator(g, stabilizing_velocities(target, D), D, law.gains);
    CHECK(block_spectral_bound(G, dom.num_cells(), {2}) < 0.0);
    // No mass flows from the support into the off-support state.
    const Eigen::MatrixXd Gd(G);
    const int n = dom.num_cells();
    CHECK(Gd.block(2 * n, 0, n, 2 * n).cwiseAbs().maxCoeff() == 0.0);

    // Full support reduces to the ordinary gains.
    const auto full = HybridTarget::make({f1, f2});
    const auto lf = zero_mass_stabilizing_gains(kPair, full, {1.0, 1.0});
    const auto ks = stabilizing_gains(kPair, full, synthesize_stationary_rates(kPair, full.masses));
    for (int e = 0; e < 2; ++e) CHECK((lf.gains.gains[e] - ks.gains[e]).cwiseAbs().maxCoeff() <= 1e-15);

    // Support split in two.
    const auto split = HybridTarget::make({f1, ScalarField::constant(dom, 0.0), f2});
    const auto chain = TransitionGraph::make(3, {{0, 1}, {1, 0}, {1, 2}, {2, 1}});
    CHECK_THROWS_AS(zero_mass_stabilizing_gains(chain, split, D), GraphError);
}

TEST_CASE("hybrid steering plan preconditions") {
    const auto dom = build_grid_1d(1.0, 16);
    const auto target = pair_target(dom);
    const StackedDensity Y0{target.f};
    HybridPlanOptions ho;
    ho.D = {1.0, 1.0};
    CHECK_THROWS_AS(hybrid_steering_plan(TransitionGraph::make(2, {{0, 1}}), Y0, target, 1.0, ho), ObstructionError);
    auto heavy = Y0;
    heavy.states[0].values *= 2.0;
    CHECK_THROWS_AS(hybrid_steering_plan(kPair, heavy, target, 1.0, ho), InputError);
}

TEST_CASE("hybrid steering from the target stays within tolerance") {
    const auto dom = build_grid_1d(1.0, 32);
    const auto target = pair_target(dom);
    const StackedDensity Y0{target.f};
    HybridPlanOptions ho;
    ho.D = {1.0, 0.5};
    const auto plan = hybrid_steering_plan(kPair, Y0, target, 1.0, ho);
    CHECK(plan.switch_time == doctest::Approx(0.5));
    const auto res = execute_hybrid_plan(kPair, plan, Y0, target, ho);
    for (double e : res.state_errors) CHECK(e <= ho.tol);
    CHECK(std::abs(res.final_state.total_mass() - 1.0) <= 1e-12);
}

TEST_CASE("CSV writers") {
    const auto dom = build_grid_1d(1.0, 2);
    std::ostringstream g, s;
    write_gain_csv(g, SpatialGainSet::constant(dom, Eigen::Vector2d(1.5, 0.25)));
    CHECK(g.str() == "cell,edge_1,edge_2\n0,1.5,0.25\n1,1.5,0.25\n");
    write_stacked_rows(s, 0.5, StackedDensity{{ScalarField::constant(dom, 1.0), ScalarField::constant(dom, 0.0)}});
    CHECK(s.str() == "0.5,1,0,1\n0.5,1,1,1\n0.5,2,0,0\n0.5,2,1,0\n");
}
