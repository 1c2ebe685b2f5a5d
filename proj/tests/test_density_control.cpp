#include <cmath>
#include <numbers>
#include <sstream>

#include <doctest.h>

#include "adrctl/density_control.hpp"
#include "adrctl/errors.hpp"

using namespace adrctl;

namespace {

constexpr double kPi = std::numbers::pi;

TargetDensity cosine_target(const RectDomain& dom, double amp) {
    return TargetDensity::make(
        normalized(ScalarField::from_function(dom, [=](double x, double) { return 1.0 + amp * std::cos(kPi * x); })));
}

}  // namespace

TEST_CASE("target validation") {
    const auto dom = build_grid_1d(1.0, 16);
    CHECK_NOTHROW(TargetDensity::make(ScalarField::constant(dom, 1.0)));
    CHECK_THROWS_AS(TargetDensity::make(ScalarField::constant(dom, 2.0)), InputError);
    auto f = ScalarField::constant(dom, 1.0);
    f.values[0] = 0.0;
    CHECK_THROWS_AS(TargetDensity::make(f), CoefficientError);
}

TEST_CASE("stabilising velocity") {
    const auto dom = build_grid_1d(1.0, 128);
    CHECK(stabilizing_velocity(TargetDensity::make(ScalarField::constant(dom, 1.0)), 1.0).max_abs() == 0.0);

    const auto target = cosine_target(dom, 0.3);
    const auto v = stabilizing_velocity(target, 1.0);
    const double h = dom.spacing[0];
    double worst = 0.0;
    for (int i = 0; i < dom.num_x_faces(); ++i) {
        const double x = (i + 1) * h;
        const double exact = -0.3 * kPi * std::sin(kPi * x) / (1.0 + 0.3 * std::cos(kPi * x));
        worst = std::max(worst, std::abs(v.x_faces[i] - exact));
    }
    CHECK(worst <= 2.0 * h * h);
}

TEST_CASE("feedback velocity at the target reduces to the stabilising law") {
    const auto dom = build_grid_1d(1.0, 64);
    const auto target = cosine_target(dom, 0.5);
    const auto v = feedback_velocity(target.f, target, 0.7, 3, 1.0);
    CHECK((v.x_faces - stabilizing_velocity(target, 1.0).x_faces).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("closed loop reproduces the weighted heat step") {
    const auto dom = build_grid(2, std::vector<double>{1.0, 1.0}, std::vector<int>{12, 12});
    const auto target = TargetDensity::make(normalized(ScalarField::from_function(
        dom, [](double x, double y) { return 1.5 + std::sin(2 * x) * std::cos(3 * y); })));
    const auto y = normalized(ScalarField::from_function(
        dom, [](double x, double y) { return 0.2 + std::exp(-10 * ((x - 0.3) * (x - 0.3) + (y - 0.6) * (y - 0.6))); }));
    const double gain = 4.0, D = 1.0, dt = 1e-3;
    const ImplicitPropagator heat(gain * divergence_form_operator(target.a, ScalarField::constant(dom, 1.0)).matrix,
                                  dt, TimeScheme::ImplicitEuler);
    const ScalarField z{dom, heat.apply(y.values)};
    const auto v = feedback_velocity(z, target, gain, D);
    const ImplicitPropagator loop(advection_diffusion_operator(v, D, AdvectionFlux::ExponentialFitted).matrix, dt,
                                  TimeScheme::ImplicitEuler);
    CHECK((loop.apply(y.values) - z.values).cwiseAbs().maxCoeff() <= 1e-12 * z.max());
}

TEST_CASE("zero gain feedback holds the state") {
    const auto dom = build_grid_1d(1.0, 64);
    const auto target = cosine_target(dom, 0.5);
    const auto y = normalized(ScalarField::from_function(dom, [](double x, double) { return 1.0 + x * x; }));
    const auto v = feedback_velocity(y, target, 0.0, 1.0);
    const auto y1 = step_advection_diffusion(y, v, 1.0, StepperConfig{});
    CHECK((y1.values - y.values).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("feedback velocity rejects loss of positivity") {
    const auto dom = build_grid_1d(1.0, 16);
    const auto target = cosine_target(dom, 0.2);
    auto y = ScalarField::constant(dom, 1.0);
    y.values[5] = 0.0;
    CHECK_THROWS_AS(feedback_velocity(y, target, 1.0, 1.0), PositivityError);
}

TEST_CASE("steering plan structure") {
    const auto dom = build_grid_1d(1.0, 64);
    const auto target = cosine_target(dom, 0.3);
    const auto y0 = normalized(ScalarField::from_function(dom, [](double x, double) { return std::exp(-20 * (x - 0.2) * (x - 0.2)); }));
    const auto plan = synthesize_steering_plan(y0, target, 1.0, 1e-2);
    REQUIRE(plan.phases.size() == 3u + static_cast<std::size_t>(plan.schedule.J));
    CHECK(plan.phases[0].tag == PhaseTag::Zero);
    CHECK(plan.phases[1].tag == PhaseTag::Stabilize);
    CHECK(plan.phases[2].tag == PhaseTag::Smooth);
    CHECK(plan.epsilon == doctest::Approx(0.1));
    CHECK(plan.total_duration() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(plan.schedule.alpha * plan.measured_gap >= 1.0);
    double gain_time = 0.0;
    for (std::size_t k = 3; k < plan.phases.size(); ++k) {
        CHECK(plan.phases[k].tag == PhaseTag::Gain);
        CHECK(plan.phases[k].j == static_cast<int>(k) - 2);
        gain_time += plan.phases[k].duration;
    }
    CHECK(gain_time == doctest::Approx(0.9).epsilon(1e-12));
    CHECK_NOTHROW(validate_plan(plan));

    auto broken = plan;
    broken.phases.back().duration += 1e-3;
    CHECK_THROWS_AS(validate_plan(broken), InputError);

    auto half = y0;
    half.values *= 0.5;
    CHECK_THROWS_AS(synthesize_steering_plan(half, target, 1.0, 1e-2), InputError);
}

TEST_CASE("plan text round trip") {
    const auto dom = build_grid_1d(1.0, 32);
    const auto target = cosine_target(dom, 0.3);
    const auto plan = synthesize_steering_plan(ScalarField::constant(dom, 1.0), target, 0.5, 1e-3);
    std::stringstream ss;
    write_plan(ss, plan);
    const auto back = read_plan(ss);
    REQUIRE(back.phases.size() == plan.phases.size());
    for (std::size_t k = 0; k < plan.phases.size(); ++k) {
        CHECK(back.phases[k].tag == plan.phases[k].tag);
        CHECK(back.phases[k].duration == plan.phases[k].duration);
        CHECK(back.phases[k].gain() == plan.phases[k].gain());
    }
    CHECK(back.t_final == plan.t_final);
    CHECK(back.schedule.predicted_error == plan.schedule.predicted_error);
}

TEST_CASE("zero-only plan leaves a uniform state unchanged") {
    const auto dom = build_grid_1d(1.0, 32);
    const auto target = cosine_target(dom, 0.3);
    SteeringPlan plan;
    plan.t_final = 0.2;
    plan.phases = {Phase{PhaseTag::Zero, 0.2}};
    const auto y0 = ScalarField::constant(dom, 1.0);
    const auto res = execute_plan(plan, y0, target);
    CHECK((res.final_state.values - y0.values).cwiseAbs().maxCoeff() <= 1e-13);
    CHECK(res.max_speed == 0.0);
}

TEST_CASE("steering from the target and from a bump") {
    const auto dom = build_grid_1d(1.0, 64);
    const auto target = cosine_target(dom, 0.4);
    const auto at_target = execute_plan(synthesize_steering_plan(target.f, target, 1.0, 1e-2), target.f, target);
    CHECK(at_target.final_error <= 1e-2);

    const auto y0 = normalized(ScalarField::from_function(dom, [](double x, double) { return std::exp(-50 * (x - 0.8) * (x - 0.8)); }));
    const auto plan = synthesize_steering_plan(y0, target, 1.0, 1e-2);
    const auto res = execute_plan(plan, y0, target);
    CHECK(res.final_error <= 1e-2);
    CHECK(std::isfinite(res.max_speed));
    CHECK(res.final_state.min() > 0.0);
    CHECK(std::abs(mass(res.final_state) - 1.0) <= 1e-12);
    REQUIRE(res.gain_errors.size() == static_cast<std::size_t>(plan.schedule.J));
    for (std::size_t j = 0; j < res.gain_errors.size(); ++j) {
        CHECK(res.gain_errors[j] <= 2.0 * res.gain_envelope[j] + 1e-14);
        CHECK(std::isfinite(res.gain_drive[j]));
    }
    // No blow-up of the control drive as the gain index grows.
    const std::size_t q = res.gain_drive.size() / 4;
    const double early = *std::max_element(res.gain_drive.begin(), res.gain_drive.begin() + q);
    const double late = *std::max_element(res.gain_drive.end() - q, res.gain_drive.end());
    CHECK(late <= early);
}

TEST_CASE("path following") {
    const auto dom = build_grid_1d(1.0, 64);
    const auto g = normalized(ScalarField::from_function(dom, [](double x, double) { return 1.0 + 0.5 * x; }));
    const auto zero = ScalarField::constant(dom, 0.0);
    const auto v = path_following_velocity(g, zero, 1.0);
    const auto held = step_advection_diffusion(g, v, 1.0, StepperConfig{});
    CHECK((held.values - g.values).cwiseAbs().maxCoeff() <= 1e-12);

    CHECK_THROWS_AS(path_following_velocity(g, ScalarField::constant(dom, 1.0), 1.0), CompatibilityError);

    const auto g1 = normalized(ScalarField::from_function(dom, [](double x, double) { return 0.2 + std::exp(-30 * (x - 0.4) * (x - 0.4)); }));
    const auto res = follow_path([&](double t) { return ScalarField{dom, (1 - t) * g.values + t * g1.values}; },
                                 [&](double) { return ScalarField{dom, g1.values - g.values}; }, 1.0, 1.0,
                                 StepperConfig{});
    CHECK(res.max_tracking_error <= 1e-3);
    CHECK((res.final_state.values - g1.values).cwiseAbs().maxCoeff() <= 1e-9);
}
