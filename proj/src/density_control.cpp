#include "adrctl/density_control.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "adrctl/csv.hpp"
#include "adrctl/errors.hpp"

namespace adrctl {

TargetDensity TargetDensity::make(const ScalarField& f) {
    if (!f.values.allFinite()) throw CoefficientError("density_control", "target is not finite");
    if (!(f.min() > 0.0))
        throw CoefficientError("density_control", "target density must be bounded below by c > 0");
    if (std::abs(mass(f) - 1.0) > 1e-12)
        throw InputError("density_control", "target density must have unit mass");
    return {f, reciprocal(f), f.min()};
}

FaceField stabilizing_velocity(const TargetDensity& target, double D) {
    return D * log_gradient(target.f);
}

FaceField feedback_velocity(const ScalarField& y, const TargetDensity& target, double gain,
                            double D, AdvectionFlux scheme) {
    if (y.min() < kPositivityFloor)
        throw PositivityError("density_control",
                              "density fell below the positivity floor in the feedback law");
    const ScalarField ay{y.domain, target.a.values.cwiseProduct(y.values)};
    const FaceField flux = -gain * face_gradient(ay);
    return velocity_for_flux(y, flux, D, scheme);
}

FaceField feedback_velocity(const ScalarField& y, const TargetDensity& target, double alpha, int j,
                            double D, AdvectionFlux scheme) {
    return feedback_velocity(y, target, alpha * j, D, scheme);
}

const char* to_string(PhaseTag tag) {
    switch (tag) {
        case PhaseTag::Zero: return "zero";
        case PhaseTag::Stabilize: return "stabilize";
        case PhaseTag::Smooth: return "smooth";
        case PhaseTag::Gain: return "gain";
    }
    return "?";
}

double Phase::gain() const {
    if (tag == PhaseTag::Smooth) return 1.0;
    if (tag == PhaseTag::Gain) return alpha * j / scale;
    return 0.0;
}

double SteeringPlan::total_duration() const {
    double s = 0.0;
    for (const auto& p : phases) s += p.duration;
    return s;
}

void validate_plan(const SteeringPlan& plan) {
    if (plan.phases.empty()) throw InputError("density_control", "plan has no phases");
    for (const auto& p : plan.phases)
        if (!(p.duration > 0.0)) throw InputError("density_control", "phase durations must be positive");
    if (std::abs(plan.total_duration() - plan.t_final) > 1e-12 * std::max(1.0, plan.t_final))
        throw InputError("density_control", "phase durations do not sum to t_final");
}

namespace {

struct PhaseStats {
    double max_speed = 0.0;
    double max_drive = 0.0;
};

// Advances y through one phase; `on_step` sees every intermediate state.
ScalarField advance_phase(const ScalarField& y0, const Phase& phase, const TargetDensity& target,
                          const PlanOptions& opts, PhaseStats& stats,
                          const std::function<void(double, const ScalarField&)>& on_step) {
    const RectDomain& dom = y0.domain;
    const double D = opts.D;
    const AdvectionFlux flux = opts.stepper.advection_flux;
    const int n = substep_count(phase.duration, effective_dt(dom, opts.stepper));
    const double dt = phase.duration / n;
    ScalarField y = y0;

    if (phase.tag == PhaseTag::Zero || phase.tag == PhaseTag::Stabilize) {
        const FaceField v = phase.tag == PhaseTag::Zero ? FaceField::zeros(dom)
                                                        : stabilizing_velocity(target, D);
        stats.max_speed = std::max(stats.max_speed, v.max_abs());
        ImplicitPropagator step(advection_diffusion_operator(v, D, flux).matrix, dt,
                                opts.stepper.scheme);
        for (int k = 0; k < n; ++k) {
            y.values = step.apply(y.values);
            if (on_step) on_step((k + 1) * dt, y);
        }
        return y;
    }

    const double gain = phase.gain();
    const auto L = divergence_form_operator(target.a, ScalarField::constant(dom, 1.0));
    ImplicitPropagator predictor(gain * L.matrix, dt, TimeScheme::ImplicitEuler);
    for (int k = 0; k < n; ++k) {
        // Velocity at the new time level makes the implicit closed-loop step
        // coincide with the weighted heat step.
        const ScalarField z{dom, predictor.apply(y.values)};
        const FaceField v = feedback_velocity(z, target, gain, D, flux);
        stats.max_speed = std::max(stats.max_speed, v.max_abs());
        ImplicitPropagator step(advection_diffusion_operator(v, D, flux).matrix, dt,
                                TimeScheme::ImplicitEuler);
        y.values = step.apply(y.values);
        const ScalarField ay{dom, target.a.values.cwiseProduct(y.values)};
        stats.max_drive = std::max(stats.max_drive, gain * face_gradient(ay).max_abs());
        if (on_step) on_step((k + 1) * dt, y);
    }
    return y;
}

}  // namespace

SteeringPlan synthesize_steering_plan(const ScalarField& y0, const TargetDensity& target,
                                      double t_final, double tol, const PlanOptions& opts) {
    if (!(y0.domain == target.f.domain)) throw InputError("density_control", "domain mismatch");
    if (!(t_final > 0.0)) throw InputError("density_control", "t_final must be positive");
    if (!(tol > 0.0)) throw InputError("density_control", "tolerance must be positive");
    if (y0.min() < 0.0) throw InputError("density_control", "initial density must be nonnegative");
    if (std::abs(mass(y0) - mass(target.f)) > 1e-10)
        throw InputError("density_control", "initial and target masses differ");
    if (opts.J_max < 1) throw ConfigError("density_control", "J_max must be at least 1");

    SteeringPlan plan;
    plan.t_final = t_final;
    plan.epsilon = std::min(0.1 * t_final, 0.3);
    const double third = plan.epsilon / 3.0;
    plan.phases.push_back({PhaseTag::Zero, third});
    plan.phases.push_back({PhaseTag::Stabilize, third});
    plan.phases.push_back({PhaseTag::Smooth, third});

    const RectDomain& dom = y0.domain;
    const auto L = divergence_form_operator(target.a, ScalarField::constant(dom, 1.0));
    const double gap = spectral_gap(L, target.a);
    plan.measured_gap = gap;

    GainSchedule& g = plan.schedule;
    g.alpha = opts.gain_margin / gap;
    g.J = opts.J_max;
    double h2 = 0.0;
    for (int j = 1; j <= g.J; ++j) h2 += 1.0 / (double(j) * j);
    const double allotted = t_final - plan.epsilon;
    g.scale = allotted / h2;
    double used = 0.0;
    for (int j = 1; j <= g.J; ++j) {
        double len = g.scale / (double(j) * j);
        if (j == g.J) len = allotted - used;  // absorb roundoff so Σ = allotted exactly
        used += len;
        g.intervals.push_back(len);
        plan.phases.push_back({PhaseTag::Gain, len, g.alpha, j, g.scale});
    }

    // Measured starting error of the gain schedule: run the preparation phases.
    ScalarField y = y0;
    PhaseStats stats;
    for (int k = 0; k < 3; ++k) y = advance_phase(y, plan.phases[k], target, opts, stats, {});
    const double e0 = weighted_l2_norm({dom, y.values - target.f.values}, target.a);

    // Implicit-Euler contraction of the slowest mode over the schedule.
    const double dt_eff = effective_dt(dom, opts.stepper);
    double log_factor = 0.0;
    for (std::size_t k = 3; k < plan.phases.size(); ++k) {
        const Phase& p = plan.phases[k];
        const int n = substep_count(p.duration, dt_eff);
        log_factor -= n * std::log1p(p.duration / n * p.gain() * gap);
    }
    g.predicted_error = e0 * std::exp(log_factor) / std::sqrt(target.a.min());
    if (g.predicted_error > tol) {
        std::ostringstream msg;
        msg << "tolerance " << tol << " not reachable within J = " << g.J
            << "; achievable error " << g.predicted_error;
        plan.warning = msg.str();
    }
    return plan;
}

ExecutionResult execute_plan(const SteeringPlan& plan, const ScalarField& y0,
                             const TargetDensity& target, const PlanOptions& opts,
                             int snapshot_every) {
    validate_plan(plan);
    if (!(y0.domain == target.f.domain)) throw InputError("density_control", "domain mismatch");
    const RectDomain& dom = y0.domain;

    ExecutionResult res;
    ScalarField y = y0;
    double t = 0.0;
    res.snapshots.push_back({0.0, y});
    double gain_start_error = -1.0;
    double harmonic = 0.0;
    int step_counter = 0;

    for (const Phase& phase : plan.phases) {
        if (phase.tag == PhaseTag::Gain && gain_start_error < 0.0)
            gain_start_error = weighted_l2_norm({dom, y.values - target.f.values}, target.a);
        PhaseStats stats;
        const double t0 = t;
        y = advance_phase(y, phase, target, opts, stats, [&](double tau, const ScalarField& s) {
            ++step_counter;
            if (snapshot_every > 0 && step_counter % snapshot_every == 0)
                res.snapshots.push_back({t0 + tau, s});
        });
        t += phase.duration;
        res.phase_max_speed.push_back(stats.max_speed);
        res.max_speed = std::max(res.max_speed, stats.max_speed);
        if (phase.tag == PhaseTag::Gain) {
            harmonic += 1.0 / phase.j;
            res.gain_errors.push_back(weighted_l2_norm({dom, y.values - target.f.values}, target.a));
            res.gain_envelope.push_back(gain_start_error *
                                        std::exp(-phase.alpha * plan.measured_gap * harmonic));
            res.gain_drive.push_back(stats.max_drive);
        }
        if (snapshot_every == 0 || res.snapshots.back().t != t) res.snapshots.push_back({t, y});
    }
    res.final_state = y;
    res.final_error = l2_norm({dom, y.values - target.f.values});
    return res;
}

void write_plan(std::ostream& out, const SteeringPlan& plan) {
    out << "# steering plan: one phase per line (tag duration [alpha j scale])\n";
    out << "t_final " << format_double(plan.t_final) << '\n';
    out << "epsilon " << format_double(plan.epsilon) << '\n';
    out << "measured_gap " << format_double(plan.measured_gap) << '\n';
    out << "alpha " << format_double(plan.schedule.alpha) << '\n';
    out << "J " << plan.schedule.J << '\n';
    out << "scale " << format_double(plan.schedule.scale) << '\n';
    out << "predicted_error " << format_double(plan.schedule.predicted_error) << '\n';
    for (const auto& p : plan.phases) {
        out << "phase " << to_string(p.tag) << ' ' << format_double(p.duration);
        if (p.tag == PhaseTag::Gain)
            out << ' ' << format_double(p.alpha) << ' ' << p.j << ' ' << format_double(p.scale);
        out << '\n';
    }
}

SteeringPlan read_plan(std::istream& in) {
    SteeringPlan plan;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        std::string value;
        auto next = [&]() {
            if (!(ls >> value)) throw ConfigError("density_control", "truncated plan line: " + line);
            return value;
        };
        if (key == "t_final") plan.t_final = parse_double(next());
        else if (key == "epsilon") plan.epsilon = parse_double(next());
        else if (key == "measured_gap") plan.measured_gap = parse_double(next());
        else if (key == "alpha") plan.schedule.alpha = parse_double(next());
        else if (key == "J") plan.schedule.J = std::stoi(next());
        else if (key == "scale") plan.schedule.scale = parse_double(next());
        else if (key == "predicted_error") plan.schedule.predicted_error = parse_double(next());
        else if (key == "phase") {
            Phase p;
            const std::string tag = next();
            if (tag == "zero") p.tag = PhaseTag::Zero;
            else if (tag == "stabilize") p.tag = PhaseTag::Stabilize;
            else if (tag == "smooth") p.tag = PhaseTag::Smooth;
            else if (tag == "gain") p.tag = PhaseTag::Gain;
            else throw ConfigError("density_control", "unknown phase tag '" + tag + "'");
            p.duration = parse_double(next());
            if (p.tag == PhaseTag::Gain) {
                p.alpha = parse_double(next());
                p.j = std::stoi(next());
                p.scale = parse_double(next());
                plan.schedule.intervals.push_back(p.duration);
            }
            plan.phases.push_back(p);
        } else {
            throw ConfigError("density_control", "unknown plan key '" + key + "'");
        }
    }
    return plan;
}

FaceField path_following_velocity(const ScalarField& gamma, const ScalarField& dgamma_dt, double D,
                                  AdvectionFlux scheme) {
    if (!(gamma.min() > 0.0))
        throw CoefficientError("density_control", "path density must be bounded below by c > 0");
    const ScalarField phi = neumann_poisson_solve(dgamma_dt);
    return velocity_for_flux(gamma, face_gradient(phi), D, scheme);
}

PathResult follow_path(const DensityPath& gamma, const DensityPath& dgamma_dt, double t_final,
                       double D, const StepperConfig& cfg) {
    ScalarField y = gamma(0.0);
    const RectDomain& dom = y.domain;
    const int n = substep_count(t_final, effective_dt(dom, cfg));
    const double dt = t_final / n;
    PathResult res;
    res.times.push_back(0.0);
    res.errors.push_back(0.0);
    for (int k = 1; k <= n; ++k) {
        const double t = k * dt;
        const ScalarField g = gamma(t);
        const FaceField v = path_following_velocity(g, dgamma_dt(t), D, cfg.advection_flux);
        res.max_speed = std::max(res.max_speed, v.max_abs());
        ImplicitPropagator step(advection_diffusion_operator(v, D, cfg.advection_flux).matrix, dt,
                                TimeScheme::ImplicitEuler);
        y.values = step.apply(y.values);
        const double err = l2_norm({dom, y.values - g.values});
        res.times.push_back(t);
        res.errors.push_back(err);
        res.max_tracking_error = std::max(res.max_tracking_error, err);
    }
    res.final_state = y;
    return res;
}

}  // namespace adrctl
