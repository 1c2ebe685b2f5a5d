#pragma once

// Velocity-control laws for the scalar forward equation: stabilisation of a
// target density, finite-time steering through a zero / stabilise / smooth /
// gain-schedule sequence, and tracking of a prescribed density path.

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "adrctl/grid.hpp"
#include "adrctl/pde_core.hpp"

namespace adrctl {

/// Positive unit-mass target f with cached a = 1/f and lower bound c = min f.
struct TargetDensity {
    ScalarField f;
    ScalarField a;
    double lower_bound = 0.0;

    /// Validates f ≥ c > 0 and mass(f) = 1 to 1e-12 (throws CoefficientError /
    /// InputError).
    static TargetDensity make(const ScalarField& f);
};

/// Division floor of the feedback laws.
inline constexpr double kPositivityFloor = 1e-12;

/// v = D ∇f/f on faces (log-gradient form). f is an exact equilibrium of the
/// exponential-fitted stepper under this field.
FaceField stabilizing_velocity(const TargetDensity& target, double D);

/// Feedback law v = D∇y/y - gain ∇(a y)/y, evaluated on faces as the unique
/// velocity whose scheme flux equals -gain ∇(a y). The closed loop therefore
/// reproduces the weighted heat flow y_t = gain Δ(a y).
/// Throws PositivityError when y drops below kPositivityFloor.
FaceField feedback_velocity(const ScalarField& y, const TargetDensity& target, double gain,
                            double D, AdvectionFlux scheme = AdvectionFlux::ExponentialFitted);

/// The (α, j) form: gain = α j.
FaceField feedback_velocity(const ScalarField& y, const TargetDensity& target, double alpha, int j,
                            double D, AdvectionFlux scheme = AdvectionFlux::ExponentialFitted);

enum class PhaseTag { Zero, Stabilize, Smooth, Gain };

const char* to_string(PhaseTag tag);

struct Phase {
    PhaseTag tag = PhaseTag::Zero;
    double duration = 0.0;
    // Gain phases only: closed-loop gain alpha * j / scale.
    double alpha = 0.0;
    int j = 0;
    double scale = 1.0;

    double gain() const;
};

struct GainSchedule {
    double alpha = 0.0;
    int J = 0;
    /// Interval j lasts scale / j²; scale = allotted duration / Σ_{j≤J} 1/j².
    double scale = 1.0;
    std::vector<double> intervals;
    /// Predicted L² distance to f after the last interval.
    double predicted_error = 0.0;
};

struct SteeringPlan {
    double t_final = 0.0;
    double epsilon = 0.0;
    double measured_gap = 0.0;
    GainSchedule schedule;
    std::vector<Phase> phases;
    /// Set when the tolerance is not predicted to be met within J_max.
    std::optional<std::string> warning;

    double total_duration() const;
};

struct PlanOptions {
    double D = 1.0;
    StepperConfig stepper{};
    int J_max = 40;
    double gain_margin = 2.0;  // α = gain_margin / λ̂
};

SteeringPlan synthesize_steering_plan(const ScalarField& y0, const TargetDensity& target,
                                      double t_final, double tol, const PlanOptions& opts = {});

/// Throws InputError unless durations are positive and sum to t_final to 1e-12.
void validate_plan(const SteeringPlan& plan);

struct Snapshot {
    double t;
    ScalarField y;
};

struct ExecutionResult {
    ScalarField final_state;
    double final_error = 0.0;  // L² distance to the target
    double max_speed = 0.0;    // sup over the run of max |v|
    std::vector<double> phase_max_speed;
    std::vector<Snapshot> snapshots;
    /// One entry per gain interval: ‖y - f‖_a at its end, the exponential
    /// envelope M0 exp(-α λ̂ Σ_{k≤j} 1/k), and sup of gain·|∇(a y)|.
    std::vector<double> gain_errors;
    std::vector<double> gain_envelope;
    std::vector<double> gain_drive;
};

/// Runs every phase with the pde_core stepper. Gain/smooth phases are
/// executed in closed loop: the feedback velocity is evaluated at the new
/// time level and the advection-diffusion step is taken with it.
/// `snapshot_every` > 0 also records every n-th step.
ExecutionResult execute_plan(const SteeringPlan& plan, const ScalarField& y0,
                             const TargetDensity& target, const PlanOptions& opts = {},
                             int snapshot_every = 0);

/// Line-oriented plan text: header lines then one `phase` line per phase.
void write_plan(std::ostream& out, const SteeringPlan& plan);
SteeringPlan read_plan(std::istream& in);

/// v = D∇γ/γ + ∇φ/γ with -Δφ = ∂γ/∂t (zero-mean Neumann solve), evaluated
/// on faces so that the scheme flux equals ∇φ at y = γ. Then γ is an exact
/// trajectory of the implicit-Euler closed loop for affine-in-time paths.
FaceField path_following_velocity(const ScalarField& gamma, const ScalarField& dgamma_dt, double D,
                                  AdvectionFlux scheme = AdvectionFlux::ExponentialFitted);

struct PathResult {
    ScalarField final_state;
    double max_tracking_error = 0.0;  // sup over steps of ‖y - γ‖₂
    double max_speed = 0.0;
    std::vector<double> times;
    std::vector<double> errors;
};

using DensityPath = std::function<ScalarField(double)>;

/// Closed-loop tracking of γ(t), t ∈ [0, t_final], starting from γ(0).
PathResult follow_path(const DensityPath& gamma, const DensityPath& dgamma_dt, double t_final,
                       double D, const StepperConfig& cfg);

}  // namespace adrctl
