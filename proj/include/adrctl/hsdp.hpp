#pragma once

// Coupled N-state advection-diffusion-reaction system
//   ∂y_k/∂t = D_k Δy_k - ∇·(v_k y_k) + Σ_e K_e(x) (Q_e y)_k
// on a shared grid: Strang splitting, mass-level consistency with the
// finite-state chain, combined steering and spatial-gain stabilisation.

#include <iosfwd>
#include <memory>
#include <vector>

#include "adrctl/ctmc.hpp"
#include "adrctl/density_control.hpp"
#include "adrctl/grid.hpp"
#include "adrctl/kernels.hpp"
#include "adrctl/pde_core.hpp"

namespace adrctl {

struct StackedDensity {
    std::vector<ScalarField> states;

    int num_states() const { return static_cast<int>(states.size()); }
    const RectDomain& domain() const { return states.front().domain; }
    Eigen::VectorXd masses() const;
    double total_mass() const { return masses().sum(); }
    double min() const;
    /// Concatenation y_1, ..., y_N.
    Eigen::VectorXd stacked() const;
};

/// Per-state targets f_i ≥ 0 with Σ mass(f_i) = 1. `support` lists the
/// states of positive mass; each is positive in every cell, the others are
/// identically zero.
struct HybridTarget {
    std::vector<ScalarField> f;
    Eigen::VectorXd masses;
    std::vector<int> support;

    static HybridTarget make(std::vector<ScalarField> f);
    int num_states() const { return static_cast<int>(f.size()); }
    bool full_support() const { return static_cast<int>(support.size()) == num_states(); }
};

/// Cellwise gains K_e(x) ≥ 0, one vector per edge.
struct SpatialGainSet {
    RectDomain domain;
    std::vector<Eigen::VectorXd> gains;

    static SpatialGainSet constant(const RectDomain& domain, const Eigen::VectorXd& rates);
    int num_edges() const { return static_cast<int>(gains.size()); }
    bool constant_in_space() const;
    double max() const;
};

/// CSV with one row per cell: "cell,edge_1,...,edge_E".
void write_gain_csv(std::ostream& out, const SpatialGainSet& K);

/// Rows "t,state,cell,value" (states 1-based).
void write_stacked_rows(std::ostream& out, double t, const StackedDensity& Y);

/// One Strang step: reaction over dt/2 (cellwise exp of Σ_e K_e(x) Q_e),
/// advection-diffusion over dt per state, reaction over dt/2. The reaction
/// exponentials and per-state factorisations are built once.
class SplitStepper {
public:
    SplitStepper(const TransitionGraph& g, const std::vector<FaceField>& velocities,
                 const std::vector<double>& D, const SpatialGainSet& K, double dt,
                 const StepperConfig& cfg = {}, Execution exec = Execution::Parallel);

    StackedDensity step(const StackedDensity& Y) const;
    double dt() const { return dt_; }

private:
    double dt_;
    Execution exec_;
    std::vector<Eigen::MatrixXd> half_reaction_;  // one per cell, or one shared
    std::vector<std::shared_ptr<const ImplicitPropagator>> transport_;
};

StackedDensity split_step(const TransitionGraph& g, const StackedDensity& Y,
                          const std::vector<FaceField>& velocities, const std::vector<double>& D,
                          const SpatialGainSet& K, double dt, const StepperConfig& cfg = {});

struct StackedTrajectory {
    std::vector<double> times;
    std::vector<StackedDensity> states;
};

/// Repeated split steps up to t_final (the stepper's dt must divide it up to
/// rounding; the step count is rounded to the nearest integer). Records
/// every `record_every`-th step plus the endpoints.
StackedTrajectory simulate(const SplitStepper& stepper, const StackedDensity& Y0, double t_final,
                           int record_every = 1);

struct MassConsistencyReport {
    double max_deviation = 0.0;
    std::vector<double> times;
    std::vector<Eigen::VectorXd> pde_masses;
    std::vector<Eigen::VectorXd> ode_masses;
};

/// Compares per-state masses along a trajectory with exp(t Σ u_e Q_e) μ(0)
/// for constant rates u.
MassConsistencyReport mass_trajectory_consistency(const TransitionGraph& g,
                                                  const StackedTrajectory& traj,
                                                  const Eigen::VectorXd& rates);

/// Stabilising velocities v_k = D_k ∇f_k/f_k on the support, zero elsewhere.
std::vector<FaceField> stabilizing_velocities(const HybridTarget& target,
                                              const std::vector<double>& D);

/// K_e(x) = q_e μeq_S(e) / f_S(e)(x) with μeq_i = mass(f_i). Cellwise, the
/// reaction then vanishes at y = f. Requires full support.
SpatialGainSet stabilizing_gains(const TransitionGraph& g, const HybridTarget& target,
                                 const Eigen::VectorXd& q);

struct ZeroMassLaw {
    SpatialGainSet gains;
    Eigen::VectorXd rates;  // q on the full edge list
    /// Largest real part of the generator restricted to off-support states.
    double off_support_bound = 0.0;
};

/// Rates synthesised on the support subgraph, zero on edges from the
/// support to the off-support states, `off_support_rate` on edges leaving
/// off-support states (weight a_i = 1 there). Throws GraphError when the
/// support subgraph is not strongly connected or an off-support state
/// cannot reach the support.
ZeroMassLaw zero_mass_stabilizing_gains(const TransitionGraph& g, const HybridTarget& target,
                                        const std::vector<double>& D,
                                        double off_support_rate = 1.0);

/// Sparse generator of the coupled system: block k is the advection-diffusion
/// operator of (v_k, D_k), plus K_e(x) couplings between blocks.
Eigen::SparseMatrix<double> coupled_generator(const TransitionGraph& g,
                                              const std::vector<FaceField>& velocities,
                                              const std::vector<double>& D,
                                              const SpatialGainSet& K,
                                              const StepperConfig& cfg = {});

struct CoupledSpectrum {
    SpectrumReport report;
    /// Right eigenvector of the top eigenvalue scaled to unit total mass.
    Eigen::VectorXd stationary;
};

/// Dense eigensolve; throws ConfigError above 8192 unknowns.
CoupledSpectrum coupled_spectrum(const Eigen::SparseMatrix<double>& generator,
                                 double cell_volume);

/// Largest real part of the principal submatrix on the given states.
double block_spectral_bound(const Eigen::SparseMatrix<double>& generator, int num_cells,
                            const std::vector<int>& states);

struct HybridPlanOptions {
    std::vector<double> D;  // per state
    PlanOptions steering{};
    double tol = 1e-2;
    double precondition_fraction = 0.25;
};

struct HybridSteeringPlan {
    double t_final = 0.0;
    double switch_time = 0.0;
    /// Phase 1 rates (v ≡ 0) steering the mass vector to the target masses.
    PiecewiseConstantControl transfer;
    /// Phase 2 per-state plans on unit-mass shapes (rates ≡ 0).
    std::vector<SteeringPlan> state_plans;
    StackedDensity switch_state;
};

/// Throws ObstructionError for non strongly connected graphs, InputError for
/// mass mismatch or a target without full support.
HybridSteeringPlan hybrid_steering_plan(const TransitionGraph& g, const StackedDensity& Y0,
                                        const HybridTarget& target, double t_final,
                                        const HybridPlanOptions& opts);

struct HybridExecution {
    StackedDensity final_state;
    std::vector<double> state_errors;  // ‖y_i - f_i‖₂
    double max_speed = 0.0;
    double max_rate = 0.0;
    StackedTrajectory mass_phase;  // phase-1 trajectory at interval breakpoints
};

HybridExecution execute_hybrid_plan(const TransitionGraph& g, const HybridSteeringPlan& plan,
                                    const StackedDensity& Y0, const HybridTarget& target,
                                    const HybridPlanOptions& opts);

}  // namespace adrctl
