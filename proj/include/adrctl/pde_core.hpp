#pragma once

// Time integration of the scalar controlled forward equation
//   y_t = D Δy - ∇·(v y),   n·(D∇y - v y) = 0 on ∂Ω,
// and of the two reference flows used by the controllers: the weighted heat
// flow y_t = β Δ(a y) and the stabilising flow y_t = D ∇·(f ∇(y/f)).

#include <span>
#include <utility>

#include <Eigen/SparseLU>

#include "adrctl/grid.hpp"

namespace adrctl {

enum class TimeScheme { ImplicitEuler, CrankNicolson };
enum class AdvectionFlux { ExponentialFitted, Centered };

struct StepperConfig {
    double dt = 1e-3;
    TimeScheme scheme = TimeScheme::ImplicitEuler;
    AdvectionFlux advection_flux = AdvectionFlux::ExponentialFitted;
};

/// Least-squares fit err(t) ≈ prefactor · exp(-fitted_rate · t).
/// `residual` is the RMS of the log-space residuals.
struct ConvergenceReport {
    double fitted_rate = 0.0;
    double prefactor = 0.0;
    double residual = 0.0;
};

/// B(x) = x / (e^x - 1), the Bernoulli function of the exponential-fitted flux.
double bernoulli(double x);

/// Face flux F = c_low · y_low - c_high · y_high in the +axis direction for
/// velocity v. Both coefficients are nonnegative for the exponential-fitted
/// flux (Scharfetter–Gummel); D = 0 degenerates to upwinding.
std::pair<double, double> flux_coefficients(double v, double D, double h, AdvectionFlux scheme);

inline double scheme_flux(double y_low, double y_high, double v, double D, double h,
                          AdvectionFlux scheme) {
    const auto [cl, ch] = flux_coefficients(v, D, h, scheme);
    return cl * y_low - ch * y_high;
}

/// Face velocity whose scheme flux through the face equals `target` for the
/// given adjacent cell values. Requires y_low, y_high > 0.
double velocity_for_flux(double y_low, double y_high, double target, double D, double h,
                         AdvectionFlux scheme);

/// Applies velocity_for_flux on every interior face.
FaceField velocity_for_flux(const ScalarField& y, const FaceField& target_flux, double D,
                            AdvectionFlux scheme);

/// Generator A of y_t = A y for the advection-diffusion equation with
/// face velocity v. Columns sum to zero; off-diagonals are nonnegative for
/// the exponential-fitted flux.
SparseOperator advection_diffusion_operator(const FaceField& v, double D, AdvectionFlux scheme);

/// Factorised one-step map for a fixed generator: implicit Euler solves
/// (I - dt A) y' = y, Crank–Nicolson (I - dt/2 A) y' = (I + dt/2 A) y.
class ImplicitPropagator {
public:
    ImplicitPropagator(const Eigen::SparseMatrix<double>& generator, double dt, TimeScheme scheme);

    Eigen::VectorXd apply(const Eigen::VectorXd& y) const;
    double dt() const { return dt_; }

private:
    double dt_;
    TimeScheme scheme_;
    Eigen::SparseMatrix<double> explicit_part_;
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu_;
};

/// Accuracy step: min(cfg.dt, h_min²).
double effective_dt(const RectDomain& domain, const StepperConfig& cfg);

/// Number of equal substeps of length ≤ dt covering `duration`.
int substep_count(double duration, double dt);

ScalarField step_advection_diffusion(const ScalarField& y, const FaceField& v, double D,
                                     const StepperConfig& cfg);

/// Flow of y_t = β ∇·∇(a y) for duration t.
ScalarField evolve_weighted_heat(const ScalarField& y, const ScalarField& a, double beta, double t,
                                 const StepperConfig& cfg);

/// Flow of the forward equation with v = D ∇f/f (face log-gradient), i.e.
/// y_t = D ∇·(f ∇(y/f)), for duration t.
ScalarField evolve_stabilizing(const ScalarField& y, const ScalarField& f, double D, double t,
                               const StepperConfig& cfg);

ConvergenceReport fit_decay_rate(std::span<const double> times, std::span<const double> errors);

}  // namespace adrctl
