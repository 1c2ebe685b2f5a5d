#include "adrctl/pde_core.hpp"

#include <cmath>
#include <limits>

#include "adrctl/errors.hpp"

namespace adrctl {

double bernoulli(double x) {
    if (std::abs(x) < 1e-5) return 1.0 - 0.5 * x + x * x / 12.0;
    if (x > 700.0) return x * std::exp(-x);
    return x / std::expm1(x);
}

namespace {

double bernoulli_derivative(double x) {
    if (std::abs(x) < 1e-4) return -0.5 + x / 6.0;
    if (x > 40.0) return (1.0 - x) * std::exp(-x);
    const double em1 = std::expm1(x);
    return (em1 - x * std::exp(x)) / (em1 * em1);
}

}  // namespace

std::pair<double, double> flux_coefficients(double v, double D, double h, AdvectionFlux scheme) {
    if (D == 0.0) return {std::max(v, 0.0), std::max(-v, 0.0)};
    if (scheme == AdvectionFlux::Centered) return {D / h + 0.5 * v, D / h - 0.5 * v};
    const double peclet = v * h / D;
    return {D / h * bernoulli(-peclet), D / h * bernoulli(peclet)};
}

double velocity_for_flux(double y_low, double y_high, double target, double D, double h,
                         AdvectionFlux scheme) {
    if (!(y_low > 0.0) || !(y_high > 0.0))
        throw PositivityError("pde_core", "velocity inversion needs positive cell values");
    if (D == 0.0) return target >= 0.0 ? target / y_low : target / y_high;
    if (scheme == AdvectionFlux::Centered)
        return (target + D * (y_high - y_low) / h) / (0.5 * (y_low + y_high));

    // Exponential-fitted flux in Péclet form: g(P) = B(P)(y_l - y_h) + P y_l,
    // strictly increasing with g' ≥ min(y_l, y_h) > 0.
    const double goal = target * h / D;
    const double dy = y_low - y_high;
    auto g = [&](double P) { return bernoulli(P) * dy + P * y_low; };
    auto dg = [&](double P) { return bernoulli_derivative(P) * dy + y_low; };

    double P = std::log(y_high / y_low) + goal / (0.5 * (y_low + y_high));
    double lo = P, hi = P;
    double step = 1.0;
    while (g(lo) > goal) { lo -= step; step *= 2.0; }
    step = 1.0;
    while (g(hi) < goal) { hi += step; step *= 2.0; }
    for (int it = 0; it < 200; ++it) {
        const double r = g(P) - goal;
        if (r > 0.0) hi = P; else lo = P;
        double next = P - r / dg(P);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - P) <= 1e-16 * (1.0 + std::abs(P))) { P = next; break; }
        P = next;
        if (hi - lo <= 1e-16 * (1.0 + std::abs(P))) break;
    }
    return P * D / h;
}

FaceField velocity_for_flux(const ScalarField& y, const FaceField& target_flux, double D,
                            AdvectionFlux scheme) {
    FaceField v = FaceField::zeros(y.domain);
    for_each_face(y.domain, [&](const Face& f) {
        v.at(f) = velocity_for_flux(y.values[f.low], y.values[f.high], target_flux.at(f), D,
                                    y.domain.spacing[f.axis], scheme);
    });
    return v;
}

SparseOperator advection_diffusion_operator(const FaceField& v, double D, AdvectionFlux scheme) {
    const RectDomain& d = v.domain;
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(4 * (d.num_x_faces() + d.num_y_faces()) + d.num_cells());
    for_each_face(d, [&](const Face& f) {
        const double h = d.spacing[f.axis];
        const auto [cl, ch] = flux_coefficients(v.at(f), D, h, scheme);
        trips.emplace_back(f.low, f.low, -cl / h);
        trips.emplace_back(f.low, f.high, ch / h);
        trips.emplace_back(f.high, f.low, cl / h);
        trips.emplace_back(f.high, f.high, -ch / h);
    });
    // Explicit zero diagonal keeps the sparsity pattern complete for v = 0, D = 0.
    for (int k = 0; k < d.num_cells(); ++k) trips.emplace_back(k, k, 0.0);
    SparseOperator op;
    op.matrix.resize(d.num_cells(), d.num_cells());
    op.matrix.setFromTriplets(trips.begin(), trips.end());
    op.assembled_from = scheme == AdvectionFlux::Centered ? "advection-diffusion (centred)"
                                                          : "advection-diffusion (exponential-fitted)";
    return op;
}

ImplicitPropagator::ImplicitPropagator(const Eigen::SparseMatrix<double>& generator, double dt,
                                       TimeScheme scheme)
    : dt_(dt), scheme_(scheme) {
    if (!(dt > 0.0)) throw ConfigError("pde_core", "time step must be positive");
    const int n = static_cast<int>(generator.rows());
    Eigen::SparseMatrix<double> I(n, n);
    I.setIdentity();
    const double theta = scheme == TimeScheme::ImplicitEuler ? 1.0 : 0.5;
    Eigen::SparseMatrix<double> lhs = I - theta * dt * generator;
    if (scheme == TimeScheme::CrankNicolson) explicit_part_ = I + 0.5 * dt * generator;
    lu_.compute(lhs);
    if (lu_.info() != Eigen::Success)
        throw NumericalError("pde_core", "factorisation of the step matrix failed");
}

Eigen::VectorXd ImplicitPropagator::apply(const Eigen::VectorXd& y) const {
    Eigen::VectorXd out =
        scheme_ == TimeScheme::CrankNicolson ? Eigen::VectorXd(lu_.solve(explicit_part_ * y))
                                             : Eigen::VectorXd(lu_.solve(y));
    if (!out.allFinite()) throw NumericalError("pde_core", "non-finite state after step");
    return out;
}

double effective_dt(const RectDomain& domain, const StepperConfig& cfg) {
    double h = domain.spacing[0];
    if (domain.dim == 2) h = std::min(h, domain.spacing[1]);
    return std::min(cfg.dt, h * h);
}

int substep_count(double duration, double dt) {
    if (duration <= 0.0) return 0;
    return std::max(1, static_cast<int>(std::ceil(duration / dt * (1.0 - 1e-12))));
}

ScalarField step_advection_diffusion(const ScalarField& y, const FaceField& v, double D,
                                     const StepperConfig& cfg) {
    if (!v.all_finite()) throw InputError("pde_core", "velocity field is not finite");
    const auto op = advection_diffusion_operator(v, D, cfg.advection_flux);
    ImplicitPropagator step(op.matrix, cfg.dt, cfg.scheme);
    return {y.domain, step.apply(y.values)};
}

ScalarField evolve_weighted_heat(const ScalarField& y, const ScalarField& a, double beta, double t,
                                 const StepperConfig& cfg) {
    if (!(a.min() > 0.0)) throw CoefficientError("pde_core", "weight a must be positive");
    if (beta == 0.0 || t <= 0.0) return y;
    const int n = substep_count(t, effective_dt(y.domain, cfg));
    const auto L = divergence_form_operator(a, ScalarField::constant(y.domain, 1.0));
    ImplicitPropagator step(beta * L.matrix, t / n, cfg.scheme);
    Eigen::VectorXd state = y.values;
    for (int k = 0; k < n; ++k) state = step.apply(state);
    return {y.domain, state};
}

ScalarField evolve_stabilizing(const ScalarField& y, const ScalarField& f, double D, double t,
                               const StepperConfig& cfg) {
    if (!(f.min() > 0.0)) throw CoefficientError("pde_core", "target density must be positive");
    if (t <= 0.0) return y;
    const FaceField v = D * log_gradient(f);
    const int n = substep_count(t, effective_dt(y.domain, cfg));
    const auto op = advection_diffusion_operator(v, D, cfg.advection_flux);
    ImplicitPropagator step(op.matrix, t / n, cfg.scheme);
    Eigen::VectorXd state = y.values;
    for (int k = 0; k < n; ++k) state = step.apply(state);
    return {y.domain, state};
}

ConvergenceReport fit_decay_rate(std::span<const double> times, std::span<const double> errors) {
    if (times.size() != errors.size()) throw InputError("pde_core", "times/errors size mismatch");
    if (times.size() < 3) throw InputError("pde_core", "decay fit needs at least three samples");
    const int n = static_cast<int>(times.size());
    Eigen::MatrixXd A(n, 2);
    Eigen::VectorXd b(n);
    for (int k = 0; k < n; ++k) {
        if (!(errors[k] > 0.0)) throw InputError("pde_core", "decay fit needs positive errors");
        A(k, 0) = 1.0;
        A(k, 1) = times[k];
        b[k] = std::log(errors[k]);
    }
    const Eigen::Vector2d coef = A.colPivHouseholderQr().solve(b);
    ConvergenceReport r;
    r.prefactor = std::exp(coef[0]);
    r.fitted_rate = -coef[1];
    r.residual = std::sqrt((A * coef - b).squaredNorm() / n);
    return r;
}

}  // namespace adrctl
