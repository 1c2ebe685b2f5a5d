#include "adrctl/hsdp.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <unsupported/Eigen/MatrixFunctions>

#include "adrctl/csv.hpp"
#include "adrctl/errors.hpp"

namespace adrctl {

Eigen::VectorXd StackedDensity::masses() const {
    Eigen::VectorXd m(num_states());
    for (int k = 0; k < num_states(); ++k) m[k] = mass(states[k]);
    return m;
}

double StackedDensity::min() const {
    double m = states.front().min();
    for (const auto& s : states) m = std::min(m, s.min());
    return m;
}

Eigen::VectorXd StackedDensity::stacked() const {
    const int n = domain().num_cells();
    Eigen::VectorXd out(n * num_states());
    for (int k = 0; k < num_states(); ++k) out.segment(k * n, n) = states[k].values;
    return out;
}

HybridTarget HybridTarget::make(std::vector<ScalarField> f) {
    if (f.empty()) throw InputError("hsdp", "target needs at least one state");
    HybridTarget t;
    t.masses.resize(f.size());
    for (std::size_t k = 0; k < f.size(); ++k) {
        if (!(f[k].domain == f[0].domain)) throw InputError("hsdp", "targets on different grids");
        if (!f[k].values.allFinite() || f[k].min() < 0.0)
            throw CoefficientError("hsdp", "targets must be finite and nonnegative");
        t.masses[k] = mass(f[k]);
        if (t.masses[k] > 0.0) {
            if (!(f[k].min() > 0.0))
                throw CoefficientError("hsdp", "a supported target must be positive in every cell");
            t.support.push_back(static_cast<int>(k));
        } else if (f[k].max() != 0.0) {
            throw CoefficientError("hsdp", "zero-mass target must vanish identically");
        }
    }
    if (std::abs(t.masses.sum() - 1.0) > 1e-12) throw InputError("hsdp", "target masses must sum to one");
    t.f = std::move(f);
    return t;
}

SpatialGainSet SpatialGainSet::constant(const RectDomain& domain, const Eigen::VectorXd& rates) {
    SpatialGainSet K{domain, {}};
    for (int e = 0; e < rates.size(); ++e)
        K.gains.push_back(Eigen::VectorXd::Constant(domain.num_cells(), rates[e]));
    return K;
}

bool SpatialGainSet::constant_in_space() const {
    return std::all_of(gains.begin(), gains.end(), [](const Eigen::VectorXd& k) {
        return k.size() == 0 || k.maxCoeff() == k.minCoeff();
    });
}

double SpatialGainSet::max() const {
    double m = 0.0;
    for (const auto& k : gains)
        if (k.size()) m = std::max(m, k.maxCoeff());
    return m;
}

void write_gain_csv(std::ostream& out, const SpatialGainSet& K) {
    out << "cell";
    for (int e = 0; e < K.num_edges(); ++e) out << ",edge_" << e + 1;
    out << '\n';
    for (int c = 0; c < K.domain.num_cells(); ++c) {
        out << c;
        for (const auto& k : K.gains) out << ',' << format_double(k[c]);
        out << '\n';
    }
}

void write_stacked_rows(std::ostream& out, double t, const StackedDensity& Y) {
    const std::string ts = format_double(t);
    for (int k = 0; k < Y.num_states(); ++k)
        for (int c = 0; c < Y.states[k].size(); ++c)
            out << ts << ',' << k + 1 << ',' << c << ',' << format_double(Y.states[k].values[c])
                << '\n';
}

SplitStepper::SplitStepper(const TransitionGraph& g, const std::vector<FaceField>& velocities,
                           const std::vector<double>& D, const SpatialGainSet& K, double dt,
                           const StepperConfig& cfg, Execution exec)
    : dt_(dt), exec_(exec) {
    const int N = g.N;
    if (static_cast<int>(velocities.size()) != N || static_cast<int>(D.size()) != N)
        throw InputError("hsdp", "one velocity field and one diffusion constant per state");
    if (K.num_edges() != g.num_edges()) throw InputError("hsdp", "one gain per edge required");
    if (!(dt > 0.0)) throw InputError("hsdp", "time step must be positive");
    for (const auto& k : K.gains)
        if (!k.allFinite() || k.minCoeff() < 0.0)
            throw CoefficientError("hsdp", "gains must be finite and nonnegative");

    const int cells = K.domain.num_cells();
    auto reaction_at = [&](int c) {
        Eigen::MatrixXd R = Eigen::MatrixXd::Zero(N, N);
        for (int e = 0; e < g.num_edges(); ++e) {
            const auto [s, t] = g.edges[e];
            R(s, s) -= K.gains[e][c];
            R(t, s) += K.gains[e][c];
        }
        return Eigen::MatrixXd((0.5 * dt * R).exp());
    };
    if (K.constant_in_space()) {
        half_reaction_.push_back(reaction_at(0));
    } else {
        half_reaction_.resize(cells);
        for (int c = 0; c < cells; ++c) half_reaction_[c] = reaction_at(c);
    }
    for (int k = 0; k < N; ++k)
        transport_.push_back(std::make_shared<const ImplicitPropagator>(
            advection_diffusion_operator(velocities[k], D[k], cfg.advection_flux).matrix, dt,
            cfg.scheme));
}

StackedDensity SplitStepper::step(const StackedDensity& Y) const {
    std::vector<Eigen::VectorXd> v(Y.num_states());
    for (int k = 0; k < Y.num_states(); ++k) v[k] = Y.states[k].values;
    apply_cellwise_matrices(half_reaction_, v, exec_);
    const int N = static_cast<int>(v.size());
    if (exec_ == Execution::Parallel) {
#pragma omp parallel for schedule(static)
        for (int k = 0; k < N; ++k) v[k] = transport_[k]->apply(v[k]);
    } else {
        for (int k = 0; k < N; ++k) v[k] = transport_[k]->apply(v[k]);
    }
    apply_cellwise_matrices(half_reaction_, v, exec_);
    StackedDensity out = Y;
    for (int k = 0; k < N; ++k) out.states[k].values = std::move(v[k]);
    return out;
}

StackedDensity split_step(const TransitionGraph& g, const StackedDensity& Y,
                          const std::vector<FaceField>& velocities, const std::vector<double>& D,
                          const SpatialGainSet& K, double dt, const StepperConfig& cfg) {
    return SplitStepper(g, velocities, D, K, dt, cfg).step(Y);
}

StackedTrajectory simulate(const SplitStepper& stepper, const StackedDensity& Y0, double t_final,
                           int record_every) {
    const int n = static_cast<int>(std::lround(t_final / stepper.dt()));
    StackedTrajectory traj;
    traj.times.push_back(0.0);
    traj.states.push_back(Y0);
    StackedDensity Y = Y0;
    for (int k = 1; k <= n; ++k) {
        Y = stepper.step(Y);
        if (k == n || (record_every > 0 && k % record_every == 0)) {
            traj.times.push_back(k * stepper.dt());
            traj.states.push_back(Y);
        }
    }
    return traj;
}

MassConsistencyReport mass_trajectory_consistency(const TransitionGraph& g,
                                                  const StackedTrajectory& traj,
                                                  const Eigen::VectorXd& rates) {
    MassConsistencyReport rep;
    const Eigen::MatrixXd G = rate_generator(g, rates);
    const Eigen::VectorXd m0 = traj.states.front().masses();
    for (std::size_t k = 0; k < traj.states.size(); ++k) {
        const double t = traj.times[k] - traj.times.front();
        Eigen::VectorXd ode = (t * G).exp() * m0;
        Eigen::VectorXd pde = traj.states[k].masses();
        rep.max_deviation = std::max(rep.max_deviation, (pde - ode).lpNorm<Eigen::Infinity>());
        rep.times.push_back(traj.times[k]);
        rep.pde_masses.push_back(std::move(pde));
        rep.ode_masses.push_back(std::move(ode));
    }
    return rep;
}

std::vector<FaceField> stabilizing_velocities(const HybridTarget& target,
                                              const std::vector<double>& D) {
    if (static_cast<int>(D.size()) != target.num_states())
        throw InputError("hsdp", "one diffusion constant per state");
    std::vector<FaceField> v;
    for (int k = 0; k < target.num_states(); ++k)
        v.push_back(target.masses[k] > 0.0 ? D[k] * log_gradient(target.f[k])
                                           : FaceField::zeros(target.f[k].domain));
    return v;
}

SpatialGainSet stabilizing_gains(const TransitionGraph& g, const HybridTarget& target,
                                 const Eigen::VectorXd& q) {
    if (!target.full_support())
        throw InputError("hsdp", "zero-mass state present; use zero_mass_stabilizing_gains");
    if (g.N != target.num_states() || q.size() != g.num_edges())
        throw InputError("hsdp", "graph, target and rates disagree in size");
    SpatialGainSet K{target.f[0].domain, {}};
    for (int e = 0; e < g.num_edges(); ++e) {
        const int s = g.edges[e].source;
        K.gains.push_back((q[e] * target.masses[s]) * reciprocal(target.f[s]).values);
    }
    return K;
}

ZeroMassLaw zero_mass_stabilizing_gains(const TransitionGraph& g, const HybridTarget& target,
                                        const std::vector<double>& D, double off_support_rate) {
    if (g.N != target.num_states()) throw InputError("hsdp", "graph and target disagree in size");
    std::vector<int> local(g.N, -1);
    for (std::size_t i = 0; i < target.support.size(); ++i) local[target.support[i]] = int(i);

    std::vector<Edge> sub_edges;
    std::vector<int> sub_index(g.num_edges(), -1);
    for (int e = 0; e < g.num_edges(); ++e) {
        const auto [s, t] = g.edges[e];
        if (local[s] >= 0 && local[t] >= 0) {
            sub_index[e] = static_cast<int>(sub_edges.size());
            sub_edges.push_back({local[s], local[t]});
        }
    }
    const auto sub = TransitionGraph::make(static_cast<int>(target.support.size()), sub_edges);
    if (!is_strongly_connected(sub))
        throw GraphError("hsdp", "support subgraph is not strongly connected");

    // Every off-support state must drain into the support.
    std::vector<bool> drains(g.N, false);
    for (int v : target.support) drains[v] = true;
    for (bool changed = true; changed;) {
        changed = false;
        for (const Edge& e : g.edges)
            if (!drains[e.source] && drains[e.target]) drains[e.source] = changed = true;
    }
    if (std::find(drains.begin(), drains.end(), false) != drains.end())
        throw GraphError("hsdp", "an off-support state cannot reach the support");

    Eigen::VectorXd mu_sub(sub.N);
    for (int i = 0; i < sub.N; ++i) mu_sub[i] = target.masses[target.support[i]];
    const Eigen::VectorXd q_sub = sub.N > 1 ? synthesize_stationary_rates(sub, mu_sub)
                                            : Eigen::VectorXd(0);

    ZeroMassLaw law;
    law.rates = Eigen::VectorXd::Zero(g.num_edges());
    law.gains.domain = target.f[0].domain;
    const int cells = law.gains.domain.num_cells();
    for (int e = 0; e < g.num_edges(); ++e) {
        const int s = g.edges[e].source;
        if (sub_index[e] >= 0) {
            law.rates[e] = q_sub[sub_index[e]];
            law.gains.gains.push_back((law.rates[e] * target.masses[s]) *
                                      reciprocal(target.f[s]).values);
        } else if (local[s] < 0) {
            law.rates[e] = off_support_rate;
            law.gains.gains.push_back(Eigen::VectorXd::Constant(cells, off_support_rate));
        } else {
            law.gains.gains.push_back(Eigen::VectorXd::Zero(cells));
        }
    }

    std::vector<int> off;
    for (int v = 0; v < g.N; ++v)
        if (local[v] < 0) off.push_back(v);
    if (!off.empty()) {
        const auto G = coupled_generator(g, stabilizing_velocities(target, D), D, law.gains);
        law.off_support_bound = block_spectral_bound(G, cells, off);
    }
    return law;
}

Eigen::SparseMatrix<double> coupled_generator(const TransitionGraph& g,
                                              const std::vector<FaceField>& velocities,
                                              const std::vector<double>& D,
                                              const SpatialGainSet& K, const StepperConfig& cfg) {
    const int N = g.N;
    const int n = K.domain.num_cells();
    std::vector<Eigen::Triplet<double>> trip;
    for (int k = 0; k < N; ++k) {
        const auto A = advection_diffusion_operator(velocities[k], D[k], cfg.advection_flux);
        for (int col = 0; col < A.matrix.outerSize(); ++col)
            for (Eigen::SparseMatrix<double>::InnerIterator it(A.matrix, col); it; ++it)
                trip.emplace_back(k * n + int(it.row()), k * n + int(it.col()), it.value());
    }
    for (int e = 0; e < g.num_edges(); ++e) {
        const auto [s, t] = g.edges[e];
        for (int c = 0; c < n; ++c) {
            trip.emplace_back(s * n + c, s * n + c, -K.gains[e][c]);
            trip.emplace_back(t * n + c, s * n + c, K.gains[e][c]);
        }
    }
    Eigen::SparseMatrix<double> G(N * n, N * n);
    G.setFromTriplets(trip.begin(), trip.end());
    return G;
}

CoupledSpectrum coupled_spectrum(const Eigen::SparseMatrix<double>& generator, double cell_volume) {
    if (generator.rows() > 8192) throw ConfigError("hsdp", "coupled spectrum capped at 8192 unknowns");
    const Eigen::MatrixXd dense(generator);
    Eigen::EigenSolver<Eigen::MatrixXd> es(dense, true);
    if (es.info() != Eigen::Success) throw NumericalError("hsdp", "eigensolver failed");
    CoupledSpectrum out;
    out.report = spectrum_of(dense);
    Eigen::Index top = 0;
    es.eigenvalues().real().maxCoeff(&top);
    out.stationary = es.eigenvectors().col(top).real();
    const double total = out.stationary.sum() * cell_volume;
    if (total != 0.0) out.stationary /= total;
    return out;
}

double block_spectral_bound(const Eigen::SparseMatrix<double>& generator, int num_cells,
                            const std::vector<int>& states) {
    const Eigen::MatrixXd dense(generator);
    const int m = static_cast<int>(states.size()) * num_cells;
    Eigen::MatrixXd block(m, m);
    for (std::size_t a = 0; a < states.size(); ++a)
        for (std::size_t b = 0; b < states.size(); ++b)
            block.block(a * num_cells, b * num_cells, num_cells, num_cells) =
                dense.block(states[a] * num_cells, states[b] * num_cells, num_cells, num_cells);
    return spectrum_of(block).max_real;
}

namespace {

// Phase 1: v ≡ 0, spatially constant rates, one stepper per control interval.
StackedDensity run_transfer(const TransitionGraph& g, const StackedDensity& Y0,
                            const PiecewiseConstantControl& ctrl, const std::vector<double>& D,
                            const StepperConfig& cfg, StackedTrajectory* record) {
    const RectDomain& dom = Y0.domain();
    const std::vector<FaceField> still(g.N, FaceField::zeros(dom));
    const double dt_eff = effective_dt(dom, cfg);
    StackedDensity Y = Y0;
    if (record) {
        record->times.push_back(0.0);
        record->states.push_back(Y);
    }
    for (const auto& iv : ctrl.intervals) {
        const double len = iv.t_end - iv.t_start;
        const int n = substep_count(len, dt_eff);
        const SplitStepper stepper(g, still, D, SpatialGainSet::constant(dom, iv.rates), len / n,
                                   cfg);
        for (int k = 0; k < n; ++k) Y = stepper.step(Y);
        if (record) {
            record->times.push_back(iv.t_end);
            record->states.push_back(Y);
        }
    }
    return Y;
}

}  // namespace

HybridSteeringPlan hybrid_steering_plan(const TransitionGraph& g, const StackedDensity& Y0,
                                        const HybridTarget& target, double t_final,
                                        const HybridPlanOptions& opts) {
    require_strongly_connected(g, "hsdp");
    if (Y0.num_states() != g.N || target.num_states() != g.N)
        throw InputError("hsdp", "state count does not match the graph");
    if (!target.full_support()) throw InputError("hsdp", "steering requires f_i > 0 for every state");
    if (std::abs(Y0.total_mass() - 1.0) > 1e-10) throw InputError("hsdp", "initial mass must be one");
    if (Y0.min() < 0.0) throw InputError("hsdp", "initial densities must be nonnegative");
    if (!(t_final > 0.0)) throw InputError("hsdp", "t_final must be positive");
    if (static_cast<int>(opts.D.size()) != g.N) throw InputError("hsdp", "one D per state");

    HybridSteeringPlan plan;
    plan.t_final = t_final;
    plan.switch_time = 0.5 * t_final;
    Eigen::VectorXd m0 = Y0.masses();
    m0 /= m0.sum();
    plan.transfer = transfer_control(g, m0, target.masses, plan.switch_time,
                                     opts.precondition_fraction);
    plan.switch_state =
        run_transfer(g, Y0, plan.transfer, opts.D, opts.steering.stepper, nullptr);

    for (int k = 0; k < g.N; ++k) {
        PlanOptions po = opts.steering;
        po.D = opts.D[k];
        plan.state_plans.push_back(synthesize_steering_plan(
            normalized(plan.switch_state.states[k]), TargetDensity::make(normalized(target.f[k])),
            t_final - plan.switch_time, opts.tol / target.masses[k], po));
    }
    return plan;
}

HybridExecution execute_hybrid_plan(const TransitionGraph& g, const HybridSteeringPlan& plan,
                                    const StackedDensity& Y0, const HybridTarget& target,
                                    const HybridPlanOptions& opts) {
    HybridExecution out;
    out.max_rate = plan.transfer.max_rate();
    StackedDensity Y =
        run_transfer(g, Y0, plan.transfer, opts.D, opts.steering.stepper, &out.mass_phase);
    for (int k = 0; k < g.N; ++k) {
        const double mk = mass(Y.states[k]);
        PlanOptions po = opts.steering;
        po.D = opts.D[k];
        const auto res = execute_plan(plan.state_plans[k], normalized(Y.states[k]),
                                      TargetDensity::make(normalized(target.f[k])), po);
        out.max_speed = std::max(out.max_speed, res.max_speed);
        Y.states[k].values = mk * res.final_state.values;
        out.state_errors.push_back(l2_norm({Y.domain(), Y.states[k].values - target.f[k].values}));
    }
    out.final_state = Y;
    return out;
}

}  // namespace adrctl
