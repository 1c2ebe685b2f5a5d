#include "adrctl/scenario.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "adrctl/config.hpp"
#include "adrctl/csv.hpp"
#include "adrctl/ctmc.hpp"
#include "adrctl/density_control.hpp"
#include "adrctl/errors.hpp"
#include "adrctl/expr.hpp"
#include "adrctl/grid.hpp"
#include "adrctl/hsdp.hpp"
#include "adrctl/particles.hpp"
#include "adrctl/pde_core.hpp"

namespace adrctl {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr int kMaxStates = 16;

std::map<std::string, std::set<std::string>> config_schema() {
    std::set<std::string> state_keys{"expr", "masses", "distribution"};
    for (int k = 1; k <= kMaxStates; ++k) state_keys.insert("state" + std::to_string(k));
    return {
        {"scenario", {"name", "controller", "seed", "output", "snapshot_every"}},
        {"domain", {"dim", "lengths", "cells"}},
        {"physics", {"D", "t_final", "dt", "scheme", "flux"}},
        {"target", state_keys},
        {"initial", state_keys},
        {"path", {"start", "end"}},
        {"graph", {"file", "edges", "vertices"}},
        {"steering", {"J_max", "gain_margin"}},
        {"particles", {"count", "bins", "dt"}},
        {"spectrum", {"rates"}},
        {"tolerances",
         {"final_error", "min_rate", "tracking_error", "endpoint_error", "l1_distance",
          "max_real", "min_gap", "mass_drift", "max_speed"}},
    };
}

struct Summary {
    json checks = json::array();
    bool pass = true;
};

class Run {
public:
    Run(const Config& cfg, fs::path out, std::uint64_t seed, bool verbose, std::ostream& log)
        : cfg(cfg), out(std::move(out)), seed(seed), verbose(verbose), log(log) {}

    const Config& cfg;
    fs::path out;
    std::uint64_t seed;
    bool verbose;
    std::ostream& log;
    json parameters = json::object();
    json measured = json::object();
    Summary summary;

    std::ofstream open(const std::string& name) const {
        std::ofstream f(out / name);
        if (!f) throw ConfigError("cli", "cannot write '" + (out / name).string() + "'");
        return f;
    }

    void note(const std::string& msg) const {
        if (verbose) log << msg << '\n';
    }

    /// Records value `op` threshold when [tolerances] declares `key`.
    void check(const std::string& name, double value, const std::string& op,
               const std::string& key) {
        if (!cfg.has("tolerances", key)) return;
        const double thr = cfg.get_double("tolerances", key);
        const bool ok = std::isfinite(value) && (op == "<=" ? value <= thr : value >= thr);
        summary.pass = summary.pass && ok;
        summary.checks.push_back(
            {{"name", name}, {"value", value}, {"op", op}, {"threshold", thr}, {"pass", ok}});
    }
};

RectDomain load_domain(const Config& cfg) {
    const int dim = cfg.get_int_or("domain", "dim", 1);
    const auto lengths = cfg.get_doubles("domain", "lengths");
    std::vector<int> cells;
    for (double c : cfg.get_doubles("domain", "cells")) {
        if (c != std::floor(c)) throw ConfigError("cli", "[domain] cells must be integers");
        cells.push_back(static_cast<int>(c));
    }
    if (static_cast<int>(lengths.size()) != dim || static_cast<int>(cells.size()) != dim)
        throw ConfigError("cli", "[domain] lengths and cells need one entry per dimension");
    return build_grid(dim, lengths, cells);
}

StepperConfig load_stepper(const Config& cfg) {
    StepperConfig sc;
    sc.dt = cfg.get_double_or("physics", "dt", sc.dt);
    if (!(sc.dt > 0.0)) throw ConfigError("cli", "[physics] dt must be positive");
    if (cfg.has("physics", "scheme")) {
        const auto s = cfg.get_string("physics", "scheme");
        if (s == "implicit-euler") sc.scheme = TimeScheme::ImplicitEuler;
        else if (s == "crank-nicolson") sc.scheme = TimeScheme::CrankNicolson;
        else throw ConfigError("cli", "[physics] scheme must be implicit-euler or crank-nicolson");
    }
    if (cfg.has("physics", "flux")) {
        const auto s = cfg.get_string("physics", "flux");
        if (s == "exponential-fitted") sc.advection_flux = AdvectionFlux::ExponentialFitted;
        else if (s == "centered") sc.advection_flux = AdvectionFlux::Centered;
        else throw ConfigError("cli", "[physics] flux must be exponential-fitted or centered");
    }
    return sc;
}

double positive(const Config& cfg, const std::string& section, const std::string& key) {
    const double v = cfg.get_double(section, key);
    if (!(v > 0.0)) throw ConfigError("cli", "[" + section + "] " + key + " must be positive");
    return v;
}

/// `@path` reads tabulated cell values, anything else is an expression.
ScalarField load_field(const Config& cfg, const std::string& section, const std::string& key,
                       const RectDomain& dom) {
    const std::string text = cfg.get_string(section, key);
    if (!text.empty() && text.front() == '@') {
        std::ifstream in(cfg.resolve_path(text.substr(1)));
        const auto values = read_tabulated_values(in);
        if (static_cast<int>(values.size()) != dom.num_cells())
            throw ConfigError("cli", "[" + section + "] " + key + ": tabulated file has " +
                                         std::to_string(values.size()) + " values, grid has " +
                                         std::to_string(dom.num_cells()) + " cells");
        return ScalarField{dom, Eigen::Map<const Eigen::VectorXd>(values.data(), dom.num_cells())};
    }
    const Expression e = Expression::parse(text);
    ScalarField f = ScalarField::from_function(dom, [&](double x, double y) { return e(x, y); });
    if (!f.values.allFinite())
        throw ConfigError("cli", "[" + section + "] " + key + " evaluates to a non-finite value");
    return f;
}

ScalarField load_density(const Config& cfg, const std::string& section, const std::string& key,
                         const RectDomain& dom) {
    ScalarField f = load_field(cfg, section, key, dom);
    if (f.min() < 0.0) throw ConfigError("cli", "[" + section + "] " + key + " is negative somewhere");
    return normalized(f);
}

TransitionGraph load_graph(const Config& cfg) {
    if (cfg.has("graph", "file")) {
        std::ifstream in(cfg.get_path("graph", "file"));
        return read_edge_list(in);
    }
    std::string text;
    if (cfg.has("graph", "vertices")) text += "vertices " + cfg.get_string("graph", "vertices") + "\n";
    for (const auto& pair : cfg.get_strings("graph", "edges")) text += pair + "\n";
    std::istringstream in(text);
    return read_edge_list(in);
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

StackedDensity load_stack(const Config& cfg, const std::string& section, const RectDomain& dom,
                          int N) {
    const auto masses = cfg.get_doubles(section, "masses");
    if (static_cast<int>(masses.size()) != N)
        throw ConfigError("cli", "[" + section + "] masses needs one entry per state");
    StackedDensity Y;
    for (int k = 0; k < N; ++k) {
        const std::string key = "state" + std::to_string(k + 1);
        if (masses[k] < 0.0) throw ConfigError("cli", "[" + section + "] masses must be nonnegative");
        if (masses[k] == 0.0) {
            Y.states.push_back(ScalarField::constant(dom, 0.0));
            continue;
        }
        ScalarField f = cfg.has(section, key) ? load_density(cfg, section, key, dom)
                                              : normalized(ScalarField::constant(dom, 1.0));
        f.values *= masses[k];
        Y.states.push_back(std::move(f));
    }
    return Y;
}

std::vector<double> load_D(const Config& cfg, int N) {
    std::vector<double> D = cfg.has("physics", "D") ? cfg.get_doubles("physics", "D")
                                                    : std::vector<double>{1.0};
    if (D.size() == 1) D.assign(N, D[0]);
    if (static_cast<int>(D.size()) != N)
        throw ConfigError("cli", "[physics] D needs one value or one per state");
    for (double d : D)
        if (!(d >= 0.0)) throw ConfigError("cli", "[physics] D must be nonnegative");
    return D;
}

void write_field_csv(std::ostream& out, const ScalarField& f) {
    out << "cell,value\n";
    for (int c = 0; c < f.size(); ++c) out << c << ',' << format_double(f.values[c]) << '\n';
}

void write_series_csv(std::ostream& out, const std::string& header, const std::vector<double>& t,
                      const std::vector<double>& v) {
    out << header << '\n';
    for (std::size_t k = 0; k < t.size(); ++k)
        out << format_double(t[k]) << ',' << format_double(v[k]) << '\n';
}

/// Block average onto a coarser grid whose cell counts divide the fine ones.
ScalarField coarse_grain(const ScalarField& fine, const RectDomain& coarse) {
    const RectDomain& dom = fine.domain;
    if (dom.nx() % coarse.nx() || dom.ny() % coarse.ny())
        throw ConfigError("cli", "[particles] bins must divide the domain cell counts");
    const int rx = dom.nx() / coarse.nx(), ry = dom.ny() / coarse.ny();
    ScalarField out = ScalarField::constant(coarse, 0.0);
    for (int j = 0; j < dom.ny(); ++j)
        for (int i = 0; i < dom.nx(); ++i)
            out.values[coarse.index(i / rx, j / ry)] += fine.values[dom.index(i, j)] / (rx * ry);
    return out;
}

void fit_if_possible(Run& run, const std::vector<double>& times, const std::vector<double>& errors) {
    std::vector<double> t, e;
    for (std::size_t k = 0; k < times.size(); ++k)
        if (errors[k] > 1e-14) {
            t.push_back(times[k]);
            e.push_back(errors[k]);
        }
    if (t.size() < 3) {
        run.measured["fitted_rate"] = nullptr;
        return;
    }
    const auto rep = fit_decay_rate(t, e);
    run.measured["fitted_rate"] = rep.fitted_rate;
    run.measured["fit_prefactor"] = rep.prefactor;
    run.measured["fit_residual"] = rep.residual;
    run.check("fitted_rate", rep.fitted_rate, ">=", "min_rate");
}

// ---------------------------------------------------------------- controllers

void run_scalar_stabilize(Run& run) {
    const Config& cfg = run.cfg;
    const RectDomain dom = load_domain(cfg);
    const StepperConfig sc = load_stepper(cfg);
    const double D = load_D(cfg, 1)[0];
    const double t_final = positive(cfg, "physics", "t_final");
    const auto target = TargetDensity::make(load_density(cfg, "target", "expr", dom));
    ScalarField y = load_density(cfg, "initial", "expr", dom);
    const int every = cfg.get_int_or("scenario", "snapshot_every", 0);

    const FaceField v = stabilizing_velocity(target, D);
    const int n = substep_count(t_final, effective_dt(dom, sc));
    const double dt = t_final / n;
    ImplicitPropagator step(advection_diffusion_operator(v, D, sc.advection_flux).matrix, dt,
                            sc.scheme);
    auto traj = run.open("trajectory.csv");
    traj << "t,cell,value\n";
    write_snapshot_rows(traj, 0.0, y);
    std::vector<double> times{0.0}, errors{l2_norm({dom, y.values - target.f.values})};
    double drift = 0.0;
    for (int k = 1; k <= n; ++k) {
        y.values = step.apply(y.values);
        drift = std::max(drift, std::abs(mass(y) - 1.0));
        times.push_back(k * dt);
        errors.push_back(l2_norm({dom, y.values - target.f.values}));
        if ((every > 0 && k % every == 0) || k == n) write_snapshot_rows(traj, k * dt, y);
    }
    {
        auto file = run.open("errors.csv");
        write_series_csv(file, "t,l2_error", times, errors);
    }
    {
        auto file = run.open("final.csv");
        write_field_csv(file, y);
    }

    run.parameters["D"] = D;
    run.parameters["t_final"] = t_final;
    run.parameters["dt"] = dt;
    run.measured["final_error"] = errors.back();
    run.measured["max_speed"] = v.max_abs();
    run.measured["mass_drift"] = drift;
    run.check("final_error", errors.back(), "<=", "final_error");
    run.check("mass_drift", drift, "<=", "mass_drift");
    fit_if_possible(run, times, errors);
}

void run_hybrid_stabilize(Run& run) {
    const Config& cfg = run.cfg;
    const RectDomain dom = load_domain(cfg);
    const StepperConfig sc = load_stepper(cfg);
    const TransitionGraph g = load_graph(cfg);
    const auto D = load_D(cfg, g.N);
    const double t_final = positive(cfg, "physics", "t_final");
    const auto target = HybridTarget::make(load_stack(cfg, "target", dom, g.N).states);
    const StackedDensity Y0 = load_stack(cfg, "initial", dom, g.N);

    SpatialGainSet K;
    Eigen::VectorXd q;
    if (target.full_support()) {
        q = synthesize_stationary_rates(g, target.masses);
        K = stabilizing_gains(g, target, q);
    } else {
        const auto law = zero_mass_stabilizing_gains(g, target, D);
        q = law.rates;
        K = law.gains;
        run.measured["off_support_bound"] = law.off_support_bound;
    }
    const auto v = stabilizing_velocities(target, D);
    const int n = substep_count(t_final, effective_dt(dom, sc));
    const SplitStepper stepper(g, v, D, K, t_final / n, sc);
    const int every = std::max(1, cfg.get_int_or("scenario", "snapshot_every", n / 100 + 1));
    const auto traj = simulate(stepper, Y0, t_final, every);

    const Eigen::VectorXd f_stack = StackedDensity{target.f}.stacked();
    std::vector<double> errors;
    auto rows = run.open("trajectory.csv");
    rows << "t,state,cell,value\n";
    for (std::size_t k = 0; k < traj.states.size(); ++k) {
        errors.push_back(std::sqrt((traj.states[k].stacked() - f_stack).squaredNorm() *
                                   dom.cell_volume()));
        write_stacked_rows(rows, traj.times[k], traj.states[k]);
    }
    {
        auto file = run.open("errors.csv");
        write_series_csv(file, "t,l2_error", traj.times, errors);
    }
    {
        auto file = run.open("gains.csv");
        write_gain_csv(file, K);
    }

    run.parameters["D"] = D;
    run.parameters["t_final"] = t_final;
    run.parameters["rates"] = std::vector<double>(q.data(), q.data() + q.size());
    run.measured["final_error"] = errors.back();
    run.measured["max_gain"] = K.max();
    run.measured["mass_drift"] = std::abs(traj.states.back().total_mass() - 1.0);
    run.check("final_error", errors.back(), "<=", "final_error");
    run.check("mass_drift", std::abs(traj.states.back().total_mass() - 1.0), "<=", "mass_drift");
    fit_if_possible(run, traj.times, errors);
}

void run_stabilize(Run& run) {
    if (run.cfg.has_section("graph")) run_hybrid_stabilize(run);
    else run_scalar_stabilize(run);
}

PlanOptions load_plan_options(const Config& cfg, double D) {
    PlanOptions po;
    po.D = D;
    po.stepper = load_stepper(cfg);
    po.J_max = cfg.get_int_or("steering", "J_max", po.J_max);
    po.gain_margin = cfg.get_double_or("steering", "gain_margin", po.gain_margin);
    return po;
}

void run_steer_density(Run& run) {
    const Config& cfg = run.cfg;
    const RectDomain dom = load_domain(cfg);
    const double D = load_D(cfg, 1)[0];
    const PlanOptions po = load_plan_options(cfg, D);
    const double t_final = positive(cfg, "physics", "t_final");
    const double tol = cfg.get_double_or("tolerances", "final_error", 1e-2);
    const auto target = TargetDensity::make(load_density(cfg, "target", "expr", dom));
    const ScalarField y0 = load_density(cfg, "initial", "expr", dom);

    const SteeringPlan plan = synthesize_steering_plan(y0, target, t_final, tol, po);
    if (plan.warning) run.log << "warning: " << *plan.warning << '\n';
    {
        auto file = run.open("plan.txt");
        write_plan(file, plan);
    }
    const auto res = execute_plan(plan, y0, target, po, cfg.get_int_or("scenario", "snapshot_every", 0));
    auto traj = run.open("trajectory.csv");
    traj << "t,cell,value\n";
    for (const auto& s : res.snapshots) write_snapshot_rows(traj, s.t, s.y);
    auto gains = run.open("gain_errors.csv");
    gains << "j,a_norm_error,envelope,drive\n";
    for (std::size_t j = 0; j < res.gain_errors.size(); ++j)
        gains << j + 1 << ',' << format_double(res.gain_errors[j]) << ','
              << format_double(res.gain_envelope[j]) << ',' << format_double(res.gain_drive[j])
              << '\n';
    {
        auto file = run.open("final.csv");
        write_field_csv(file, res.final_state);
    }

    run.parameters["D"] = D;
    run.parameters["t_final"] = t_final;
    run.parameters["epsilon"] = plan.epsilon;
    run.parameters["alpha"] = plan.schedule.alpha;
    run.parameters["J"] = plan.schedule.J;
    run.measured["spectral_gap"] = plan.measured_gap;
    run.measured["predicted_error"] = plan.schedule.predicted_error;
    run.measured["final_error"] = res.final_error;
    run.measured["max_speed"] = res.max_speed;
    if (plan.warning) run.measured["warning"] = *plan.warning;
    run.check("final_error", res.final_error, "<=", "final_error");
    run.check("max_speed", res.max_speed, "<=", "max_speed");
}

void run_path_follow(Run& run) {
    const Config& cfg = run.cfg;
    const RectDomain dom = load_domain(cfg);
    const StepperConfig sc = load_stepper(cfg);
    const double D = load_D(cfg, 1)[0];
    const double t_final = positive(cfg, "physics", "t_final");
    const ScalarField g0 = load_density(cfg, "path", "start", dom);
    const ScalarField g1 = load_density(cfg, "path", "end", dom);
    const DensityPath gamma = [&](double t) {
        const double s = t / t_final;
        return ScalarField{dom, (1.0 - s) * g0.values + s * g1.values};
    };
    const DensityPath dgamma = [&](double) {
        return ScalarField{dom, (g1.values - g0.values) / t_final};
    };
    const auto res = follow_path(gamma, dgamma, t_final, D, sc);
    {
        auto file = run.open("errors.csv");
        write_series_csv(file, "t,tracking_error", res.times, res.errors);
    }
    {
        auto file = run.open("final.csv");
        write_field_csv(file, res.final_state);
    }
    run.parameters["D"] = D;
    run.parameters["t_final"] = t_final;
    run.measured["max_tracking_error"] = res.max_tracking_error;
    run.measured["max_speed"] = res.max_speed;
    run.check("tracking_error", res.max_tracking_error, "<=", "tracking_error");
    run.check("max_speed", res.max_speed, "<=", "max_speed");
}

void run_ctmc_plan(Run& run) {
    const Config& cfg = run.cfg;
    const TransitionGraph g = load_graph(cfg);
    const double T = positive(cfg, "physics", "t_final");
    const Eigen::VectorXd mu0 = to_vector(cfg.get_doubles("initial", "distribution"));
    const Eigen::VectorXd muT = to_vector(cfg.get_doubles("target", "distribution"));
    if (mu0.size() != g.N || muT.size() != g.N)
        throw ConfigError("cli", "distributions need one entry per vertex");
    const auto ctrl = transfer_control(g, mu0, muT, T);
    const auto traj = propagate(g, mu0, ctrl);
    {
        auto file = run.open("control.csv");
        write_control_csv(file, ctrl);
    }
    auto rows = run.open("trajectory.csv");
    rows << "t,state,value\n";
    for (std::size_t k = 0; k < traj.states.size(); ++k)
        for (int v = 0; v < g.N; ++v)
            rows << format_double(traj.times[k]) << ',' << v + 1 << ','
                 << format_double(traj.states[k][v]) << '\n';
    {
        auto file = run.open("graph.txt");
        write_edge_list(file, g);
    }

    const double err = (traj.states.back() - muT).lpNorm<Eigen::Infinity>();
    run.parameters["T"] = T;
    run.measured["intervals"] = ctrl.intervals.size();
    run.measured["max_rate"] = ctrl.max_rate();
    run.measured["endpoint_error"] = err;
    run.measured["admissible"] = ctrl.admissible();
    run.check("endpoint_error", err, "<=", "endpoint_error");
}

void run_hsdp_steer(Run& run) {
    const Config& cfg = run.cfg;
    const RectDomain dom = load_domain(cfg);
    const TransitionGraph g = load_graph(cfg);
    HybridPlanOptions ho;
    ho.D = load_D(cfg, g.N);
    ho.steering = load_plan_options(cfg, 1.0);
    ho.tol = cfg.get_double_or("tolerances", "final_error", ho.tol);
    const double t_final = positive(cfg, "physics", "t_final");
    const auto target = HybridTarget::make(load_stack(cfg, "target", dom, g.N).states);
    const StackedDensity Y0 = load_stack(cfg, "initial", dom, g.N);

    const auto plan = hybrid_steering_plan(g, Y0, target, t_final, ho);
    const auto res = execute_hybrid_plan(g, plan, Y0, target, ho);
    {
        auto file = run.open("control.csv");
        write_control_csv(file, plan.transfer);
    }
    auto masses = run.open("masses.csv");
    masses << "t,state,mass\n";
    for (std::size_t k = 0; k < res.mass_phase.states.size(); ++k) {
        const auto m = res.mass_phase.states[k].masses();
        for (int v = 0; v < g.N; ++v)
            masses << format_double(res.mass_phase.times[k]) << ',' << v + 1 << ','
                   << format_double(m[v]) << '\n';
    }
    auto fin = run.open("final.csv");
    fin << "t,state,cell,value\n";
    write_stacked_rows(fin, t_final, res.final_state);
    for (int k = 0; k < g.N; ++k) {
        std::ofstream p = run.open("plan_state" + std::to_string(k + 1) + ".txt");
        write_plan(p, plan.state_plans[k]);
    }

    double worst = 0.0;
    for (double e : res.state_errors) worst = std::max(worst, e);
    run.parameters["D"] = ho.D;
    run.parameters["t_final"] = t_final;
    run.measured["state_errors"] = res.state_errors;
    run.measured["max_speed"] = res.max_speed;
    run.measured["max_rate"] = res.max_rate;
    run.check("final_error", worst, "<=", "final_error");
    run.check("max_speed", res.max_speed, "<=", "max_speed");
}

void run_particles(Run& run) {
    const Config& cfg = run.cfg;
    const RectDomain dom = load_domain(cfg);
    const StepperConfig sc = load_stepper(cfg);
    const double D = load_D(cfg, 1)[0];
    const double t_final = positive(cfg, "physics", "t_final");
    const auto target = TargetDensity::make(load_density(cfg, "target", "expr", dom));
    const ScalarField y0 = load_density(cfg, "initial", "expr", dom);
    const int Np = cfg.get_int_or("particles", "count", 100000);
    const double pdt = cfg.get_double_or("particles", "dt", 1e-3);
    std::vector<int> bins_cells;
    for (double b : cfg.has("particles", "bins") ? cfg.get_doubles("particles", "bins")
                                                 : std::vector<double>(dom.dim, 32.0))
        bins_cells.push_back(static_cast<int>(b));
    const RectDomain bins = build_grid(dom.dim, std::span<const double>(dom.lengths.data(), dom.dim),
                                       bins_cells);

    const FaceField v = stabilizing_velocity(target, D);
    ParticleEnsemble ens = sample_ensemble(StackedDensity{{y0}}, Np, run.seed);
    const int steps = substep_count(t_final, pdt);
    for (int k = 0; k < steps; ++k) sde_step(ens, {v}, {D}, nullptr, t_final / steps);
    const auto emp = empirical_density(ens, bins);

    const ScalarField pde = evolve_stabilizing(y0, target.f, D, t_final, sc);
    const ScalarField pde_binned = coarse_grain(pde, bins);
    const double l1 = l1_norm({bins, emp.density.states[0].values - pde_binned.values});

    {
        auto file = run.open("ensemble.csv");
        write_ensemble_csv(file, ens);
    }
    {
        auto file = run.open("empirical.csv");
        write_field_csv(file, emp.density.states[0]);
    }
    {
        auto file = run.open("pde_binned.csv");
        write_field_csv(file, pde_binned);
    }
    run.parameters["D"] = D;
    run.parameters["t_final"] = t_final;
    run.parameters["particles"] = Np;
    run.parameters["particle_dt"] = t_final / steps;
    run.measured["l1_distance"] = l1;
    run.check("l1_distance", l1, "<=", "l1_distance");
}

void write_eigenvalues(std::ostream& out, const Eigen::VectorXcd& ev) {
    out << "index,real,imag\n";
    for (int k = 0; k < ev.size(); ++k)
        out << k << ',' << format_double(ev[k].real()) << ',' << format_double(ev[k].imag()) << '\n';
}

void run_spectrum(Run& run) {
    const Config& cfg = run.cfg;
    SpectrumReport rep;
    if (cfg.has_section("graph") && !cfg.has_section("domain")) {
        const TransitionGraph g = load_graph(cfg);
        const Eigen::VectorXd q =
            cfg.has("spectrum", "rates")
                ? to_vector(cfg.get_doubles("spectrum", "rates"))
                : synthesize_stationary_rates(g, to_vector(cfg.get_doubles("target", "distribution")));
        rep = spectrum_check(g, q);
        run.parameters["rates"] = std::vector<double>(q.data(), q.data() + q.size());
    } else if (cfg.has_section("graph")) {
        const RectDomain dom = load_domain(cfg);
        const TransitionGraph g = load_graph(cfg);
        const auto D = load_D(cfg, g.N);
        const auto target = HybridTarget::make(load_stack(cfg, "target", dom, g.N).states);
        SpatialGainSet K;
        if (target.full_support()) {
            K = stabilizing_gains(g, target, synthesize_stationary_rates(g, target.masses));
        } else {
            const auto law = zero_mass_stabilizing_gains(g, target, D);
            K = law.gains;
            run.measured["off_support_bound"] = law.off_support_bound;
        }
        const auto G = coupled_generator(g, stabilizing_velocities(target, D), D, K, load_stepper(cfg));
        const auto cs = coupled_spectrum(G, dom.cell_volume());
        rep = cs.report;
        if (target.full_support()) {
            const double mismatch =
                (cs.stationary - StackedDensity{target.f}.stacked()).lpNorm<Eigen::Infinity>();
            run.measured["stationary_mismatch"] = mismatch;
        }
    } else {
        const RectDomain dom = load_domain(cfg);
        const auto target = TargetDensity::make(load_density(cfg, "target", "expr", dom));
        const auto L = divergence_form_operator(target.a, ScalarField::constant(dom, 1.0));
        rep = spectrum_of(Eigen::MatrixXd(L.matrix));
    }
    {
        auto file = run.open("eigenvalues.csv");
        write_eigenvalues(file, rep.eigenvalues);
    }
    run.measured["max_real"] = rep.max_real;
    run.measured["gap"] = rep.gap;
    run.measured["zero_multiplicity"] = rep.zero_multiplicity;
    run.check("max_real", rep.max_real, "<=", "max_real");
    run.check("gap", rep.gap, ">=", "min_gap");
}

const std::map<std::string, std::function<void(Run&)>>& controllers() {
    static const std::map<std::string, std::function<void(Run&)>> table{
        {"steer-density", run_steer_density}, {"ctmc-plan", run_ctmc_plan},
        {"hsdp-steer", run_hsdp_steer},       {"stabilize", run_stabilize},
        {"particles", run_particles},         {"spectrum", run_spectrum},
        {"path-follow", run_path_follow},
    };
    return table;
}

}  // namespace

const std::vector<std::string>& scenario_subcommands() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        for (const auto& [name, fn] : controllers()) n.push_back(name);
        return n;
    }();
    return names;
}

int run_scenario(const std::string& subcommand, const RunOptions& opts, std::ostream& log,
                 std::ostream& err) {
    const auto it = controllers().find(subcommand);
    if (it == controllers().end()) {
        err << "usage error: unknown subcommand '" << subcommand << "'\n";
        return kExitUsage;
    }
    fs::path out;
    try {
        const Config cfg = Config::load(opts.config);
        cfg.validate(config_schema());
        if (cfg.has("scenario", "controller") && cfg.get_string("scenario", "controller") != subcommand)
            throw ConfigError("cli", "config declares controller '" +
                                         cfg.get_string("scenario", "controller") +
                                         "' but subcommand is '" + subcommand + "'");
        std::uint64_t seed = 0;
        if (opts.seed) seed = *opts.seed;
        else if (cfg.has("scenario", "seed")) seed = std::stoull(cfg.get_string("scenario", "seed"));
        out = opts.out_dir ? *opts.out_dir
                           : (cfg.has("scenario", "output") ? fs::path(cfg.get_string("scenario", "output"))
                                                            : fs::path("adrctl_out"));
        fs::create_directories(out);

        Run run(cfg, out, seed, opts.verbose, log);
        run.note("running " + subcommand + " -> " + out.string());
        it->second(run);

        json meta;
        meta["subcommand"] = subcommand;
        meta["scenario"] = cfg.has("scenario", "name") ? cfg.get_string("scenario", "name") : "";
        meta["seed"] = seed;
        meta["config_text"] = cfg.source_text();
        meta["parameters"] = run.parameters;
        meta["measured"] = run.measured;
        std::ofstream(out / "metadata.json") << meta.dump(2) << '\n';
        json summary;
        summary["pass"] = run.summary.pass;
        summary["checks"] = run.summary.checks;
        std::ofstream(out / "summary.json") << summary.dump(2) << '\n';
        log << subcommand << ": " << (run.summary.pass ? "PASS" : "FAIL") << " ("
            << run.summary.checks.size() << " checks) -> " << out.string() << '\n';
        return run.summary.pass ? kExitPass : kExitChecksFailed;
    } catch (const ConfigError& e) {
        err << "usage error [" << e.module() << "]: " << e.what() << '\n';
        return kExitUsage;
    } catch (const Error& e) {
        err << "error [" << e.module() << "]: " << e.what() << '\n';
        return kExitNumericalFailure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitNumericalFailure;
    }
}

}  // namespace adrctl
