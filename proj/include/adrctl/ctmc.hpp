#pragma once

// Finite-state forward equation μ' = Σ_e u_e(t) Q_e μ on a directed graph:
// connectivity certificates, exact piecewise-constant steering controls,
// propagation by matrix exponentials and stationary-rate synthesis.
//
// Vertices are 0-based in this API and 1-based in the text formats.

#include <complex>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "adrctl/errors.hpp"

namespace adrctl {

struct Edge {
    int source;
    int target;

    bool operator==(const Edge&) const = default;
};

struct TransitionGraph {
    int N = 0;
    std::vector<Edge> edges;

    /// Validates indices and rejects self-loops (GraphError).
    static TransitionGraph make(int N, std::vector<Edge> edges);

    int num_edges() const { return static_cast<int>(edges.size()); }
    /// Index of edge (s, t) or -1.
    int find_edge(int s, int t) const;
    /// Every edge has its reverse.
    bool is_bidirected() const;
};

/// One "i j" pair per line (1-based); '#' starts a comment. An optional
/// line "vertices N" fixes the vertex count, otherwise N = largest index.
TransitionGraph read_edge_list(std::istream& in);
void write_edge_list(std::ostream& out, const TransitionGraph& g);

/// Q_e: -1 at (S,S), +1 at (T,S), zero elsewhere.
Eigen::MatrixXd build_Q(const Edge& e, int N);

/// Σ_e rates_e Q_e.
Eigen::MatrixXd rate_generator(const TransitionGraph& g, const Eigen::VectorXd& rates);

struct SccDecomposition {
    int count = 0;
    /// Component id per vertex; ids are in reverse topological order of the
    /// condensation (sink components first), as produced by Tarjan.
    std::vector<int> component;
};

SccDecomposition strongly_connected_components(const TransitionGraph& g);
bool is_strongly_connected(const TransitionGraph& g);

/// Disjoint vertex sets with no edge entering `backward_set` and no edge
/// leaving `forward_set`; φ(μ) = Σ_{forward} μ - Σ_{backward} μ is
/// nondecreasing under every nonnegative rate schedule.
struct MonotoneCertificate {
    std::vector<int> backward_set;
    std::vector<int> forward_set;

    double evaluate(const Eigen::VectorXd& mu) const;
};

/// Throws GraphError when g is strongly connected.
MonotoneCertificate monotone_certificate(const TransitionGraph& g);

/// Raised by planners that need strong connectivity; carries the obstruction.
class ObstructionError : public GraphError {
public:
    ObstructionError(const std::string& module, MonotoneCertificate cert);
    const MonotoneCertificate& certificate() const noexcept { return cert_; }

private:
    MonotoneCertificate cert_;
};

/// Throws ObstructionError when g is not strongly connected.
void require_strongly_connected(const TransitionGraph& g, const std::string& module);

/// Edge indices of a closed walk from v0 that visits every vertex: repeated
/// shortest paths to the nearest unvisited vertex, then back to v0. Length
/// is at most N(N-1). Throws GraphError unless g is strongly connected.
std::vector<int> find_covering_closed_walk(const TransitionGraph& g, int v0);

struct ControlInterval {
    double t_start;
    double t_end;
    Eigen::VectorXd rates;  // one entry per edge
};

struct PiecewiseConstantControl {
    int num_edges = 0;
    std::vector<ControlInterval> intervals;

    double duration() const { return intervals.empty() ? 0.0 : intervals.back().t_end; }
    /// Appends `other` shifted to start at the current end.
    void append(const PiecewiseConstantControl& other);
    double max_rate() const;
    bool admissible() const;  // finite, nonnegative
};

/// CSV rows "t_start,t_end,edge,rate" with 1-based edge indices; only
/// nonzero rates are listed.
void write_control_csv(std::ostream& out, const PiecewiseConstantControl& ctrl);

struct LocalStepCertificate {
    int v0 = 0;
    std::vector<int> walk;      // edge indices e_1..e_s
    std::vector<int> vertices;  // w_0 = v0, w_i = T(e_i)
    std::vector<int> delta;     // 1 iff e_i is the last departure from w_{i-1}
    std::vector<double> sigma;  // σ_0..σ_s
    double rho = 0.0;
    double dt = 0.0;
    Eigen::VectorXd delta_mu;

    /// State at t = i·dt from the bookkeeping alone (no exponentials).
    Eigen::VectorXd breakpoint_state(const Eigen::VectorXd& mu0, int i) const;
};

/// Control moving mass ρ around `walk` so that μ(T) = μ0 + Δμ, one active
/// edge per interval of length T/s. ρ = ½ min μ0 - 1e-9.
/// Throws StepSizeError when ‖Δμ‖∞ > ρ/N, InputError for a non-interior μ0,
/// nonzero Σ Δμ or a walk that is not a covering closed walk.
std::pair<PiecewiseConstantControl, LocalStepCertificate> local_step_control(
    const TransitionGraph& g, const Eigen::VectorXd& mu0, const Eigen::VectorXd& delta_mu,
    double T, const std::vector<int>& walk);

struct Trajectory {
    std::vector<double> times;
    std::vector<Eigen::VectorXd> states;
};

/// States at every breakpoint of ctrl, by exp(Δt_i Σ_e u_e Q_e).
Trajectory propagate(const TransitionGraph& g, const Eigen::VectorXd& mu0,
                     const PiecewiseConstantControl& ctrl);

struct GlobalTransfer {
    PiecewiseConstantControl control;
    double rho = 0.0;
    double path_length = 0.0;  // ‖μT - μ0‖₁
    int segments = 0;
};

/// Straight-line transfer through ceil(L/ρ) waypoints, one local step each.
/// Throws InputError for boundary points or T ≤ 0.
GlobalTransfer global_transfer_plan(const TransitionGraph& g, const Eigen::VectorXd& mu0,
                                    const Eigen::VectorXd& muT, double T);

/// Uniform-rate run that brings a boundary point into the interior:
/// min μ ≥ 0.25 · min π, π the uniform-rate equilibrium, reached in
/// `duration` by scaling the common rate.
struct InteriorPreconditioning {
    PiecewiseConstantControl control;
    Eigen::VectorXd state;
    double rate = 0.0;
};

InteriorPreconditioning precondition_to_interior(const TransitionGraph& g,
                                                 const Eigen::VectorXd& mu0, double duration);

/// Global transfer that first preconditions a boundary μ0, spending
/// `precondition_fraction` of T on it. μT must be interior.
PiecewiseConstantControl transfer_control(const TransitionGraph& g, const Eigen::VectorXd& mu0,
                                          const Eigen::VectorXd& muT, double T,
                                          double precondition_fraction = 0.25);

/// Positive rates q with (Σ q_e Q_e) μeq = 0. Bidirected graphs use the
/// detailed-balance rule q_(i,j) = μeq_j / min μeq; otherwise the nearest
/// point to 1 in the feasible cone with q ≥ 1e-3 (active-set QP).
Eigen::VectorXd synthesize_stationary_rates(const TransitionGraph& g, const Eigen::VectorXd& mu_eq);

struct SpectrumReport {
    Eigen::VectorXcd eigenvalues;  // sorted by decreasing real part
    double max_real = 0.0;
    /// -(second largest real part); 0 when N = 1.
    double gap = 0.0;
    int zero_multiplicity = 0;
};

SpectrumReport spectrum_check(const TransitionGraph& g, const Eigen::VectorXd& rates);
SpectrumReport spectrum_of(const Eigen::MatrixXd& generator);

}  // namespace adrctl
