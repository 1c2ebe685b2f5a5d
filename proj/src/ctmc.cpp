#include "adrctl/ctmc.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include <unsupported/Eigen/MatrixFunctions>

#include "adrctl/csv.hpp"
#include "adrctl/errors.hpp"

namespace adrctl {

namespace {

constexpr double kRhoSlack = 1e-9;
constexpr double kMinRate = 1e-3;

std::vector<std::vector<int>> out_edges(const TransitionGraph& g) {
    std::vector<std::vector<int>> adj(g.N);
    for (int e = 0; e < g.num_edges(); ++e) adj[g.edges[e].source].push_back(e);
    return adj;
}

void require_distribution(const Eigen::VectorXd& mu, int N, const char* what) {
    if (mu.size() != N) throw InputError("ctmc", std::string(what) + " has the wrong length");
    if (!mu.allFinite() || mu.minCoeff() < -1e-14)
        throw InputError("ctmc", std::string(what) + " must be nonnegative");
    if (std::abs(mu.sum() - 1.0) > 1e-12)
        throw InputError("ctmc", std::string(what) + " must sum to one");
}

// Breadth-first predecessor edges from `from`.
std::vector<int> bfs_parent_edges(const TransitionGraph& g,
                                  const std::vector<std::vector<int>>& adj, int from) {
    std::vector<int> parent(g.N, -2);
    parent[from] = -1;
    std::deque<int> queue{from};
    while (!queue.empty()) {
        const int u = queue.front();
        queue.pop_front();
        for (int e : adj[u]) {
            const int w = g.edges[e].target;
            if (parent[w] != -2) continue;
            parent[w] = e;
            queue.push_back(w);
        }
    }
    return parent;
}

std::vector<int> path_to(const TransitionGraph& g, const std::vector<int>& parent, int to) {
    std::vector<int> path;
    for (int v = to; parent[v] >= 0; v = g.edges[parent[v]].source) path.push_back(parent[v]);
    std::reverse(path.begin(), path.end());
    return path;
}

std::vector<bool> reachable(const TransitionGraph& g, int from, bool reverse) {
    std::vector<std::vector<int>> adj(g.N);
    for (const Edge& e : g.edges) {
        if (reverse) adj[e.target].push_back(e.source);
        else adj[e.source].push_back(e.target);
    }
    std::vector<bool> seen(g.N, false);
    std::vector<int> stack{from};
    seen[from] = true;
    while (!stack.empty()) {
        const int u = stack.back();
        stack.pop_back();
        for (int w : adj[u])
            if (!seen[w]) {
                seen[w] = true;
                stack.push_back(w);
            }
    }
    return seen;
}

struct WalkLayout {
    std::vector<int> vertices;
    std::vector<int> delta;
};

WalkLayout layout_walk(const TransitionGraph& g, const std::vector<int>& walk) {
    if (walk.empty()) throw InputError("ctmc", "walk is empty");
    WalkLayout lay;
    const int v0 = g.edges.at(walk.front()).source;
    lay.vertices.push_back(v0);
    std::vector<bool> covered(g.N, false);
    covered[v0] = true;
    for (int e : walk) {
        if (e < 0 || e >= g.num_edges()) throw InputError("ctmc", "walk edge out of range");
        if (g.edges[e].source != lay.vertices.back())
            throw InputError("ctmc", "walk is not contiguous");
        lay.vertices.push_back(g.edges[e].target);
        covered[g.edges[e].target] = true;
    }
    if (lay.vertices.back() != v0) throw InputError("ctmc", "walk is not closed");
    if (std::find(covered.begin(), covered.end(), false) != covered.end())
        throw InputError("ctmc", "walk does not visit every vertex");
    const int s = static_cast<int>(walk.size());
    lay.delta.assign(s, 0);
    std::vector<bool> seen(g.N, false);
    for (int i = s - 1; i >= 0; --i) {
        const int src = lay.vertices[i];
        if (!seen[src]) {
            lay.delta[i] = 1;
            seen[src] = true;
        }
    }
    return lay;
}

// Builds the local-step control for a given ρ. With `strict` the public
// ρ/N bound applies; otherwise only the exact feasibility conditions
// 0 ≤ ρ - σ_i < current mass at the source are enforced.
std::pair<PiecewiseConstantControl, LocalStepCertificate> local_step_impl(
    const TransitionGraph& g, const Eigen::VectorXd& mu0, const Eigen::VectorXd& delta_mu,
    double T, const std::vector<int>& walk, double rho, bool strict) {
    if (!(T > 0.0)) throw InputError("ctmc", "horizon must be positive");
    if (delta_mu.size() != g.N) throw InputError("ctmc", "variation has the wrong length");
    if (std::abs(delta_mu.sum()) > 1e-12) throw InputError("ctmc", "variation must sum to zero");
    if (!(rho > 0.0) || mu0.minCoeff() <= 2.0 * rho)
        throw InputError("ctmc", "initial point is not interior enough for the chosen rho");
    if (strict && delta_mu.cwiseAbs().maxCoeff() > rho / g.N)
        throw StepSizeError("ctmc", "variation exceeds rho/N");

    const WalkLayout lay = layout_walk(g, walk);
    const int s = static_cast<int>(walk.size());
    LocalStepCertificate cert;
    cert.v0 = lay.vertices.front();
    cert.walk = walk;
    cert.vertices = lay.vertices;
    cert.delta = lay.delta;
    cert.rho = rho;
    cert.dt = T / s;
    cert.delta_mu = delta_mu;
    cert.sigma.assign(s + 1, 0.0);
    for (int i = 1; i <= s; ++i)
        cert.sigma[i] = cert.sigma[i - 1] + lay.delta[i - 1] * delta_mu[lay.vertices[i - 1]];

    PiecewiseConstantControl ctrl;
    ctrl.num_edges = g.num_edges();
    for (int i = 1; i <= s; ++i) {
        const int w = lay.vertices[i - 1];
        const double base = w == cert.v0 ? mu0[w] - rho : mu0[w];
        const double moved = rho - cert.sigma[i];
        const double current = base + rho - cert.sigma[i - 1];
        if (moved < -1e-15 || !(moved < current))
            throw StepSizeError("ctmc", "variation infeasible for the carried mass");
        const double u = -std::log1p(-std::max(moved, 0.0) / current) / cert.dt;
        Eigen::VectorXd rates = Eigen::VectorXd::Zero(g.num_edges());
        rates[walk[i - 1]] = u;
        ctrl.intervals.push_back({(i - 1) * cert.dt, i == s ? T : i * cert.dt, rates});
    }
    return {ctrl, cert};
}

}  // namespace

TransitionGraph TransitionGraph::make(int N, std::vector<Edge> edges) {
    if (N < 1) throw GraphError("ctmc", "graph needs at least one vertex");
    for (const Edge& e : edges) {
        if (e.source < 0 || e.source >= N || e.target < 0 || e.target >= N)
            throw GraphError("ctmc", "edge endpoint out of range");
        if (e.source == e.target) throw GraphError("ctmc", "self-loops are not allowed");
    }
    return {N, std::move(edges)};
}

int TransitionGraph::find_edge(int s, int t) const {
    for (int e = 0; e < num_edges(); ++e)
        if (edges[e].source == s && edges[e].target == t) return e;
    return -1;
}

bool TransitionGraph::is_bidirected() const {
    return std::all_of(edges.begin(), edges.end(),
                       [&](const Edge& e) { return find_edge(e.target, e.source) >= 0; });
}

TransitionGraph read_edge_list(std::istream& in) {
    std::vector<Edge> edges;
    int declared = 0;
    int largest = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string first;
        if (!(ls >> first)) continue;
        if (first == "vertices") {
            if (!(ls >> declared) || declared < 1)
                throw GraphError("ctmc", "bad vertex count line: " + line);
            continue;
        }
        int s = 0, t = 0;
        try {
            s = std::stoi(first);
        } catch (const std::exception&) {
            throw GraphError("ctmc", "bad edge line: " + line);
        }
        if (!(ls >> t) || s < 1 || t < 1) throw GraphError("ctmc", "bad edge line: " + line);
        largest = std::max({largest, s, t});
        edges.push_back({s - 1, t - 1});
    }
    if (declared && largest > declared) throw GraphError("ctmc", "edge exceeds declared vertices");
    return TransitionGraph::make(declared ? declared : largest, std::move(edges));
}

void write_edge_list(std::ostream& out, const TransitionGraph& g) {
    out << "vertices " << g.N << '\n';
    for (const Edge& e : g.edges) out << e.source + 1 << ' ' << e.target + 1 << '\n';
}

Eigen::MatrixXd build_Q(const Edge& e, int N) {
    if (e.source == e.target) throw GraphError("ctmc", "self-loops are not allowed");
    if (N < 2 || e.source < 0 || e.target < 0 || e.source >= N || e.target >= N)
        throw GraphError("ctmc", "edge endpoint out of range");
    Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(N, N);
    Q(e.source, e.source) = -1.0;
    Q(e.target, e.source) = 1.0;
    return Q;
}

Eigen::MatrixXd rate_generator(const TransitionGraph& g, const Eigen::VectorXd& rates) {
    if (rates.size() != g.num_edges()) throw InputError("ctmc", "one rate per edge required");
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(g.N, g.N);
    for (int e = 0; e < g.num_edges(); ++e) {
        const auto [s, t] = g.edges[e];
        G(s, s) -= rates[e];
        G(t, s) += rates[e];
    }
    return G;
}

SccDecomposition strongly_connected_components(const TransitionGraph& g) {
    const auto adj = out_edges(g);
    SccDecomposition out;
    out.component.assign(g.N, -1);
    std::vector<int> index(g.N, -1), low(g.N, 0), stack;
    std::vector<bool> on_stack(g.N, false);
    int counter = 0;
    // Explicit DFS frames: (vertex, next out-edge position).
    std::vector<std::pair<int, std::size_t>> frames;
    for (int root = 0; root < g.N; ++root) {
        if (index[root] >= 0) continue;
        frames.push_back({root, 0});
        index[root] = low[root] = counter++;
        stack.push_back(root);
        on_stack[root] = true;
        while (!frames.empty()) {
            auto& [u, pos] = frames.back();
            if (pos < adj[u].size()) {
                const int w = g.edges[adj[u][pos++]].target;
                if (index[w] < 0) {
                    index[w] = low[w] = counter++;
                    stack.push_back(w);
                    on_stack[w] = true;
                    frames.push_back({w, 0});
                } else if (on_stack[w]) {
                    low[u] = std::min(low[u], index[w]);
                }
                continue;
            }
            const int done = u;
            frames.pop_back();
            if (!frames.empty()) low[frames.back().first] = std::min(low[frames.back().first], low[done]);
            if (low[done] == index[done]) {
                int w;
                do {
                    w = stack.back();
                    stack.pop_back();
                    on_stack[w] = false;
                    out.component[w] = out.count;
                } while (w != done);
                ++out.count;
            }
        }
    }
    return out;
}

bool is_strongly_connected(const TransitionGraph& g) {
    return strongly_connected_components(g).count <= 1;
}

double MonotoneCertificate::evaluate(const Eigen::VectorXd& mu) const {
    double phi = 0.0;
    for (int v : forward_set) phi += mu[v];
    for (int v : backward_set) phi -= mu[v];
    return phi;
}

MonotoneCertificate monotone_certificate(const TransitionGraph& g) {
    const SccDecomposition scc = strongly_connected_components(g);
    if (scc.count <= 1)
        throw GraphError("ctmc", "graph is strongly connected; no monotone obstruction exists");
    std::vector<bool> has_in(scc.count, false), has_out(scc.count, false);
    for (const Edge& e : g.edges) {
        const int cs = scc.component[e.source], ct = scc.component[e.target];
        if (cs != ct) {
            has_out[cs] = true;
            has_in[ct] = true;
        }
    }
    int sink = -1, source = -1;
    for (int c = 0; c < scc.count && sink < 0; ++c)
        if (!has_out[c]) sink = c;
    for (int c = 0; c < scc.count && source < 0; ++c)
        if (!has_in[c] && c != sink) source = c;
    auto representative = [&](int c) {
        return static_cast<int>(std::find(scc.component.begin(), scc.component.end(), c) -
                                scc.component.begin());
    };
    const auto into_source = reachable(g, representative(source), true);
    const auto from_sink = reachable(g, representative(sink), false);
    MonotoneCertificate cert;
    for (int v = 0; v < g.N; ++v) {
        if (into_source[v]) cert.backward_set.push_back(v);
        if (from_sink[v]) cert.forward_set.push_back(v);
    }
    return cert;
}

namespace {

std::string describe(const MonotoneCertificate& cert) {
    std::ostringstream msg;
    msg << "graph is not strongly connected; backward-invariant set {";
    for (std::size_t k = 0; k < cert.backward_set.size(); ++k)
        msg << (k ? "," : "") << cert.backward_set[k] + 1;
    msg << "}, forward-invariant set {";
    for (std::size_t k = 0; k < cert.forward_set.size(); ++k)
        msg << (k ? "," : "") << cert.forward_set[k] + 1;
    msg << "}";
    return msg.str();
}

}  // namespace

ObstructionError::ObstructionError(const std::string& module, MonotoneCertificate cert)
    : GraphError(module, describe(cert)), cert_(std::move(cert)) {}

void require_strongly_connected(const TransitionGraph& g, const std::string& module) {
    if (!is_strongly_connected(g)) throw ObstructionError(module, monotone_certificate(g));
}

std::vector<int> find_covering_closed_walk(const TransitionGraph& g, int v0) {
    if (v0 < 0 || v0 >= g.N) throw GraphError("ctmc", "start vertex out of range");
    if (!is_strongly_connected(g))
        throw GraphError("ctmc", "covering closed walk requires a strongly connected graph");
    if (g.N == 1) return {};
    const auto adj = out_edges(g);
    std::vector<bool> visited(g.N, false);
    visited[v0] = true;
    int remaining = g.N - 1;
    int at = v0;
    std::vector<int> walk;
    while (remaining > 0) {
        const auto parent = bfs_parent_edges(g, adj, at);
        // Nearest unvisited vertex in BFS order.
        int best = -1, best_len = std::numeric_limits<int>::max();
        for (int v = 0; v < g.N; ++v) {
            if (visited[v] || parent[v] == -2) continue;
            const int len = static_cast<int>(path_to(g, parent, v).size());
            if (len < best_len) {
                best_len = len;
                best = v;
            }
        }
        for (int e : path_to(g, parent, best)) {
            walk.push_back(e);
            const int w = g.edges[e].target;
            if (!visited[w]) {
                visited[w] = true;
                --remaining;
            }
        }
        at = best;
    }
    if (at != v0)
        for (int e : path_to(g, bfs_parent_edges(g, adj, at), v0)) walk.push_back(e);
    return walk;
}

void PiecewiseConstantControl::append(const PiecewiseConstantControl& other) {
    if (other.intervals.empty()) return;
    if (num_edges == 0) num_edges = other.num_edges;
    if (other.num_edges != num_edges) throw InputError("ctmc", "edge count mismatch in append");
    const double offset = duration();
    for (const auto& iv : other.intervals)
        intervals.push_back({iv.t_start + offset, iv.t_end + offset, iv.rates});
}

double PiecewiseConstantControl::max_rate() const {
    double m = 0.0;
    for (const auto& iv : intervals)
        if (iv.rates.size()) m = std::max(m, iv.rates.maxCoeff());
    return m;
}

bool PiecewiseConstantControl::admissible() const {
    return std::all_of(intervals.begin(), intervals.end(), [](const ControlInterval& iv) {
        return iv.rates.allFinite() && (iv.rates.size() == 0 || iv.rates.minCoeff() >= 0.0);
    });
}

void write_control_csv(std::ostream& out, const PiecewiseConstantControl& ctrl) {
    out << "t_start,t_end,edge,rate\n";
    for (const auto& iv : ctrl.intervals)
        for (int e = 0; e < iv.rates.size(); ++e)
            if (iv.rates[e] != 0.0)
                out << format_double(iv.t_start) << ',' << format_double(iv.t_end) << ',' << e + 1
                    << ',' << format_double(iv.rates[e]) << '\n';
}

Eigen::VectorXd LocalStepCertificate::breakpoint_state(const Eigen::VectorXd& mu0, int i) const {
    Eigen::VectorXd mu = mu0;
    mu[v0] -= rho;
    for (int j = 0; j < i; ++j)
        if (delta[j]) mu[vertices[j]] += delta_mu[vertices[j]];
    mu[vertices[i]] += rho - sigma[i];
    return mu;
}

std::pair<PiecewiseConstantControl, LocalStepCertificate> local_step_control(
    const TransitionGraph& g, const Eigen::VectorXd& mu0, const Eigen::VectorXd& delta_mu,
    double T, const std::vector<int>& walk) {
    require_distribution(mu0, g.N, "initial point");
    if (!(mu0.minCoeff() > 2.0 * kRhoSlack)) throw InputError("ctmc", "initial point must be interior");
    const double rho = 0.5 * mu0.minCoeff() - kRhoSlack;
    return local_step_impl(g, mu0, delta_mu, T, walk, rho, true);
}

Trajectory propagate(const TransitionGraph& g, const Eigen::VectorXd& mu0,
                     const PiecewiseConstantControl& ctrl) {
    if (mu0.size() != g.N) throw InputError("ctmc", "state has the wrong length");
    Trajectory traj;
    traj.times.push_back(ctrl.intervals.empty() ? 0.0 : ctrl.intervals.front().t_start);
    traj.states.push_back(mu0);
    Eigen::VectorXd mu = mu0;
    for (const auto& iv : ctrl.intervals) {
        const Eigen::MatrixXd A = (iv.t_end - iv.t_start) * rate_generator(g, iv.rates);
        mu = A.exp() * mu;
        traj.times.push_back(iv.t_end);
        traj.states.push_back(mu);
    }
    return traj;
}

GlobalTransfer global_transfer_plan(const TransitionGraph& g, const Eigen::VectorXd& mu0,
                                    const Eigen::VectorXd& muT, double T) {
    require_distribution(mu0, g.N, "initial point");
    require_distribution(muT, g.N, "target point");
    if (!(T > 0.0)) throw InputError("ctmc", "horizon must be positive");
    if (!(mu0.minCoeff() > 0.0) || !(muT.minCoeff() > 0.0))
        throw InputError("ctmc", "global transfer requires interior endpoints; precondition first");
    if (!is_strongly_connected(g))
        throw GraphError("ctmc", "global transfer requires a strongly connected graph");

    GlobalTransfer plan;
    plan.control.num_edges = g.num_edges();
    plan.rho = 0.5 * std::min(mu0.minCoeff(), muT.minCoeff());
    plan.path_length = (muT - mu0).lpNorm<1>();
    plan.segments = static_cast<int>(std::ceil(plan.path_length / plan.rho));
    if (plan.segments == 0) return plan;

    const Eigen::VectorXd step = (muT - mu0) / plan.segments;
    const double seg_T = T / plan.segments;
    const auto walk = find_covering_closed_walk(g, 0);
    for (int k = 0; k < plan.segments; ++k) {
        const Eigen::VectorXd from = mu0 + (double(k) / plan.segments) * (muT - mu0);
        Eigen::VectorXd d = step;
        d[g.N - 1] -= d.sum();  // exact zero sum after rounding
        const double rho_k = 0.5 * from.minCoeff() - kRhoSlack;
        plan.control.append(local_step_impl(g, from, d, seg_T, walk, rho_k, false).first);
    }
    plan.control.intervals.back().t_end = T;
    return plan;
}

InteriorPreconditioning precondition_to_interior(const TransitionGraph& g,
                                                 const Eigen::VectorXd& mu0, double duration) {
    require_distribution(mu0, g.N, "initial point");
    if (!(duration > 0.0)) throw InputError("ctmc", "preconditioning duration must be positive");
    if (!is_strongly_connected(g))
        throw GraphError("ctmc", "preconditioning requires a strongly connected graph");
    const Eigen::MatrixXd G = rate_generator(g, Eigen::VectorXd::Ones(g.num_edges()));

    Eigen::FullPivLU<Eigen::MatrixXd> lu(G);
    Eigen::VectorXd pi = lu.kernel().col(0);
    pi /= pi.sum();
    const double floor = 0.25 * pi.minCoeff();
    auto state_at = [&](double s) -> Eigen::VectorXd { return (s * G).exp() * mu0; };

    // Smallest unit-rate time reaching the floor: doubling then bisection.
    double hi = 1e-3;
    while (state_at(hi).minCoeff() < floor) {
        hi *= 2.0;
        if (hi > 1e8) throw NumericalError("ctmc", "preconditioning did not reach the interior");
    }
    double lo = 0.0;
    for (int it = 0; it < 60 && mu0.minCoeff() < floor; ++it) {
        const double mid = 0.5 * (lo + hi);
        (state_at(mid).minCoeff() < floor ? lo : hi) = mid;
    }
    const double s = mu0.minCoeff() >= floor ? 0.0 : hi;

    InteriorPreconditioning out;
    out.rate = s / duration;
    out.control.num_edges = g.num_edges();
    out.control.intervals.push_back(
        {0.0, duration, Eigen::VectorXd::Constant(g.num_edges(), out.rate)});
    out.state = propagate(g, mu0, out.control).states.back();
    // Snap roundoff so the state is an exact distribution.
    out.state /= out.state.sum();
    return out;
}

PiecewiseConstantControl transfer_control(const TransitionGraph& g, const Eigen::VectorXd& mu0,
                                          const Eigen::VectorXd& muT, double T,
                                          double precondition_fraction) {
    if (mu0.minCoeff() > 0.0) return global_transfer_plan(g, mu0, muT, T).control;
    const double t_pre = precondition_fraction * T;
    InteriorPreconditioning pre = precondition_to_interior(g, mu0, t_pre);
    PiecewiseConstantControl ctrl = pre.control;
    ctrl.append(global_transfer_plan(g, pre.state, muT, T - t_pre).control);
    return ctrl;
}

namespace {

// Column e of the flux-balance matrix: μ_S(e) (1_T - 1_S).
Eigen::MatrixXd balance_matrix(const TransitionGraph& g, const Eigen::VectorXd& mu) {
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(g.N, g.num_edges());
    for (int e = 0; e < g.num_edges(); ++e) {
        A(g.edges[e].source, e) -= mu[g.edges[e].source];
        A(g.edges[e].target, e) += mu[g.edges[e].source];
    }
    return A;
}

// Feasible start: every edge closed into a cycle by a shortest return path.
Eigen::VectorXd circulation_start(const TransitionGraph& g, const Eigen::VectorXd& mu) {
    const auto adj = out_edges(g);
    Eigen::VectorXd flow = Eigen::VectorXd::Zero(g.num_edges());
    for (int e = 0; e < g.num_edges(); ++e) {
        flow[e] += 1.0;
        const auto parent = bfs_parent_edges(g, adj, g.edges[e].target);
        for (int f : path_to(g, parent, g.edges[e].source)) flow[f] += 1.0;
    }
    Eigen::VectorXd q(g.num_edges());
    for (int e = 0; e < g.num_edges(); ++e) q[e] = flow[e] / mu[g.edges[e].source];
    return q * (kMinRate * 2.0 / q.minCoeff());
}

// Minimises ½‖q - 1‖² subject to A q = 0, q ≥ kMinRate by a primal
// active-set method; equality-constrained subproblems are solved by
// projecting onto the null space of the free columns.
Eigen::VectorXd nearest_feasible_rates(const Eigen::MatrixXd& A, Eigen::VectorXd q) {
    const int n = static_cast<int>(q.size());
    std::vector<bool> active(n, false);
    for (int iter = 0; iter < 50 * n + 100; ++iter) {
        std::vector<int> free_idx;
        for (int i = 0; i < n; ++i)
            if (!active[i]) free_idx.push_back(i);
        const Eigen::VectorXd grad = q - Eigen::VectorXd::Ones(n);
        Eigen::MatrixXd AF(A.rows(), free_idx.size());
        Eigen::VectorXd gF(free_idx.size());
        for (std::size_t k = 0; k < free_idx.size(); ++k) {
            AF.col(k) = A.col(free_idx[k]);
            gF[k] = grad[free_idx[k]];
        }
        Eigen::VectorXd lambda = Eigen::VectorXd::Zero(A.rows());
        Eigen::VectorXd pF = -gF;
        if (!free_idx.empty()) {
            Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(AF.transpose());
            lambda = cod.solve(gF);
            pF = -(gF - AF.transpose() * lambda);
        }
        if (pF.lpNorm<Eigen::Infinity>() <= 1e-13 * (1.0 + q.lpNorm<Eigen::Infinity>())) {
            // Multipliers of the active bounds.
            int worst = -1;
            double most_negative = -1e-12;
            const Eigen::VectorXd nu = grad - A.transpose() * lambda;
            for (int i = 0; i < n; ++i)
                if (active[i] && nu[i] < most_negative) {
                    most_negative = nu[i];
                    worst = i;
                }
            if (worst < 0) return q;
            active[worst] = false;
            continue;
        }
        double step = 1.0;
        int blocking = -1;
        for (std::size_t k = 0; k < free_idx.size(); ++k) {
            if (pF[k] >= 0.0) continue;
            const double room = (q[free_idx[k]] - kMinRate) / -pF[k];
            if (room < step) {
                step = room;
                blocking = free_idx[k];
            }
        }
        for (std::size_t k = 0; k < free_idx.size(); ++k) q[free_idx[k]] += step * pF[k];
        if (blocking >= 0) {
            q[blocking] = kMinRate;
            active[blocking] = true;
        }
    }
    throw NumericalError("ctmc", "stationary-rate synthesis did not converge");
}

}  // namespace

Eigen::VectorXd synthesize_stationary_rates(const TransitionGraph& g, const Eigen::VectorXd& mu_eq) {
    require_distribution(mu_eq, g.N, "equilibrium");
    if (!(mu_eq.minCoeff() > 0.0)) throw InputError("ctmc", "equilibrium must be interior");
    if (!is_strongly_connected(g))
        throw GraphError("ctmc", "stationary rates require a strongly connected graph");
    Eigen::VectorXd q(g.num_edges());
    if (g.is_bidirected()) {
        const double scale = mu_eq.minCoeff();
        for (int e = 0; e < g.num_edges(); ++e) q[e] = mu_eq[g.edges[e].target] / scale;
    } else {
        const Eigen::MatrixXd A = balance_matrix(g, mu_eq);
        q = nearest_feasible_rates(A, circulation_start(g, mu_eq));
    }
    const double residual = (rate_generator(g, q) * mu_eq).lpNorm<Eigen::Infinity>();
    if (residual > 1e-12 * std::max(1.0, q.maxCoeff())) {
        std::ostringstream msg;
        msg << "stationary-rate synthesis infeasible, residual " << residual;
        throw NumericalError("ctmc", msg.str());
    }
    return q;
}

SpectrumReport spectrum_of(const Eigen::MatrixXd& generator) {
    SpectrumReport rep;
    Eigen::EigenSolver<Eigen::MatrixXd> es(generator, false);
    if (es.info() != Eigen::Success) throw NumericalError("ctmc", "eigensolver failed");
    rep.eigenvalues = es.eigenvalues();
    std::sort(rep.eigenvalues.begin(), rep.eigenvalues.end(),
              [](const std::complex<double>& a, const std::complex<double>& b) {
                  return a.real() > b.real();
              });
    rep.max_real = rep.eigenvalues[0].real();
    rep.gap = rep.eigenvalues.size() > 1 ? -rep.eigenvalues[1].real() : 0.0;
    const double tol = 1e-9 * std::max(1.0, generator.cwiseAbs().maxCoeff());
    for (const auto& lam : rep.eigenvalues)
        if (std::abs(lam) <= tol) ++rep.zero_multiplicity;
    return rep;
}

SpectrumReport spectrum_check(const TransitionGraph& g, const Eigen::VectorXd& rates) {
    if (rates.size() && rates.minCoeff() < 0.0) throw InputError("ctmc", "rates must be nonnegative");
    return spectrum_of(rate_generator(g, rates));
}

}  // namespace adrctl
