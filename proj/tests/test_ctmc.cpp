#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include <doctest.h>
#include <unsupported/Eigen/MatrixFunctions>

#include "adrctl/ctmc.hpp"

using namespace adrctl;

namespace {

TransitionGraph cycle(int N) {
    std::vector<Edge> e;
    for (int i = 0; i < N; ++i) e.push_back({i, (i + 1) % N});
    return TransitionGraph::make(N, e);
}

// Checks the covering closed walk post-condition independently.
bool is_covering_closed_walk(const TransitionGraph& g, const std::vector<int>& walk, int v0) {
    if (walk.empty()) return g.N == 1;
    std::set<int> seen{v0};
    int at = v0;
    for (int e : walk) {
        if (g.edges[e].source != at) return false;
        at = g.edges[e].target;
        seen.insert(at);
    }
    return at == v0 && static_cast<int>(seen.size()) == g.N &&
           static_cast<int>(walk.size()) <= g.N * (g.N - 1);
}

Eigen::VectorXd vec(std::initializer_list<double> xs) {
    Eigen::VectorXd v(xs.size());
    int i = 0;
    for (double x : xs) v[i++] = x;
    return v;
}

}  // namespace

TEST_CASE("graph construction and edge-list I/O") {
    CHECK_THROWS_AS(TransitionGraph::make(2, {{0, 0}}), GraphError);
    CHECK_THROWS_AS(TransitionGraph::make(2, {{0, 2}}), GraphError);
    std::istringstream in("# chain\nvertices 4\n1 2\n2 3\n\n3 1\n");
    const auto g = read_edge_list(in);
    CHECK(g.N == 4);
    CHECK(g.num_edges() == 3);
    CHECK(g.find_edge(2, 0) == 2);
    CHECK(g.find_edge(0, 2) == -1);
    std::stringstream ss;
    write_edge_list(ss, g);
    const auto back = read_edge_list(ss);
    CHECK(back.N == g.N);
    CHECK(back.edges == g.edges);
}

TEST_CASE("control matrices") {
    const auto Q = build_Q({0, 1}, 3);
    Eigen::Matrix3d expect = Eigen::Matrix3d::Zero();
    expect(0, 0) = -1;
    expect(1, 0) = 1;
    CHECK(Q == expect);
    CHECK(Q.colwise().sum().cwiseAbs().maxCoeff() == 0.0);

    const Eigen::MatrixXd E = (std::log(2.0) * build_Q({0, 1}, 2)).exp();
    Eigen::Matrix2d e2;
    e2 << 0.5, 0, 0.5, 1;
    CHECK((E - e2).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("two-edge exponential product on three states") {
    const double t = 0.7, s = 1.3;
    const Eigen::MatrixXd P = (t * build_Q({1, 2}, 3)).exp() * (s * build_Q({0, 1}, 3)).exp();
    const double et = std::exp(-t), es = std::exp(-s);
    Eigen::Matrix3d expect;
    expect << es, 0, 0, et * (1 - es), et, 0, (1 - et) * (1 - es), 1 - et, 1;
    CHECK((P - expect).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("strong connectivity") {
    CHECK(is_strongly_connected(cycle(3)));
    CHECK_FALSE(is_strongly_connected(TransitionGraph::make(3, {{0, 1}, {1, 2}})));
    CHECK(is_strongly_connected(TransitionGraph::make(1, {})));
    const auto scc = strongly_connected_components(TransitionGraph::make(4, {{0, 1}, {1, 0}, {1, 2}, {2, 3}, {3, 2}}));
    CHECK(scc.count == 2);
    CHECK(scc.component[0] == scc.component[1]);
    CHECK(scc.component[2] == scc.component[3]);
}

TEST_CASE("monotone certificate") {
    const auto chain = TransitionGraph::make(2, {{0, 1}});
    const auto cert = monotone_certificate(chain);
    CHECK(cert.backward_set == std::vector<int>{0});
    CHECK(cert.forward_set == std::vector<int>{1});
    CHECK(cert.evaluate(vec({0.3, 0.7})) == doctest::Approx(0.4));
    CHECK_THROWS_AS(monotone_certificate(cycle(3)), GraphError);

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 4.0);
    const auto g = TransitionGraph::make(4, {{0, 1}, {1, 0}, {1, 2}, {2, 3}, {3, 2}, {0, 3}});
    const auto c = monotone_certificate(g);
    Eigen::VectorXd mu = Eigen::VectorXd::Constant(4, 0.25);
    for (int k = 0; k < 300; ++k) {
        Eigen::VectorXd r(g.num_edges());
        for (auto& x : r) x = u(rng);
        const double before = c.evaluate(mu);
        mu = (0.02 * rate_generator(g, r)).exp() * mu;
        CHECK(c.evaluate(mu) >= before - 1e-12);
    }

    try {
        require_strongly_connected(chain, "test");
        FAIL("expected an obstruction");
    } catch (const ObstructionError& e) {
        CHECK(e.certificate().forward_set == std::vector<int>{1});
    }
}

TEST_CASE("covering closed walks") {
    const auto w3 = find_covering_closed_walk(cycle(3), 0);
    CHECK(w3 == std::vector<int>{0, 1, 2});
    const auto path = TransitionGraph::make(3, {{0, 1}, {1, 0}, {1, 2}, {2, 1}});
    CHECK(is_covering_closed_walk(path, find_covering_closed_walk(path, 0), 0));
    std::mt19937_64 rng(2);
    std::bernoulli_distribution keep(0.3);
    int tested = 0;
    while (tested < 30) {
        std::vector<Edge> e;
        const int N = 2 + tested % 6;
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < N; ++j)
                if (i != j && keep(rng)) e.push_back({i, j});
        const auto g = TransitionGraph::make(N, e);
        if (!is_strongly_connected(g)) continue;
        ++tested;
        for (int v0 = 0; v0 < N; ++v0) CHECK(is_covering_closed_walk(g, find_covering_closed_walk(g, v0), v0));
    }
    CHECK_THROWS_AS(find_covering_closed_walk(TransitionGraph::make(3, {{0, 1}, {1, 0}}), 0), GraphError);
}

TEST_CASE("local step on the three-cycle") {
    const auto g = cycle(3);
    const Eigen::VectorXd mu0 = Eigen::VectorXd::Constant(3, 1.0 / 3.0);
    const auto walk = find_covering_closed_walk(g, 0);

    const auto [c0, cert0] = local_step_control(g, mu0, Eigen::VectorXd::Zero(3), 1.0, walk);
    CHECK((propagate(g, mu0, c0).states.back() - mu0).cwiseAbs().maxCoeff() <= 1e-12);

    const auto [ctrl, cert] = local_step_control(g, mu0, vec({0.05, -0.05, 0.0}), 1.0, walk);
    const auto traj = propagate(g, mu0, ctrl);
    CHECK((traj.states.back() - vec({0.38333333333333333, 0.28333333333333333, 1.0 / 3.0})).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(ctrl.admissible());
    for (std::size_t i = 0; i < ctrl.intervals.size(); ++i) {
        CHECK((ctrl.intervals[i].rates.array() > 0).count() <= 1);
        CHECK((traj.states[i] - cert.breakpoint_state(mu0, static_cast<int>(i))).cwiseAbs().maxCoeff() <= 1e-12);
    }
    CHECK(cert.sigma.front() == 0.0);

    CHECK_THROWS_AS(local_step_control(g, mu0, vec({0.1, -0.1, 0.0}), 1.0, walk), StepSizeError);
    CHECK_THROWS_AS(local_step_control(g, mu0, vec({0.01, 0.0, 0.0}), 1.0, walk), InputError);
}

TEST_CASE("local step exactness over a grid of variations") {
    const auto g = TransitionGraph::make(4, {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {1, 0}, {2, 0}});
    const Eigen::VectorXd mu0 = vec({0.2, 0.3, 0.25, 0.25});
    const double bound = (0.5 * mu0.minCoeff() - 1e-9) / 4;
    for (int v0 = 0; v0 < 4; ++v0) {
        const auto walk = find_covering_closed_walk(g, v0);
        for (int a = -2; a <= 2; ++a)
            for (int b = -2; b <= 2; ++b)
                for (int c = -2; c <= 2; ++c) {
                    Eigen::VectorXd d = vec({a, b, c, 0.0}) * (bound / 2);
                    d[3] = -d.head(3).sum();
                    if (d.cwiseAbs().maxCoeff() > bound) continue;
                    const auto [ctrl, cert] = local_step_control(g, mu0, d, 2.0, walk);
                    const auto traj = propagate(g, mu0, ctrl);
                    CHECK((traj.states.back() - mu0 - d).cwiseAbs().maxCoeff() <= 1e-10);
                }
    }
}

TEST_CASE("global transfer") {
    const auto g2 = TransitionGraph::make(2, {{0, 1}, {1, 0}});
    const auto plan = global_transfer_plan(g2, vec({0.5, 0.5}), vec({0.25, 0.75}), 1.0);
    CHECK(plan.rho == doctest::Approx(0.125));
    CHECK(plan.path_length == doctest::Approx(0.5));
    CHECK(plan.segments == 4);
    CHECK((propagate(g2, vec({0.5, 0.5}), plan.control).states.back() - vec({0.25, 0.75})).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(plan.control.duration() == doctest::Approx(1.0));

    const auto same = global_transfer_plan(g2, vec({0.4, 0.6}), vec({0.4, 0.6}), 1.0);
    CHECK(same.segments == 0);
    CHECK(same.control.intervals.empty());

    CHECK_THROWS_AS(global_transfer_plan(g2, vec({0.0, 1.0}), vec({0.5, 0.5}), 1.0), InputError);
}

TEST_CASE("propagation keeps the simplex") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 5.0);
    const auto g = TransitionGraph::make(3, {{0, 1}, {1, 2}, {2, 0}, {0, 2}});
    PiecewiseConstantControl ctrl{g.num_edges(), {}};
    for (int k = 0; k < 50; ++k) {
        Eigen::VectorXd r(g.num_edges());
        for (auto& x : r) x = u(rng);
        ctrl.intervals.push_back({0.1 * k, 0.1 * (k + 1), r});
    }
    const auto traj = propagate(g, vec({1.0, 0.0, 0.0}), ctrl);
    for (const auto& m : traj.states) {
        CHECK(std::abs(m.sum() - 1.0) <= 1e-12);
        CHECK(m.minCoeff() >= -1e-12);
    }
    // Single-edge decay with rate scaling.
    const auto e = TransitionGraph::make(2, {{0, 1}});
    PiecewiseConstantControl one{1, {{0.0, 0.8, vec({2.5})}}};
    CHECK(propagate(e, vec({0.6, 0.4}), one).states.back()[0] == doctest::Approx(0.6 * std::exp(-2.0)).epsilon(1e-14));
    PiecewiseConstantControl zero{1, {{0.0, 1.0, vec({0.0})}}};
    CHECK(propagate(e, vec({0.6, 0.4}), zero).states.back() == vec({0.6, 0.4}));
}

TEST_CASE("boundary preconditioning and transfer") {
    const auto g = cycle(4);
    const auto pre = precondition_to_interior(g, vec({1.0, 0.0, 0.0, 0.0}), 0.25);
    CHECK(pre.state.minCoeff() >= 0.25 * 0.25 - 1e-12);
    CHECK(pre.control.duration() == doctest::Approx(0.25));
    const Eigen::VectorXd target = vec({0.1, 0.2, 0.3, 0.4});
    const auto ctrl = transfer_control(g, vec({1.0, 0.0, 0.0, 0.0}), target, 1.0);
    CHECK(ctrl.admissible());
    CHECK(ctrl.duration() == doctest::Approx(1.0));
    CHECK((propagate(g, vec({1.0, 0.0, 0.0, 0.0}), ctrl).states.back() - target).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("stationary rate synthesis") {
    const auto g2 = TransitionGraph::make(2, {{0, 1}, {1, 0}});
    const Eigen::VectorXd q2 = synthesize_stationary_rates(g2, vec({1.0 / 3.0, 2.0 / 3.0}));
    CHECK(q2[0] == doctest::Approx(2.0));
    CHECK(q2[1] == doctest::Approx(1.0));
    CHECK((rate_generator(g2, q2) * vec({1.0 / 3.0, 2.0 / 3.0})).cwiseAbs().maxCoeff() <= 1e-15);

    const Eigen::VectorXd qc = synthesize_stationary_rates(cycle(5), Eigen::VectorXd::Constant(5, 0.2));
    CHECK((qc.array() - qc[0]).abs().maxCoeff() <= 1e-12);

    const auto g3 = TransitionGraph::make(3, {{0, 1}, {1, 0}, {1, 2}, {2, 1}, {0, 2}, {2, 0}});
    const Eigen::VectorXd mu3 = vec({0.2, 0.3, 0.5});
    const auto rep = spectrum_check(g3, synthesize_stationary_rates(g3, mu3));
    CHECK(rep.max_real <= 1e-10);
    CHECK(rep.zero_multiplicity == 1);
    CHECK(rep.gap > 0.0);

    // Non-bidirected graphs go through the constrained least-squares route.
    std::mt19937_64 rng(4);
    const auto g4 = TransitionGraph::make(4, {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {0, 2}, {3, 1}});
    for (int k = 0; k < 20; ++k) {
        std::uniform_real_distribution<double> u(0.05, 1.0);
        Eigen::VectorXd mu(4);
        for (auto& x : mu) x = u(rng);
        mu /= mu.sum();
        const Eigen::VectorXd q = synthesize_stationary_rates(g4, mu);
        CHECK(q.minCoeff() >= 1e-3 - 1e-15);
        CHECK((rate_generator(g4, q) * mu).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, q.maxCoeff()));
        const auto r = spectrum_check(g4, q);
        CHECK(r.zero_multiplicity == 1);
        CHECK(r.max_real <= 1e-10);
    }
}

TEST_CASE("spectrum check") {
    const auto e = TransitionGraph::make(2, {{0, 1}});
    const auto rep = spectrum_check(e, vec({3.0}));
    CHECK(rep.eigenvalues[0].real() == doctest::Approx(0.0));
    CHECK(rep.eigenvalues[1].real() == doctest::Approx(-3.0));
    CHECK(rep.gap == doctest::Approx(3.0));
    const auto zero = spectrum_check(cycle(4), Eigen::VectorXd::Zero(4));
    CHECK(zero.eigenvalues.cwiseAbs().maxCoeff() == 0.0);
    CHECK(zero.zero_multiplicity == 4);
}

TEST_CASE("control CSV") {
    PiecewiseConstantControl c{2, {{0.0, 0.5, vec({1.5, 0.0})}, {0.5, 1.0, vec({0.0, 2.0})}}};
    std::ostringstream out;
    write_control_csv(out, c);
    CHECK(out.str() == "t_start,t_end,edge,rate\n0,0.5,1,1.5\n0.5,1,2,2\n");
}
