// Serial reference vs OpenMP kernels: cellwise reaction, particle step,
// histogram. Reports median wall time and checks the outputs agree bitwise.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#include <omp.h>

#include "adrctl/kernels.hpp"
#include "adrctl/particles.hpp"

namespace {

double median_ms(const std::function<void()>& fn, int reps) {
    std::vector<double> t;
    for (int r = 0; r < reps; ++r) {
        const auto a = std::chrono::steady_clock::now();
        fn();
        t.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - a).count());
    }
    std::sort(t.begin(), t.end());
    return t[t.size() / 2];
}

void report(const char* name, double serial, double parallel, bool same) {
    std::printf("%-22s serial %9.3f ms  openmp %9.3f ms  speedup %5.2fx  identical=%s\n", name,
                serial, parallel, serial / parallel, same ? "yes" : "NO");
}

}  // namespace

int main() {
    using namespace adrctl;
    std::printf("threads: %d\n", omp_get_max_threads());

    {
        const int N = 4, cells = 1 << 16;
        std::vector<Eigen::MatrixXd> mats(cells);
        for (int c = 0; c < cells; ++c) mats[c] = Eigen::MatrixXd::Random(N, N);
        std::vector<Eigen::VectorXd> base(N, Eigen::VectorXd::Random(cells));
        auto a = base, b = base;
        const double ts = median_ms([&] { a = base; apply_cellwise_matrices(mats, a, Execution::Serial); }, 7);
        const double tp = median_ms([&] { b = base; apply_cellwise_matrices(mats, b, Execution::Parallel); }, 7);
        bool same = true;
        for (int k = 0; k < N; ++k) same = same && a[k] == b[k];
        report("cellwise_reaction", ts, tp, same);
    }
    {
        const RectDomain dom = build_grid_1d(1.0, 64);
        const ScalarField f = ScalarField::from_function(dom, [](double x, double) { return 1.0 + 0.3 * x; });
        const FaceField v = log_gradient(f);
        const StackedDensity Y{{normalized(f)}};
        ParticleEnsemble a = sample_ensemble(Y, 200000, 7), b = a;
        const auto init = a;
        const double ts = median_ms([&] { a = init; for (int k = 0; k < 5; ++k) sde_step(a, {v}, {1.0}, nullptr, 1e-3, Execution::Serial); }, 5);
        const double tp = median_ms([&] { b = init; for (int k = 0; k < 5; ++k) sde_step(b, {v}, {1.0}, nullptr, 1e-3, Execution::Parallel); }, 5);
        report("sde_step x5", ts, tp, a.positions == b.positions && a.states == b.states);

        const RectDomain bins = build_grid_1d(1.0, 32);
        EmpiricalDensity ea, eb;
        const double hs = median_ms([&] { ea = empirical_density(a, bins, Execution::Serial); }, 7);
        const double hp = median_ms([&] { eb = empirical_density(a, bins, Execution::Parallel); }, 7);
        report("histogram", hs, hp, ea.density.states[0].values == eb.density.states[0].values);
    }
    return 0;
}
