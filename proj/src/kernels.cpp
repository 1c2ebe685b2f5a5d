#include "adrctl/kernels.hpp"

#include "adrctl/errors.hpp"

namespace adrctl {

namespace {

inline void apply_one_cell(const Eigen::MatrixXd& M, std::vector<Eigen::VectorXd>& states,
                           Eigen::Index c, double* scratch) {
    const auto N = static_cast<Eigen::Index>(states.size());
    for (Eigen::Index k = 0; k < N; ++k) {
        double acc = 0.0;
        for (Eigen::Index j = 0; j < N; ++j) acc += M(k, j) * states[j][c];
        scratch[k] = acc;
    }
    for (Eigen::Index k = 0; k < N; ++k) states[k][c] = scratch[k];
}

}  // namespace

void apply_cellwise_matrices(std::span<const Eigen::MatrixXd> mats,
                             std::vector<Eigen::VectorXd>& states, Execution exec) {
    if (states.empty()) return;
    const Eigen::Index cells = states[0].size();
    const auto N = static_cast<Eigen::Index>(states.size());
    if (mats.size() != 1 && static_cast<Eigen::Index>(mats.size()) != cells)
        throw InputError("kernels", "need one matrix per cell or a single shared matrix");
    const bool shared = mats.size() == 1;

    if (exec == Execution::Serial) {
        std::vector<double> scratch(N);
        for (Eigen::Index c = 0; c < cells; ++c)
            apply_one_cell(shared ? mats[0] : mats[c], states, c, scratch.data());
        return;
    }
#pragma omp parallel
    {
        std::vector<double> scratch(N);
#pragma omp for schedule(static)
        for (Eigen::Index c = 0; c < cells; ++c)
            apply_one_cell(shared ? mats[0] : mats[c], states, c, scratch.data());
    }
}

std::vector<long long> histogram_counts(std::span<const int> bin_of, int bins, Execution exec) {
    std::vector<long long> counts(bins, 0);
    const auto n = static_cast<long long>(bin_of.size());
    if (exec == Execution::Serial) {
        for (long long p = 0; p < n; ++p) ++counts[bin_of[p]];
        return counts;
    }
#pragma omp parallel
    {
        std::vector<long long> local(bins, 0);
#pragma omp for schedule(static) nowait
        for (long long p = 0; p < n; ++p) ++local[bin_of[p]];
#pragma omp critical
        for (int b = 0; b < bins; ++b) counts[b] += local[b];
    }
    return counts;
}

}  // namespace adrctl
