#pragma once

// Data-parallel inner loops with a serial reference twin. Both variants
// produce bit-identical results: every output element is computed by the
// same sequence of floating-point operations regardless of thread count.

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace adrctl {

enum class Execution { Serial, Parallel };

/// states[k][c] ← Σ_j M_c(k, j) states[j][c] for every cell c, where
/// M_c = mats[c], or mats[0] for all cells when mats has one entry.
void apply_cellwise_matrices(std::span<const Eigen::MatrixXd> mats,
                             std::vector<Eigen::VectorXd>& states, Execution exec);

/// Bin counts of 1D bin indices; indices outside [0, bins) are rejected by
/// the caller. Parallel variant reduces per-thread histograms in thread
/// order, which is exact for integer counts.
std::vector<long long> histogram_counts(std::span<const int> bin_of, int bins, Execution exec);

}  // namespace adrctl
