#pragma once

// Monte Carlo simulation of the reflected switching diffusion
//   dZ = v_Y(Z) dt + sqrt(2 D_Y) dW,  Y jumps along e at rate K_e(Z),
// whose forward equation is the coupled system in hsdp.

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "adrctl/ctmc.hpp"
#include "adrctl/grid.hpp"
#include "adrctl/hsdp.hpp"
#include "adrctl/kernels.hpp"

namespace adrctl {

/// Counter-based generator: every draw is a pure function of
/// (seed, particle, step, stream), so results do not depend on scheduling.
struct CounterRng {
    std::uint64_t seed = 0;

    std::uint64_t bits(std::uint64_t particle, std::uint64_t step, std::uint64_t stream) const;
    /// Uniform on (0, 1).
    double uniform(std::uint64_t particle, std::uint64_t step, std::uint64_t stream) const;
    /// Standard normal from streams (2k, 2k+1) by Box–Muller.
    double normal(std::uint64_t particle, std::uint64_t step, std::uint64_t k) const;
};

struct ParticleEnsemble {
    RectDomain domain;
    int num_states = 1;
    std::vector<std::array<double, 2>> positions;
    std::vector<int> states;  // 0-based
    CounterRng rng;
    std::uint64_t step_index = 0;

    int size() const { return static_cast<int>(positions.size()); }
};

/// Np particles drawn from a stacked density (cell by inverse CDF, then
/// uniform inside the cell).
ParticleEnsemble sample_ensemble(const StackedDensity& Y, int Np, std::uint64_t seed);

/// Switching data: graph plus cellwise gains on `gains.domain`. An empty
/// graph (no edges) disables switching.
struct SwitchingLaw {
    TransitionGraph graph;
    SpatialGainSet gains;
};

/// Face velocity interpolated linearly inside the containing cell; the
/// boundary faces contribute zero.
std::array<double, 2> interpolate_velocity(const FaceField& v, const std::array<double, 2>& x);

/// Mirror reflection into [0, L] per coordinate, repeated until inside.
double reflect(double x, double length);

/// One Euler–Maruyama step with reflection followed by at most one state
/// switch (candidate edges in edge order, probability 1 - exp(-K dt) each).
/// Throws StepSizeError when max total exit rate · dt > 0.1.
void sde_step(ParticleEnsemble& ens, const std::vector<FaceField>& velocities,
              const std::vector<double>& D, const SwitchingLaw* switching, double dt,
              Execution exec = Execution::Parallel);

/// Per-state histogram on `bins`, normalised so the total mass is one.
struct EmpiricalDensity {
    StackedDensity density;
    long long num_particles = 0;
    RectDomain bins;
};

EmpiricalDensity empirical_density(const ParticleEnsemble& ens, const RectDomain& bins,
                                   Execution exec = Execution::Parallel);

/// Rows "particle,state,x[,y]" (states 1-based).
void write_ensemble_csv(std::ostream& out, const ParticleEnsemble& ens);

}  // namespace adrctl
