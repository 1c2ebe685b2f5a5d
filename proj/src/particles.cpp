#include "adrctl/particles.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include "adrctl/csv.hpp"
#include "adrctl/errors.hpp"

namespace adrctl {

namespace {

constexpr std::uint64_t kSamplingStep = ~std::uint64_t{0};

std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

int cell_of(const RectDomain& dom, const std::array<double, 2>& x) {
    const int i = std::clamp(static_cast<int>(x[0] / dom.spacing[0]), 0, dom.nx() - 1);
    if (dom.dim == 1) return i;
    const int j = std::clamp(static_cast<int>(x[1] / dom.spacing[1]), 0, dom.ny() - 1);
    return dom.index(i, j);
}

}  // namespace

std::uint64_t CounterRng::bits(std::uint64_t particle, std::uint64_t step,
                               std::uint64_t stream) const {
    return mix(mix(mix(mix(seed) ^ particle) ^ step) ^ stream);
}

double CounterRng::uniform(std::uint64_t particle, std::uint64_t step, std::uint64_t stream) const {
    return (static_cast<double>(bits(particle, step, stream) >> 11) + 0.5) * 0x1.0p-53;
}

double CounterRng::normal(std::uint64_t particle, std::uint64_t step, std::uint64_t k) const {
    const double u1 = uniform(particle, step, 2 * k);
    const double u2 = uniform(particle, step, 2 * k + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

ParticleEnsemble sample_ensemble(const StackedDensity& Y, int Np, std::uint64_t seed) {
    if (Np < 1) throw InputError("particles", "ensemble needs at least one particle");
    if (Y.min() < 0.0) throw InputError("particles", "density must be nonnegative");
    const RectDomain& dom = Y.domain();
    const int cells = dom.num_cells();
    std::vector<double> cdf;
    double acc = 0.0;
    for (const auto& s : Y.states)
        for (int c = 0; c < cells; ++c) cdf.push_back(acc += s.values[c]);
    if (!(acc > 0.0)) throw InputError("particles", "density has zero mass");

    ParticleEnsemble ens;
    ens.domain = dom;
    ens.num_states = Y.num_states();
    ens.rng.seed = seed;
    ens.positions.resize(Np);
    ens.states.resize(Np);
    for (int p = 0; p < Np; ++p) {
        const double u = ens.rng.uniform(p, kSamplingStep, 0) * acc;
        const int idx = static_cast<int>(
            std::min<std::ptrdiff_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin(),
                                     static_cast<std::ptrdiff_t>(cdf.size()) - 1));
        ens.states[p] = idx / cells;
        const int c = idx % cells;
        const int i = c % dom.nx(), j = c / dom.nx();
        ens.positions[p][0] = (i + ens.rng.uniform(p, kSamplingStep, 1)) * dom.spacing[0];
        ens.positions[p][1] =
            dom.dim == 2 ? (j + ens.rng.uniform(p, kSamplingStep, 2)) * dom.spacing[1] : 0.0;
    }
    return ens;
}

std::array<double, 2> interpolate_velocity(const FaceField& v, const std::array<double, 2>& x) {
    const RectDomain& dom = v.domain;
    std::array<double, 2> out{0.0, 0.0};
    const int i = std::clamp(static_cast<int>(x[0] / dom.spacing[0]), 0, dom.nx() - 1);
    const int j = dom.dim == 2
                      ? std::clamp(static_cast<int>(x[1] / dom.spacing[1]), 0, dom.ny() - 1)
                      : 0;
    {
        const int stride = dom.nx() - 1;
        const double left = i > 0 ? v.x_faces[(i - 1) + stride * j] : 0.0;
        const double right = i < dom.nx() - 1 ? v.x_faces[i + stride * j] : 0.0;
        const double s = std::clamp(x[0] / dom.spacing[0] - i, 0.0, 1.0);
        out[0] = (1.0 - s) * left + s * right;
    }
    if (dom.dim == 2) {
        const double low = j > 0 ? v.y_faces[i + dom.nx() * (j - 1)] : 0.0;
        const double high = j < dom.ny() - 1 ? v.y_faces[i + dom.nx() * j] : 0.0;
        const double s = std::clamp(x[1] / dom.spacing[1] - j, 0.0, 1.0);
        out[1] = (1.0 - s) * low + s * high;
    }
    return out;
}

double reflect(double x, double length) {
    while (x < 0.0 || x > length) x = x < 0.0 ? -x : 2.0 * length - x;
    return x;
}

void sde_step(ParticleEnsemble& ens, const std::vector<FaceField>& velocities,
              const std::vector<double>& D, const SwitchingLaw* switching, double dt,
              Execution exec) {
    if (!(dt > 0.0)) throw InputError("particles", "time step must be positive");
    if (static_cast<int>(velocities.size()) != ens.num_states ||
        static_cast<int>(D.size()) != ens.num_states)
        throw InputError("particles", "one velocity field and one D per state");

    std::vector<std::vector<int>> out_edges(ens.num_states);
    if (switching) {
        const auto& g = switching->graph;
        if (g.N != ens.num_states || switching->gains.num_edges() != g.num_edges())
            throw InputError("particles", "switching law does not match the ensemble");
        for (int e = 0; e < g.num_edges(); ++e) out_edges[g.edges[e].source].push_back(e);
        double max_exit = 0.0;
        for (int s = 0; s < g.N; ++s) {
            Eigen::VectorXd exit = Eigen::VectorXd::Zero(switching->gains.domain.num_cells());
            for (int e : out_edges[s]) exit += switching->gains.gains[e];
            if (exit.size()) max_exit = std::max(max_exit, exit.maxCoeff());
        }
        if (max_exit * dt > 0.1)
            throw StepSizeError("particles", "max exit rate * dt exceeds 0.1; reduce dt");
    }

    const RectDomain& dom = ens.domain;
    const std::uint64_t step = ens.step_index;
    const int Np = ens.size();
    auto advance = [&](int p) {
        auto& x = ens.positions[p];
        int& s = ens.states[p];
        const auto v = interpolate_velocity(velocities[s], x);
        const double noise = std::sqrt(2.0 * D[s] * dt);
        for (int d = 0; d < dom.dim; ++d) {
            double xn = x[d] + v[d] * dt;
            if (noise > 0.0) xn += noise * ens.rng.normal(p, step, d);
            x[d] = reflect(xn, dom.lengths[d]);
        }
        if (!switching) return;
        const int c = cell_of(switching->gains.domain, x);
        const auto& edges = out_edges[s];
        for (std::size_t k = 0; k < edges.size(); ++k) {
            const double rate = switching->gains.gains[edges[k]][c];
            if (rate <= 0.0) continue;
            if (ens.rng.uniform(p, step, 4 + k) < -std::expm1(-rate * dt)) {
                s = switching->graph.edges[edges[k]].target;
                break;
            }
        }
    };
    if (exec == Execution::Parallel) {
#pragma omp parallel for schedule(static)
        for (int p = 0; p < Np; ++p) advance(p);
    } else {
        for (int p = 0; p < Np; ++p) advance(p);
    }
    ++ens.step_index;
}

EmpiricalDensity empirical_density(const ParticleEnsemble& ens, const RectDomain& bins,
                                   Execution exec) {
    if (bins.dim != ens.domain.dim || bins.lengths != ens.domain.lengths)
        throw InputError("particles", "bin grid must cover the ensemble domain");
    const int cells = bins.num_cells();
    std::vector<int> bin_of(ens.size());
    for (int p = 0; p < ens.size(); ++p)
        bin_of[p] = ens.states[p] * cells + cell_of(bins, ens.positions[p]);
    const auto counts = histogram_counts(bin_of, cells * ens.num_states, exec);

    EmpiricalDensity out;
    out.num_particles = ens.size();
    out.bins = bins;
    const double scale = 1.0 / (static_cast<double>(ens.size()) * bins.cell_volume());
    for (int s = 0; s < ens.num_states; ++s) {
        ScalarField f = ScalarField::constant(bins, 0.0);
        for (int c = 0; c < cells; ++c) f.values[c] = counts[s * cells + c] * scale;
        out.density.states.push_back(std::move(f));
    }
    return out;
}

void write_ensemble_csv(std::ostream& out, const ParticleEnsemble& ens) {
    out << (ens.domain.dim == 2 ? "particle,state,x,y\n" : "particle,state,x\n");
    for (int p = 0; p < ens.size(); ++p) {
        out << p << ',' << ens.states[p] + 1 << ',' << format_double(ens.positions[p][0]);
        if (ens.domain.dim == 2) out << ',' << format_double(ens.positions[p][1]);
        out << '\n';
    }
}

}  // namespace adrctl
