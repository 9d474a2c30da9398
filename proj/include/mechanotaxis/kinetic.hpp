#pragma once

#include "mechanotaxis/diagnostics.hpp"
#include "mechanotaxis/errors.hpp"
#include "mechanotaxis/fv_solver.hpp"
#include "mechanotaxis/grid.hpp"
#include "mechanotaxis/velocity_law.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <thread>
#include <vector>

namespace mechanotaxis {

/// Counter-based random numbers: a pure function of (seed, particle, step, draw),
/// so trajectories do not depend on how particles are split across threads.
inline std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Uniform in the open interval (0, 1).
inline double counter_uniform(std::uint64_t seed, std::uint64_t particle, std::uint64_t step, std::uint64_t draw) noexcept {
    const std::uint64_t h = mix64(mix64(mix64(seed) ^ particle) + (step << 3) + draw);
    return (static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53;
}

/// Run-and-tumble particles with inertia in a frozen signal:
///   dx/dt = V Omega,  m dV/dt = F - mu(S) V,  mu(S) = F / v(S),
/// with tumbles at rate lambda to a uniform direction in {-1, +1}.
struct KineticParams {
    double F = 1.0;
    double m = 1.0;
    double lambda = 1.0;
    VelocityLaw law = VelocityLaw::rational(2.0, 2.0);
    Field S;
    std::size_t N = 1000;
    std::uint64_t seed = 1;
    double total_mass = 1.0;
    unsigned threads = 0;  // 0: hardware concurrency

    explicit KineticParams(Field signal) : S(std::move(signal)) {}

    void validate() const {
        if (!(F > 0.0)) throw DomainError("kinetic: F must be positive");
        if (!(m > 0.0)) throw DomainError("kinetic: m must be positive");
        if (!(lambda >= 0.0)) throw DomainError("kinetic: lambda must be non-negative");
        if (N == 0) throw DomainError("kinetic: need at least one particle");
        if (!(total_mass > 0.0)) throw DomainError("kinetic: total mass must be positive");
        S.require_positive("kinetic: frozen signal");
    }
};

struct ParticleEnsemble {
    std::vector<double> x;      // wrapped into [-L/2, L/2)
    std::vector<double> omega;  // +-1
    std::vector<double> V;      // speed > 0
    std::vector<double> disp;   // unwrapped displacement since creation
    std::uint64_t step = 0;

    std::size_t size() const noexcept { return x.size(); }
};

namespace detail {

inline unsigned worker_count(unsigned requested, std::size_t work) {
    unsigned n = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
    return static_cast<unsigned>(std::clamp<std::size_t>(work / 50000, 1, n));
}

/// Runs body(begin, end, worker) over contiguous ranges.
inline void parallel_ranges(std::size_t n, unsigned workers, const std::function<void(std::size_t, std::size_t, unsigned)>& body) {
    if (workers <= 1) {
        body(0, n, 0);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        const std::size_t b = n * w / workers, e = n * (w + 1) / workers;
        pool.emplace_back(body, b, e, w);
    }
    for (auto& t : pool) t.join();
}

inline std::size_t cell_of(const Grid& g, double x) {
    auto i = static_cast<std::ptrdiff_t>(std::floor((x + 0.5 * g.length()) / g.dx()));
    return g.wrap(i);
}

inline double wrap_position(const Grid& g, double x) {
    const double L = g.length();
    double y = std::fmod(x + 0.5 * L, L);
    if (y < 0.0) y += L;
    if (y >= L) y = 0.0;
    return y - 0.5 * L;
}

}  // namespace detail

/// Draws positions from a piecewise-constant density (inverse CDF per cell,
/// uniform inside the cell), uniform directions, and speeds at equilibrium
/// V = v(S) unless an initial speed is given.
inline ParticleEnsemble make_ensemble(const KineticParams& params, const Field& rho0,
                                      std::optional<double> initial_speed = std::nullopt) {
    params.validate();
    rho0.require_positive("kinetic: initial density");
    if (initial_speed && !(*initial_speed > 0.0)) throw DomainError("kinetic: initial speed must be positive");
    const Grid& g = rho0.grid();
    std::vector<double> cdf(g.size() + 1, 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) cdf[i + 1] = cdf[i] + rho0[i];
    const double total = cdf.back();

    ParticleEnsemble e;
    e.x.resize(params.N);
    e.omega.resize(params.N);
    e.V.resize(params.N);
    e.disp.assign(params.N, 0.0);
    const std::uint64_t init_stream = ~std::uint64_t{0};
    for (std::size_t p = 0; p < params.N; ++p) {
        const double u = counter_uniform(params.seed, p, init_stream, 0) * total;
        auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        std::size_t c = static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - cdf.begin() - 1, 0));
        c = std::min(c, g.size() - 1);
        const double frac = (u - cdf[c]) / rho0[c];
        e.x[p] = detail::wrap_position(g, g.edge(c) + std::clamp(frac, 0.0, 1.0) * g.dx());
        e.omega[p] = counter_uniform(params.seed, p, init_stream, 1) < 0.5 ? -1.0 : 1.0;
        e.V[p] = initial_speed ? *initial_speed
                               : velocity(params.law, params.S[detail::cell_of(params.S.grid(), e.x[p])]);
    }
    return e;
}

/// One step of length dt. The signal is frozen at each particle's cell; the
/// speed relaxes exactly, V <- v + (V - v) e^{-dt/tau} with tau = m / mu = m v / F,
/// and the displacement uses the exact time integral of that relaxation.
/// Returns the number of tumble events.
inline std::size_t advance(ParticleEnsemble& e, const KineticParams& params, double dt) {
    if (!(dt > 0.0)) throw DomainError("kinetic advance needs dt > 0");
    const Grid& g = params.S.grid();
    const std::size_t I = g.size();
    std::vector<double> veq(I), decay(I), drift(I);
    for (std::size_t i = 0; i < I; ++i) {
        const double v = velocity(params.law, params.S[i]);
        const double rate = params.F / (v * params.m);  // mu / m
        veq[i] = v;
        decay[i] = std::exp(-rate * dt);
        drift[i] = -std::expm1(-rate * dt) / rate;
    }
    const double p_tumble = -std::expm1(-params.lambda * dt);
    const unsigned workers = detail::worker_count(params.threads, e.size());
    std::vector<std::size_t> tumbles(workers, 0);
    const std::uint64_t step = e.step;

    detail::parallel_ranges(e.size(), workers, [&](std::size_t b, std::size_t end, unsigned w) {
        std::size_t count = 0;
        for (std::size_t p = b; p < end; ++p) {
            const std::size_t c = detail::cell_of(g, e.x[p]);
            const double dv = e.V[p] - veq[c];
            const double dx = e.omega[p] * (veq[c] * dt + dv * drift[c]);
            e.V[p] = veq[c] + dv * decay[c];
            e.x[p] = detail::wrap_position(g, e.x[p] + dx);
            e.disp[p] += dx;
            if (counter_uniform(params.seed, p, step, 0) < p_tumble) {
                ++count;
                e.omega[p] = counter_uniform(params.seed, p, step, 1) < 0.5 ? -1.0 : 1.0;
            }
        }
        tumbles[w] = count;
    });
    ++e.step;
    std::size_t total = 0;
    for (std::size_t c : tumbles) total += c;
    return total;
}

/// Histogram density with mass total_mass / N per particle.
inline Field density(const ParticleEnsemble& e, const Grid& grid, double total_mass) {
    std::vector<std::size_t> counts(grid.size(), 0);
    for (double x : e.x) ++counts[detail::cell_of(grid, x)];
    Field out(grid);
    const double w = total_mass / (static_cast<double>(e.size()) * grid.dx());
    for (std::size_t i = 0; i < grid.size(); ++i) out[i] = static_cast<double>(counts[i]) * w;
    return out;
}

/// Cell averages of a fine field on a coarser grid whose cells are unions of
/// fine cells.
inline Field coarsen(const Field& fine, const Grid& coarse) {
    const Grid& g = fine.grid();
    if (g.size() % coarse.size() != 0 || std::abs(g.length() - coarse.length()) > 1e-12 * g.length())
        throw DomainError("coarsen: grids are not nested");
    const std::size_t r = g.size() / coarse.size();
    Field out(coarse);
    for (std::size_t i = 0; i < coarse.size(); ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < r; ++k) acc += fine[i * r + k];
        out[i] = acc / static_cast<double>(r);
    }
    return out;
}

/// Scaled kinetic parameters for a given epsilon: lambda = 1/eps and
/// m = alpha F eps, so that m lambda / F = alpha.
inline KineticParams scaled_params(const KineticParams& base, double alpha, double eps) {
    if (!(eps > 0.0)) throw DomainError("kinetic: eps must be positive");
    if (!(alpha > 0.0)) throw DomainError("kinetic: alpha must be positive for the scaled model");
    KineticParams p = base;
    p.lambda = 1.0 / eps;
    p.m = alpha * base.F * eps;
    return p;
}

struct DiffusionCalibration {
    double D_eff;
    double v;
    std::vector<std::pair<double, double>> msd;  // (macro time, mean squared displacement)
};

/// Effective macroscopic diffusion constant of the scaled particle model in a
/// uniform signal: MSD(t) ~ 2 D_eff v^2 t in macroscopic time.
inline DiffusionCalibration calibrate_diffusion(const KineticParams& base, double alpha, double eps, double t_macro,
                                                double dt_factor = 0.05, std::size_t samples = 20) {
    KineticParams p = scaled_params(base, alpha, eps);
    p.S = Field(base.S.grid(), 1.0);
    const double v = velocity(p.law, 1.0);
    ParticleEnsemble e = make_ensemble(p, Field(p.S.grid(), 1.0));
    const double dt = dt_factor * eps;
    const auto steps = static_cast<std::size_t>(std::llround(t_macro / eps / dt));
    const std::size_t stride = std::max<std::size_t>(steps / samples, 1);
    DiffusionCalibration out{0.0, v, {}};
    for (std::size_t s = 1; s <= steps; ++s) {
        advance(e, p, dt);
        if (s % stride == 0) {
            double acc = 0.0;
            for (double d : e.disp) acc += d * d;
            out.msd.emplace_back(static_cast<double>(s) * dt * eps, acc / static_cast<double>(e.size()));
        }
    }
    // slope over the second half, after the ballistic layer
    double st = 0, sm = 0, n = 0;
    const std::size_t from = out.msd.size() / 2;
    for (std::size_t i = from; i < out.msd.size(); ++i) {
        st += out.msd[i].first;
        sm += out.msd[i].second;
        n += 1;
    }
    if (n < 2) throw InsufficientSamples("calibrate_diffusion: too few MSD samples");
    const double tm = st / n, mm = sm / n;
    double sxy = 0, sxx = 0;
    for (std::size_t i = from; i < out.msd.size(); ++i) {
        sxy += (out.msd[i].first - tm) * (out.msd[i].second - mm);
        sxx += (out.msd[i].first - tm) * (out.msd[i].first - tm);
    }
    out.D_eff = sxy / sxx / (2.0 * v * v);
    return out;
}

struct LimitRow {
    double eps;
    double t;
    double l1_error;
};

/// Compares the scaled particle model against macroscopic snapshots. The
/// ensemble starts from the first snapshot; macroscopic time t maps to
/// particle time t / eps. Densities are compared on hist_grid.
inline std::vector<LimitRow> limit_study(const KineticParams& base, double alpha, const std::vector<double>& eps_list,
                                         const Trajectory& macro_ref, const Grid& hist_grid, double dt_factor = 0.05) {
    if (macro_ref.snapshots.size() < 2) throw DomainError("limit_study needs an initial and at least one later snapshot");
    const Snapshot& first = macro_ref.snapshots.front();
    std::vector<LimitRow> rows;
    for (double eps : eps_list) {
        KineticParams p = scaled_params(base, alpha, eps);
        ParticleEnsemble e = make_ensemble(p, first.rho);
        const double dt = dt_factor * eps;
        double t_particle = 0.0;
        for (std::size_t k = 1; k < macro_ref.snapshots.size(); ++k) {
            const Snapshot& snap = macro_ref.snapshots[k];
            const double target = (snap.t - first.t) / eps;
            const auto steps = static_cast<long long>(std::llround((target - t_particle) / dt));
            for (long long s = 0; s < steps; ++s) advance(e, p, dt);
            t_particle += static_cast<double>(steps) * dt;
            const Field emp = density(e, hist_grid, p.total_mass);
            const Field ref = coarsen(snap.rho, hist_grid);
            rows.push_back({eps, snap.t, l1_distance(emp, ref)});
        }
    }
    return rows;
}

}  // namespace mechanotaxis
