#pragma once

#include "mechanotaxis/diagnostics.hpp"
#include "mechanotaxis/errors.hpp"
#include "mechanotaxis/grid.hpp"
#include "mechanotaxis/signal.hpp"
#include "mechanotaxis/velocity_law.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

namespace mechanotaxis {

/// Signal held fixed in time (decoupled mode).
struct FrozenSignal {
    Field S;
};

using SignalModel = std::variant<SignalParams, ConvolutionKernel, FrozenSignal>;

struct InitialCondition {
    enum class Kind { cosine, multimode, profile };

    Kind kind = Kind::cosine;
    double mean = 1.0;
    double amplitude = 0.1;
    int mode = 1;          // cosine: wave number index n in cos(2π n x / L)
    int max_mode = 8;      // modes 1..max_mode with seeded phases
    double noise = 0.0;    // cosine: relative amplitude of the added multimode perturbation
    std::uint64_t seed = 1;
    std::vector<double> values;  // profile

    Field build(const Grid& grid) const {
        const double L = grid.length();
        const double two_pi = 2.0 * std::numbers::pi;
        std::mt19937_64 rng(seed);
        std::vector<double> phase(static_cast<std::size_t>(std::max(max_mode, 0)));
        for (auto& p : phase) p = two_pi * static_cast<double>(rng() >> 11) * 0x1.0p-53;
        auto modes = [&](double x) {
            double s = 0.0;
            for (std::size_t n = 0; n < phase.size(); ++n)
                s += std::cos(two_pi * static_cast<double>(n + 1) * x / L + phase[n]);
            return s;
        };
        switch (kind) {
            case Kind::cosine:
                return Field::positive(grid, Field::sample(grid, [&](double x) {
                                                 double r = mean + amplitude * std::cos(two_pi * mode * x / L);
                                                 if (noise > 0.0) r += mean * noise * modes(x);
                                                 return r;
                                             }).data());
            case Kind::multimode:
                return Field::positive(grid, Field::sample(grid, [&](double x) {
                                                 return mean * (1.0 + amplitude * modes(x));
                                             }).data());
            case Kind::profile:
                return Field::positive(grid, values);
        }
        throw ConfigError("unknown initial condition kind");
    }
};

/// Full description of a macroscopic run.
struct MacroConfig {
    double L = 1.0;
    std::size_t cells = 0;  // 0: default dx = sqrt(Ds)/10
    MobilityParams mobility{};
    VelocityLaw law = VelocityLaw::rational(2.0, 2.0);
    SignalModel signal = SignalParams{};
    double dt = 0.0;  // 0: default dt = dx^2/5
    double t_end = 1.0;
    std::size_t snapshot_every = 0;     // 0: only first and last
    std::size_t diagnostic_every = 0;   // 0: only first and last
    InitialCondition initial{};
    bool sub_cycling = true;
    int max_subcycle_depth = 20;
    double steady_tol = 0.0;  // > 0: stop once ||rho^{n+1}-rho^n||_inf / dt < steady_tol

    Grid grid() const {
        if (cells > 0) return Grid(L, cells);
        if (const auto* sp = std::get_if<SignalParams>(&signal)) {
            sp->validate();
            const double dx = std::sqrt(sp->Ds) / 10.0;
            return Grid(L, static_cast<std::size_t>(std::llround(L / dx)));
        }
        if (const auto* k = std::get_if<ConvolutionKernel>(&signal)) return k->grid();
        return std::get<FrozenSignal>(signal).S.grid();
    }

    double time_step() const {
        if (dt > 0.0) return dt;
        const double dx = grid().dx();
        return dx * dx / 5.0;
    }

    void validate() const {
        mobility.validate();
        if (!(t_end >= 0.0)) throw ConfigError("t_end must be >= 0");
        if (dt < 0.0) throw ConfigError("dt must be > 0");
        const Grid g = grid();
        if (const auto* k = std::get_if<ConvolutionKernel>(&signal); k && !(k->grid() == g))
            throw ConfigError("kernel grid does not match the simulation grid");
        if (const auto* f = std::get_if<FrozenSignal>(&signal)) {
            if (!(f->S.grid() == g)) throw ConfigError("frozen signal grid does not match the simulation grid");
            for (std::size_t i = 0; i < f->S.size(); ++i)
                if (!(f->S[i] >= 0.0)) throw ConfigError("frozen signal must be nonnegative");
        }
    }

    bool frozen() const { return std::holds_alternative<FrozenSignal>(signal); }
};

struct Snapshot {
    double t;
    Field rho;
    Field S;
};

struct DiagnosticSample {
    double t;
    double mass;
    double entropy;
    double free_energy;
    double l2w_deviation;  // NaN without a stationary reference (coupled runs)
};

struct Trajectory {
    std::vector<Snapshot> snapshots;
    std::vector<DiagnosticSample> diagnostics;
    std::size_t steps = 0;
    std::size_t substeps = 0;  // extra steps spent in sub-cycling
    double steady_residual = std::numeric_limits<double>::infinity();

    const Snapshot& final() const { return snapshots.back(); }
};

/// phi_j at interface j (between cells j-1 and j):
/// v((S_{j-1}+S_j)/2)^2 ln[rho_j w_j / (rho_{j-1} w_{j-1})] / dx with w = alpha v^2 + v.
inline std::vector<double> edge_potential(const Field& rho, const Field& S, const VelocityLaw& law, double alpha) {
    rho.require_positive("edge_potential: density");
    const std::size_t n = rho.size();
    const double dx = rho.grid().dx();
    std::vector<double> phi(n);
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t jm = j == 0 ? n - 1 : j - 1;
        const double vm = velocity(law, 0.5 * (S[jm] + S[j]));
        const double ratio = (rho[j] * mobility_weight(law, alpha, S[j])) /
                             (rho[jm] * mobility_weight(law, alpha, S[jm]));
        phi[j] = vm * vm * std::log(ratio) / dx;
    }
    return phi;
}

/// Explicit upwind finite-volume stepper with workspace reuse. The update is
///   rho_i <- rho_i + (D dt / dx) (G_{i+1} - G_i),
///   G_j   =  phi_j^+ rho_j - (-phi_j)^+ rho_{j-1},
/// where G_j is the leftward mass flux through interface j, so mass always
/// leaves the donor cell on the high side of rho*w.
class FvStepper {
public:
    FvStepper(const Grid& grid, const VelocityLaw& law, MobilityParams mobility, bool sub_cycling = true,
              int max_depth = 20)
        : grid_(grid), law_(law), mobility_(mobility), sub_cycling_(sub_cycling), max_depth_(max_depth),
          w_(grid.size()), v2_mid_(grid.size()), g_(grid.size()), phi_(grid.size()), flux_(grid.size()) {
        mobility_.validate();
    }

    /// Caches w and v_mid^2 for a signal; call whenever S changes.
    void set_signal(std::span<const double> S) {
        const std::size_t n = grid_.size();
        const double alpha = mobility_.alpha;
        for (std::size_t i = 0; i < n; ++i) {
            const double v = velocity(law_, S[i]);
            w_[i] = alpha * v * v + v;
        }
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t jm = j == 0 ? n - 1 : j - 1;
            const double vm = velocity(law_, 0.5 * (S[jm] + S[j]));
            v2_mid_[j] = vm * vm;
        }
    }

    /// Advances rho by dt; returns the number of extra sub-steps taken.
    std::size_t advance(std::span<double> rho, double dt) { return advance_impl(rho, dt, 0); }

    std::span<const double> last_potential() const { return phi_; }

    const Grid& grid() const noexcept { return grid_; }

private:
    void compute_potential(std::span<const double> rho) {
        const std::size_t n = grid_.size();
        const double inv_dx = 1.0 / grid_.dx();
        for (std::size_t i = 0; i < n; ++i) g_[i] = std::log(rho[i] * w_[i]);
        phi_[0] = v2_mid_[0] * (g_[0] - g_[n - 1]) * inv_dx;
        for (std::size_t j = 1; j < n; ++j) phi_[j] = v2_mid_[j] * (g_[j] - g_[j - 1]) * inv_dx;
    }

    std::size_t advance_impl(std::span<double> rho, double dt, int depth) {
        const std::size_t n = grid_.size();
        for (std::size_t i = 0; i < n; ++i)
            if (!(rho[i] > 0.0)) throw PositivityLoss(i, "non-positive density entering step");
        compute_potential(rho);

        // outflow rate of cell i: left through interface i, right through i+1
        const double c = mobility_.D * dt / grid_.dx();
        double worst = 0.0;
        std::size_t worst_cell = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double right = phi_[i + 1 == n ? 0 : i + 1];
            const double out = std::max(phi_[i], 0.0) + std::max(-right, 0.0);
            if (out > worst) {
                worst = out;
                worst_cell = i;
            }
        }
        if (c * worst >= 1.0) {
            if (!sub_cycling_)
                throw PositivityLoss(worst_cell, "time step exceeds the positivity bound dt < dx/(D*outflow)");
            if (depth >= max_depth_)
                throw PositivityLoss(worst_cell, "sub-cycling depth exhausted");
            std::size_t extra = 1;
            extra += advance_impl(rho, 0.5 * dt, depth + 1);
            extra += advance_impl(rho, 0.5 * dt, depth + 1);
            return extra;
        }

        flux_[0] = std::max(phi_[0], 0.0) * rho[0] - std::max(-phi_[0], 0.0) * rho[n - 1];
        for (std::size_t j = 1; j < n; ++j)
            flux_[j] = std::max(phi_[j], 0.0) * rho[j] - std::max(-phi_[j], 0.0) * rho[j - 1];
        for (std::size_t i = 0; i + 1 < n; ++i) rho[i] += c * (flux_[i + 1] - flux_[i]);
        rho[n - 1] += c * (flux_[0] - flux_[n - 1]);
        return 0;
    }

    Grid grid_;
    VelocityLaw law_;
    MobilityParams mobility_;
    bool sub_cycling_;
    int max_depth_;
    std::vector<double> w_;  // alpha v_i^2 + v_i
    std::vector<double> v2_mid_;
    std::vector<double> g_;
    std::vector<double> phi_;
    std::vector<double> flux_;
};

/// One explicit step with the signal S held fixed during the step.
inline Field step(const Field& rho, const Field& S, const MacroConfig& config) {
    rho.require_positive("step: density");
    FvStepper stepper(rho.grid(), config.law, config.mobility, config.sub_cycling, config.max_subcycle_depth);
    stepper.set_signal(S.values());
    Field out = rho;
    stepper.advance(out.values(), config.time_step());
    return out;
}

/// Computes S from rho according to the configured signal model.
class SignalUpdater {
public:
    SignalUpdater(const Grid& grid, const SignalModel& model) : model_(model) {
        if (const auto* sp = std::get_if<SignalParams>(&model)) helmholtz_.emplace(grid, *sp);
    }

    void update(const Field& rho, Field& S) const {
        if (helmholtz_) {
            helmholtz_->solve_into(rho.values(), S.values());
        } else if (const auto* k = std::get_if<ConvolutionKernel>(&model_)) {
            S = convolve(rho, *k);
        } else {
            S = std::get<FrozenSignal>(model_).S;
        }
        // the discrete maximum principle keeps S >= min(rho) > 0; guard round-off only
        for (double& s : S.values()) s = std::max(s, 0.0);
    }

    bool frozen() const { return std::holds_alternative<FrozenSignal>(model_); }

private:
    const SignalModel& model_;
    std::optional<HelmholtzSolver> helmholtz_;
};

/// Called after every step with (step index, time, rho, S).
using StepObserver = std::function<void(std::size_t, double, const Field&, const Field&)>;

inline DiagnosticSample make_diagnostics(double t, const Field& rho, const Field& S, const MacroConfig& config,
                                         const StationaryReference* ref) {
    const Field psi = log_mobility_field(config.law, config.mobility.alpha, S);
    return DiagnosticSample{t, mass(rho), entropy(rho), free_energy(rho, psi),
                            ref ? weighted_l2_deviation(rho, *ref) : std::numeric_limits<double>::quiet_NaN()};
}

/// Time integration: S <- signal(rho); rho <- step(rho, S), repeated until
/// t_end (or steady_tol is met), recording snapshots and diagnostics.
inline Trajectory run(const MacroConfig& config, const Field& rho0, const StepObserver& observer = {}) {
    config.validate();
    const Grid grid = config.grid();
    if (!(rho0.grid() == grid)) throw ConfigError("initial density grid does not match config grid");
    rho0.require_positive("initial density");

    const double dt = config.time_step();
    const auto nsteps = static_cast<std::size_t>(std::llround(config.t_end / dt));

    Field rho = rho0;
    Field S(grid);
    SignalUpdater signal(grid, config.signal);
    signal.update(rho, S);

    std::optional<StationaryReference> ref;
    if (signal.frozen()) ref.emplace(StationaryReference::from_signal(config.law, config.mobility.alpha, S, mass(rho)));

    FvStepper stepper(grid, config.law, config.mobility, config.sub_cycling, config.max_subcycle_depth);
    stepper.set_signal(S.values());

    Trajectory traj;
    traj.snapshots.push_back({0.0, rho, S});
    traj.diagnostics.push_back(make_diagnostics(0.0, rho, S, config, ref ? &*ref : nullptr));

    std::vector<double> previous(grid.size());
    std::size_t n = 0;
    double t = 0.0;
    while (n < nsteps) {
        std::copy(rho.values().begin(), rho.values().end(), previous.begin());
        traj.substeps += stepper.advance(rho.values(), dt);
        ++n;
        t = static_cast<double>(n) * dt;
        if (!signal.frozen()) {
            signal.update(rho, S);
            stepper.set_signal(S.values());
        }
        double change = 0.0;
        for (std::size_t i = 0; i < grid.size(); ++i) change = std::max(change, std::abs(rho[i] - previous[i]));
        traj.steady_residual = change / dt;

        if (observer) observer(n, t, rho, S);

        if (config.snapshot_every > 0 && n % config.snapshot_every == 0) {
            traj.snapshots.push_back({t, rho, S});
        }
        if (config.diagnostic_every > 0 && n % config.diagnostic_every == 0)
            traj.diagnostics.push_back(make_diagnostics(t, rho, S, config, ref ? &*ref : nullptr));

        if (config.steady_tol > 0.0 && traj.steady_residual < config.steady_tol) break;
    }
    traj.steps = n;
    if (traj.snapshots.back().t != t) traj.snapshots.push_back({t, rho, S});
    if (traj.diagnostics.back().t != t) traj.diagnostics.push_back(make_diagnostics(t, rho, S, config, ref ? &*ref : nullptr));
    return traj;
}

inline Trajectory run(const MacroConfig& config, const StepObserver& observer = {}) {
    return run(config, config.initial.build(config.grid()), observer);
}

/// Amplitude of the Fourier mode n of rho: |(2/I) sum rho_i exp(-i k x_i)|.
inline double mode_amplitude(const Field& rho, int n) {
    const double k = 2.0 * std::numbers::pi * n / rho.grid().length();
    std::complex<double> acc{0.0, 0.0};
    for (std::size_t i = 0; i < rho.size(); ++i) acc += rho[i] * std::polar(1.0, -k * rho.grid().center(i));
    return 2.0 * std::abs(acc) / static_cast<double>(rho.size());
}

struct GrowthProbe {
    double rate;  // fitted d ln|r(k)| / dt
    std::vector<double> t;
    std::vector<double> amplitude;
};

/// Starts from rho0 = 1 + a cos(2π n x / L), tracks the mode amplitude until it
/// leaves [a/10, 10a] or t_end is reached, and fits its exponential rate.
inline GrowthProbe growth_rate_probe(MacroConfig config, int n, double a = 1e-4) {
    if (!(a > 0.0) || a > 1e-4) throw DomainError("growth_rate_probe needs 0 < a <= 1e-4");
    config.initial = InitialCondition{};
    config.initial.kind = InitialCondition::Kind::cosine;
    config.initial.mean = 1.0;
    config.initial.amplitude = a;
    config.initial.mode = n;
    config.snapshot_every = 0;
    config.diagnostic_every = 0;
    config.steady_tol = 0.0;
    config.validate();

    const Grid grid = config.grid();
    const double k = 2.0 * std::numbers::pi * n / grid.length();
    std::vector<double> cs(grid.size()), sn(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        cs[i] = std::cos(k * grid.center(i));
        sn[i] = std::sin(k * grid.center(i));
    }
    auto amplitude = [&](const Field& rho) {
        double re = 0.0, im = 0.0;
        for (std::size_t i = 0; i < rho.size(); ++i) {
            re += rho[i] * cs[i];
            im += rho[i] * sn[i];
        }
        return 2.0 * std::hypot(re, im) / static_cast<double>(rho.size());
    };

    const Field rho0 = config.initial.build(grid);
    GrowthProbe probe{0.0, {0.0}, {amplitude(rho0)}};
    const double dt = config.time_step();
    const auto nsteps = static_cast<std::size_t>(std::llround(config.t_end / dt));
    const std::size_t stride = std::max<std::size_t>(1, nsteps / 4000);

    Field rho = rho0;
    Field S(grid);
    SignalUpdater signal(grid, config.signal);
    signal.update(rho, S);
    FvStepper stepper(grid, config.law, config.mobility, config.sub_cycling, config.max_subcycle_depth);
    stepper.set_signal(S.values());
    for (std::size_t s = 1; s <= nsteps; ++s) {
        stepper.advance(rho.values(), dt);
        if (!signal.frozen()) {
            signal.update(rho, S);
            stepper.set_signal(S.values());
        }
        if (s % stride != 0) continue;
        const double amp = amplitude(rho);
        if (amp > 10.0 * a || amp < a / 10.0) break;
        probe.t.push_back(static_cast<double>(s) * dt);
        probe.amplitude.push_back(amp);
    }
    if (probe.t.size() < 10)
        throw FitWindowTooShort("mode amplitude left the linear window after " + std::to_string(probe.t.size()) +
                                " samples");
    probe.rate = -fit_rate(probe.t, probe.amplitude);
    return probe;
}

}  // namespace mechanotaxis
