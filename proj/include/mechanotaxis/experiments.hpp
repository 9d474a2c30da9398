#pragma once

#include "mechanotaxis/config.hpp"
#include "mechanotaxis/diagnostics.hpp"
#include "mechanotaxis/errors.hpp"
#include "mechanotaxis/fv_solver.hpp"
#include "mechanotaxis/kinetic.hpp"
#include "mechanotaxis/stability.hpp"
#include "mechanotaxis/steady_state.hpp"

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace mechanotaxis {

inline constexpr const char* version_string = "0.1.0";

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace detail {

inline std::ofstream open_out(const fs::path& p) {
    std::ofstream out(p);
    if (!out) throw IoError("cannot write '" + p.string() + "'");
    return out;
}

inline void close_out(std::ofstream& out, const fs::path& p) {
    out.flush();
    if (!out) throw IoError("write failed for '" + p.string() + "'");
}

/// JSON cannot carry NaN; map non-finite values to null.
inline json number(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

}  // namespace detail

inline void write_text(const fs::path& p, const std::string& text) {
    auto out = detail::open_out(p);
    out << text;
    detail::close_out(out, p);
}

inline void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

/// Long format `t,x,rho,S`.
inline void write_snapshots_csv(const fs::path& p, const std::vector<Snapshot>& snaps) {
    auto out = detail::open_out(p);
    out << "t,x,rho,S\n";
    for (const auto& s : snaps)
        for (std::size_t i = 0; i < s.rho.size(); ++i)
            out << format_real(s.t) << ',' << format_real(s.rho.grid().center(i)) << ',' << format_real(s.rho[i])
                << ',' << format_real(s.S[i]) << '\n';
    detail::close_out(out, p);
}

inline void write_diagnostics_csv(const fs::path& p, const std::vector<DiagnosticSample>& diag) {
    auto out = detail::open_out(p);
    out << "t,mass,entropy,free_energy,l2w_deviation\n";
    for (const auto& d : diag)
        out << format_real(d.t) << ',' << format_real(d.mass) << ',' << format_real(d.entropy) << ','
            << format_real(d.free_energy) << ',' << format_real(d.l2w_deviation) << '\n';
    detail::close_out(out, p);
}

inline void write_profile_csv(const fs::path& p, const std::vector<double>& x, const std::vector<double>& S,
                              const std::vector<double>& rho) {
    auto out = detail::open_out(p);
    out << "x,S,rho\n";
    for (std::size_t i = 0; i < x.size(); ++i)
        out << format_real(x[i]) << ',' << format_real(S[i]) << ',' << format_real(rho[i]) << '\n';
    detail::close_out(out, p);
}

/// Applies the snapshot/diagnostic counts when explicit step cadences are unset.
inline MacroConfig with_cadence(const ExperimentSpec& spec) {
    MacroConfig c = spec.macro;
    const auto nsteps = static_cast<std::size_t>(std::llround(c.t_end / c.time_step()));
    if (c.snapshot_every == 0) c.snapshot_every = std::max<std::size_t>(1, nsteps / spec.snapshot_count);
    if (c.diagnostic_every == 0) c.diagnostic_every = std::max<std::size_t>(1, nsteps / spec.diagnostic_count);
    return c;
}

inline json simulate_experiment(const ExperimentSpec& spec, const fs::path& out) {
    const MacroConfig c = with_cadence(spec);
    const Trajectory tr = run(c);
    write_snapshots_csv(out / "snapshots.csv", tr.snapshots);
    write_diagnostics_csv(out / "diagnostics.csv", tr.diagnostics);
    const Snapshot& fin = tr.final();
    const Grid g = c.grid();
    return json{{"cells", g.size()},
                {"dx", g.dx()},
                {"dt", c.time_step()},
                {"steps", tr.steps},
                {"substeps", tr.substeps},
                {"t_final", fin.t},
                {"mass_initial", tr.diagnostics.front().mass},
                {"mass_final", tr.diagnostics.back().mass},
                {"rho_max", fin.rho.max()},
                {"rho_min", fin.rho.min()},
                {"peaks", count_peaks(fin.rho)},
                {"entropy_final", tr.diagnostics.back().entropy},
                {"steady_residual", detail::number(tr.steady_residual)},
                {"artifacts", {"snapshots.csv", "diagnostics.csv"}}};
}

/// Three significant figures, as quoted in figure captions.
inline std::string three_sig(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%#.3g", x);
    return buf;
}

inline json stability_experiment(const ExperimentSpec& spec, const fs::path& out) {
    const double Ds = std::get<SignalParams>(spec.macro.signal).Ds;
    const auto rep = analyze_stability(spec.macro.law, spec.macro.mobility.alpha, spec.macro.mobility.D, Ds,
                                       spec.stability.S_star, spec.stability.samples, spec.stability.k_max);
    {
        const fs::path p = out / "sigma.csv";
        auto f = detail::open_out(p);
        f << "k,sigma\n";
        for (const auto& [k, s] : rep.sigma_samples) f << format_real(k) << ',' << format_real(s) << '\n';
        detail::close_out(f, p);
    }
    json j{{"gamma_alpha", rep.gamma_alpha},
           {"unstable", rep.unstable},
           {"k_c", rep.k_c ? json(*rep.k_c) : json(nullptr)},
           {"critical_wavelength", rep.critical_wavelength ? json(*rep.critical_wavelength) : json(nullptr)},
           {"critical_wavelength_3sf",
            rep.critical_wavelength ? json(three_sig(*rep.critical_wavelength)) : json(nullptr)},
           {"artifacts", {"stability.json", "sigma.csv"}}};
    write_json(out / "stability.json", j);
    return j;
}

inline json profile_json(const SteadyProfile& p) {
    return json{{"S0", p.S0},     {"rho0", p.rho0}, {"C0", p.C0},
                {"S_L", p.S_L},   {"dS", p.dS},     {"L_half", p.L_half},
                {"period", 2.0 * p.L_half}, {"M_half", p.M}};
}

inline json steady_experiment(const ExperimentSpec& spec, const fs::path& out) {
    const MacroConfig& m = spec.macro;
    const double Ds = std::get<SignalParams>(m.signal).Ds;
    const double alpha = m.mobility.alpha;
    json j;
    if (spec.steady.S0) {
        const auto p = profile(m.law, alpha, *spec.steady.S0, *spec.steady.rho0, Ds, spec.steady.dS);
        write_profile_csv(out / "profile.csv", p.x, p.S, p.rho);
        j["mode"] = "profile";
        j["profile"] = profile_json(p);
        const auto verdict = concentration_check(m.law, alpha, p.C0);
        j["concentration"] = {{"concentrating", verdict.concentrating}, {"reason", verdict.reason}};
        j["artifacts"] = {"steady.json", "profile.csv"};
    } else {
        MacroConfig c = with_cadence(spec);
        if (c.steady_tol <= 0.0) c.steady_tol = 0.5 * spec.steady.threshold;
        const Trajectory tr = run(c);
        const Snapshot& fin = tr.final();
        const auto cmp = verify_against_fv(m.law, alpha, Ds, fin.rho, fin.S, tr.steady_residual, spec.steady.dS,
                                           spec.steady.threshold);
        write_snapshots_csv(out / "fv_steady.csv", {fin});
        j["mode"] = "verify";
        j["t_final"] = fin.t;
        j["steady_residual"] = tr.steady_residual;
        j["applicable"] = cmp.applicable;
        j["S0"] = cmp.S0;
        j["rho0"] = cmp.rho0;
        std::vector<std::string> artifacts{"steady.json", "fv_steady.csv"};
        if (cmp.applicable) {
            const SteadyProfile& p = *cmp.profile;
            j["profile"] = profile_json(p);
            j["linf_S"] = cmp.linf_S;
            j["l1_S"] = cmp.l1_S;
            j["linf_rho"] = cmp.linf_rho;
            j["l1_rho"] = cmp.l1_rho;
            write_profile_csv(out / "profile.csv", p.x, p.S, p.rho);
            std::vector<double> xs(fin.S.size());
            for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = fin.S.grid().center(i);
            write_profile_csv(out / "semi_analytic.csv", xs, cmp.S_semi.data(), cmp.rho_semi.data());
            artifacts.push_back("profile.csv");
            artifacts.push_back("semi_analytic.csv");
            const auto verdict = concentration_check(m.law, alpha, p.C0);
            j["concentration"] = {{"concentrating", verdict.concentrating}, {"reason", verdict.reason}};
        }
        j["artifacts"] = artifacts;
    }
    write_json(out / "steady.json", j);
    return j;
}

/// Runs a frozen-signal macroscopic reference recording snapshots at t = 0
/// and at the nearest steps to the requested times.
inline Trajectory reference_at_times(const MacroConfig& config, const std::vector<double>& times) {
    MacroConfig c = config;
    c.snapshot_every = 0;
    c.diagnostic_every = 0;
    c.steady_tol = 0.0;
    c.t_end = times.back();
    const double dt = c.time_step();
    std::vector<std::size_t> marks;
    for (double t : times) marks.push_back(static_cast<std::size_t>(std::llround(t / dt)));
    Trajectory ref;
    std::size_t next = 0;
    const Trajectory tr = run(c, [&](std::size_t n, double t, const Field& rho, const Field& S) {
        while (next < marks.size() && n == marks[next]) {
            ref.snapshots.push_back({t, rho, S});
            ++next;
        }
    });
    ref.snapshots.insert(ref.snapshots.begin(), tr.snapshots.front());
    ref.steps = tr.steps;
    return ref;
}

inline json kinetic_experiment(const ExperimentSpec& spec, const fs::path& out) {
    const KineticOptions& ko = spec.kinetic;
    const MacroConfig& m = spec.macro;
    KineticParams base(std::get<FrozenSignal>(m.signal).S);
    base.F = ko.F;
    base.law = m.law;
    base.N = ko.particles;
    base.seed = ko.seed;
    base.threads = ko.threads;
    const double alpha = m.mobility.alpha;

    json j;
    double D_eff = 1.0;
    if (ko.calibrate) {
        const auto cal = calibrate_diffusion(base, alpha, ko.calibration_eps, ko.calibration_time, ko.dt_factor);
        D_eff = cal.D_eff;
        j["calibration"] = {{"eps", ko.calibration_eps}, {"t_macro", ko.calibration_time}, {"D_eff", D_eff}};
    }
    MacroConfig mc = m;
    mc.mobility.D = D_eff;
    const Trajectory ref = reference_at_times(mc, ko.times);
    base.total_mass = mass(ref.snapshots.front().rho);
    const Grid hist(mc.L, ko.hist_cells);
    const auto rows = limit_study(base, alpha, ko.eps, ref, hist, ko.dt_factor);
    {
        const fs::path p = out / "kinetic.csv";
        auto f = detail::open_out(p);
        f << "eps,t,l1_error\n";
        for (const auto& r : rows) f << format_real(r.eps) << ',' << format_real(r.t) << ',' << format_real(r.l1_error) << '\n';
        detail::close_out(f, p);
    }
    write_snapshots_csv(out / "macro_reference.csv", ref.snapshots);
    j["D_macro"] = D_eff;
    j["particles"] = ko.particles;
    j["noise_floor_estimate"] =
        std::sqrt(2.0 / std::numbers::pi) * std::sqrt(static_cast<double>(ko.hist_cells) / static_cast<double>(ko.particles)) *
        base.total_mass;
    j["rows"] = json::array();
    for (const auto& r : rows) j["rows"].push_back({{"eps", r.eps}, {"t", r.t}, {"l1_error", r.l1_error}});
    j["artifacts"] = {"kinetic.json", "kinetic.csv", "macro_reference.csv"};
    write_json(out / "kinetic.json", j);
    return j;
}

inline json sweep_experiment(const ExperimentSpec& spec, const fs::path& out);

inline json manifest_for(const ExperimentSpec& spec, double wall_seconds, const json& summary) {
    return json{{"name", spec.name},
                {"command", kind_name(spec.kind)},
                {"preset", spec.preset},
                {"version", version_string},
                {"seeds", {{"initial", spec.macro.initial.seed}, {"kinetic", spec.kinetic.seed}}},
                {"wall_time_s", wall_seconds},
                {"config", spec.settings},
                {"summary", summary}};
}

/// Runs one experiment into `out` (created if needed) and writes its manifest
/// plus a re-runnable resolved config.
inline json run_experiment(const ExperimentSpec& spec, const fs::path& out) {
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw IoError("cannot create output directory '" + out.string() + "': " + ec.message());
    const auto t0 = std::chrono::steady_clock::now();
    json summary;
    auto finish = [&] {
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        write_json(out / "manifest.json", manifest_for(spec, wall, summary));
        write_text(out / "config.resolved", to_config_text(spec.settings));
    };
    switch (spec.kind) {
        case ExperimentKind::simulate: summary = simulate_experiment(spec, out); break;
        case ExperimentKind::stability: summary = stability_experiment(spec, out); break;
        case ExperimentKind::steady_state: summary = steady_experiment(spec, out); break;
        case ExperimentKind::kinetic: summary = kinetic_experiment(spec, out); break;
        case ExperimentKind::sweep:
            try {
                summary = sweep_experiment(spec, out);
            } catch (const Error&) {
                summary = {{"status", "partial failure"}};
                finish();
                throw;
            }
            break;
    }
    finish();
    return summary;
}

/// Raised after a sweep finished with at least one failed point; sweep.json
/// lists every point with its status.
struct SweepFailure : Error {
    using Error::Error;
};

inline json sweep_experiment(const ExperimentSpec& spec, const fs::path& out) {
    const auto& values = spec.sweep.values;
    std::vector<json> results(values.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < values.size(); i = next++) {
            Settings s = spec.settings;
            s[spec.sweep.key] = values[i];
            const std::string point = spec.sweep.key + "=" + values[i];
            s["name"] = spec.name + "/" + point;
            json r{{"point", point}, {"value", values[i]}};
            try {
                const ExperimentSpec sub = build_spec(s, spec.sweep.command);
                r["summary"] = run_experiment(sub, out / point);
                r["status"] = "ok";
            } catch (const std::exception& e) {
                r["status"] = "failed";
                r["error"] = e.what();
            }
            results[i] = std::move(r);
        }
    };
    unsigned n = spec.sweep.threads ? spec.sweep.threads : std::max(1u, std::thread::hardware_concurrency());
    n = static_cast<unsigned>(std::min<std::size_t>(n, values.size()));
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    json j{{"key", spec.sweep.key}, {"command", kind_name(spec.sweep.command)}, {"points", results}};
    std::vector<std::string> failed;
    for (const auto& r : results)
        if (r["status"] != "ok") failed.push_back(r["point"].get<std::string>());
    j["failed"] = failed;
    write_json(out / "sweep.json", j);
    if (!failed.empty()) {
        std::string msg = "sweep: " + std::to_string(failed.size()) + " of " + std::to_string(values.size()) +
                          " points failed:";
        for (const auto& f : failed) msg += " " + f;
        throw SweepFailure(msg);
    }
    return j;
}

}  // namespace mechanotaxis
