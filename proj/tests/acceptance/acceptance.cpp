// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
// failure. Criteria can be selected by number on the command line.

#include "mechanotaxis.hpp"
#include "mechanotaxis/config.hpp"
#include "mechanotaxis/experiments.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace mt = mechanotaxis;
namespace fs = std::filesystem;
using mt::Field;
using mt::Grid;
using mt::MacroConfig;
using mt::VelocityLaw;

namespace {

/// Collects checks of one criterion; any failed check fails the criterion.
class Report {
public:
    void check(bool ok, const std::string& what) {
        if (!ok) failed_ = true;
        lines_.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
    }
    void note(const std::string& what) { lines_.push_back("     " + what); }
    bool passed() const { return !failed_; }
    const std::vector<std::string>& lines() const { return lines_; }

private:
    bool failed_ = false;
    std::vector<std::string> lines_;
};

std::string fmt(const char* f, double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

std::string sci(double x) { return fmt("%.3e", x); }

fs::path scratch_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("mechanotaxis_acceptance_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

mt::ExperimentSpec preset_spec(const std::string& preset, mt::ExperimentKind kind, const mt::Settings& extra = {}) {
    mt::Settings user = extra;
    user["preset"] = preset;
    return mt::build_spec(mt::resolve_settings(user), kind);
}

MacroConfig frozen_config(const Field& S, const VelocityLaw& law, double alpha) {
    MacroConfig c;
    c.L = S.grid().length();
    c.cells = S.size();
    c.law = law;
    c.mobility = {alpha, 1.0};
    c.signal = mt::FrozenSignal{S};
    return c;
}

Field lognormal_field(const Grid& g, std::uint64_t seed, double spread) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, spread);
    Field f(g);
    for (auto& v : f.values()) v = std::exp(n(rng));
    return f;
}

/// Rounds to n significant figures and prints them all.
std::string sig(double x, int n) {
    const int mag = static_cast<int>(std::floor(std::log10(std::abs(x))));
    const int decimals = std::max(0, n - 1 - mag);
    return fmt(("%." + std::to_string(decimals) + "f").c_str(), x);
}

// 1. Critical wavelengths quoted in the figure captions.
void critical_wavelengths(Report& r) {
    struct Anchor {
        VelocityLaw law;
        double alpha, Ds;
        std::string quoted;
    };
    const std::vector<Anchor> anchors{
        {VelocityLaw::rational(2, 2), 1.0, 0.01, "0.770"},
        {VelocityLaw::rational(2, 2), 1.0, 0.0025, "0.385"},
        {VelocityLaw::rational(2, 2), 1.0, 0.000625, "0.192"},
        {VelocityLaw::sigmoid(0.02, 0.01), 0.0, 0.001, "0.20"},
        {VelocityLaw::sigmoid(0.012, 0.01), 0.0, 0.001, "0.44"},
    };
    for (const auto& a : anchors) {
        const auto rep = mt::analyze_stability(a.law, a.alpha, 1.0, a.Ds);
        if (!rep.critical_wavelength) {
            r.check(false, "Ds=" + fmt("%g", a.Ds) + ": no unstable band");
            continue;
        }
        // compare at the precision the caption quotes
        const int figures = static_cast<int>(a.quoted.size()) - 2;
        const std::string got = sig(*rep.critical_wavelength, figures);
        r.check(got == a.quoted, "Ds=" + fmt("%g", a.Ds) + " " + a.law.name() + ": 2pi/k_c = " +
                                     fmt("%.5f", *rep.critical_wavelength) + " -> " + got + " (quoted " + a.quoted + ")");
    }
}

// 2. Linear growth and decay rates against the dispersion relation.
void dispersion(Report& r) {
    auto c = preset_spec("fig2a", mt::ExperimentKind::simulate).macro;
    const auto law = VelocityLaw::rational(2, 2);
    for (auto [n, t_end] : {std::pair{1, 2.0}, {2, 0.3}}) {
        c.t_end = t_end;
        const auto probe = mt::growth_rate_probe(c, n);
        const double s = mt::sigma(2.0 * std::numbers::pi * n, law, 1.0, 1.0, 0.01);
        const double rel = std::abs(probe.rate - s) / std::abs(s);
        r.check(rel <= 0.10 && (probe.rate > 0) == (s > 0),
                "n=" + std::to_string(n) + ": measured " + fmt("%.4f", probe.rate) + ", sigma " + fmt("%.4f", s) +
                    ", rel. diff " + fmt("%.2f%%", 100 * rel));
    }
}

// 3. Mass conservation, well-balancedness and positivity.
void invariants(Report& r) {
    {
        auto c = preset_spec("fig2a", mt::ExperimentKind::simulate).macro;
        c.sub_cycling = false;
        c.t_end = 1e5 * c.time_step();
        const double m0 = mt::mass(c.initial.build(c.grid()));
        double drift = 0.0, min_rho = 1e300;
        const auto tr = mt::run(c, [&](std::size_t, double, const Field& rho, const Field&) {
            drift = std::max(drift, std::abs(mt::mass(rho) - m0) / m0);
            min_rho = std::min(min_rho, rho.min());
        });
        r.check(tr.steps == 100000 && drift <= 1e-12,
                "coupled fig2a run, " + std::to_string(tr.steps) + " steps: max relative mass drift " + sci(drift));
        r.check(min_rho > 0.0, "same run without sub-cycling at the default time step: min rho " + sci(min_rho));
    }
    {
        const Grid g(1.0, 120);
        const auto law = VelocityLaw::rational(2, 2);
        const Field S = Field::sample(g, [](double x) { return 1.0 + 0.6 * std::cos(2 * std::numbers::pi * x); });
        Field rho(g);
        for (std::size_t i = 0; i < g.size(); ++i) rho[i] = 0.7 / mt::mobility_weight(law, 1.0, S[i]);
        auto c = frozen_config(S, law, 1.0);
        c.t_end = 1000 * c.time_step();
        const auto tr = mt::run(c, rho);
        double worst = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i)
            worst = std::max(worst, std::abs(tr.final().rho[i] - rho[i]) / rho[i]);
        r.check(worst <= 1e-13, "frozen well-balanced state after 1000 steps: max relative change " + sci(worst));

        const Field uniform(g, 1.3);
        auto cu = preset_spec("fig2a", mt::ExperimentKind::simulate).macro;
        cu.cells = g.size();
        cu.t_end = 1000 * cu.time_step();
        const auto tu = mt::run(cu, uniform);
        r.check(tu.final().rho == uniform, "coupled uniform state after 1000 steps: bitwise unchanged");
    }
    {
        const Grid g(1.0, 64);
        const auto law = VelocityLaw::rational(2, 2);
        std::size_t steps = 0;
        double min_rho = 1e300;
        for (std::uint64_t trial = 0; trial < 50; ++trial) {
            const Field S = lognormal_field(g, 1000 + trial, 0.5);
            Field rho = lognormal_field(g, trial, 1.5);
            auto c = frozen_config(S, law, 1.0);
            c.sub_cycling = false;
            for (int s = 0; s < 200; ++s) {
                const auto phi = mt::edge_potential(rho, S, law, 1.0);
                double out = 0.0;
                for (std::size_t i = 0; i < g.size(); ++i)
                    out = std::max(out, std::max(phi[i], 0.0) + std::max(-phi[(i + 1) % g.size()], 0.0));
                c.dt = 0.95 * g.dx() / out;
                rho = mt::step(rho, S, c);
                min_rho = std::min(min_rho, rho.min());
                ++steps;
            }
        }
        r.check(min_rho > 0.0, std::to_string(steps) + " steps on random data at 0.95 of the positivity bound: min rho " +
                                   sci(min_rho));
    }
}

struct FrozenRun {
    Field S;
    MacroConfig config;
    mt::Trajectory traj;
};

FrozenRun frozen_relaxation(double t_end) {
    const Grid g(1.0, 100);
    const auto law = VelocityLaw::rational(2, 2);
    Field S = Field::sample(g, [](double x) {
        return 1.0 + 0.5 * std::cos(2 * std::numbers::pi * x) + 0.2 * std::sin(6 * std::numbers::pi * x);
    });
    auto c = frozen_config(S, law, 1.0);
    c.t_end = t_end;
    c.diagnostic_every = 1;
    auto tr = mt::run(c, lognormal_field(g, 42, 0.5));
    return {std::move(S), c, std::move(tr)};
}

// 4. Free energy is a Lyapunov functional for a frozen signal.
void free_energy(Report& r) {
    const auto run = frozen_relaxation(4.0);
    const auto ref = mt::StationaryReference::from_signal(run.config.law, 1.0, run.S, run.traj.diagnostics[0].mass);
    const double Emin = ref.minimum_free_energy();
    std::size_t increases = 0;
    double below = 0.0;
    for (std::size_t k = 0; k < run.traj.diagnostics.size(); ++k) {
        const double e = run.traj.diagnostics[k].free_energy;
        if (k) {
            const double prev = run.traj.diagnostics[k - 1].free_energy;
            if (e > prev + 1e-12 * std::abs(prev)) ++increases;
        }
        below = std::max(below, Emin - e);
    }
    r.check(increases == 0, std::to_string(run.traj.diagnostics.size() - 1) + " steps, free-energy increases: " +
                                std::to_string(increases));
    r.check(below <= 1e-10, "E - M ln(M/Z) >= " + sci(-below) + " (lower bound " + fmt("%.6f", Emin) + ")");
    const double dist = mt::max_abs_difference(run.traj.final().rho, ref.rho_inf);
    r.check(dist <= 1e-6, "terminal L-inf distance to rho_inf at t=4: " + sci(dist));
}

// 5. Exponential convergence at least as fast as the proven rate.
void exponential_convergence(Report& r) {
    const auto run = frozen_relaxation(2.0);
    std::vector<double> t, dev;
    const double d0 = run.traj.diagnostics[0].l2w_deviation;
    for (const auto& d : run.traj.diagnostics) {
        if (d.t > 0.0 && d.l2w_deviation < 1e-2 * d0 && d.l2w_deviation > 1e-20) {
            t.push_back(d.t);
            dev.push_back(d.l2w_deviation);
        }
    }
    if (t.size() < 10) {
        r.check(false, "too few samples in the fit window");
        return;
    }
    const double rate = mt::fit_rate(t, dev);
    const auto bound = mt::decay_bound(run.config.law, 1.0, 1.0, run.S, mt::periodic_poincare_constant(1.0));
    r.check(rate >= bound.rate, "fitted rate " + fmt("%.4f", rate) + " vs bound " + fmt("%.4f", bound.rate) +
                                    ", ratio " + fmt("%.2f", rate / bound.rate));
}

// 6. Finite-volume steady state against the semi-analytic profile.
void steady_state(Report& r) {
    const auto spec = preset_spec("fig3", mt::ExperimentKind::steady_state);
    const auto j = mt::steady_experiment(spec, scratch_dir("steady"));
    if (!j.value("applicable", false)) {
        r.check(false, "FV state is not patterned");
        return;
    }
    const double linf = j["linf_S"].get<double>();
    r.check(linf <= 0.02, "fig2a parameters: relative L-inf difference in S " + sci(linf) + " (t=" +
                              fmt("%.1f", j["t_final"].get<double>()) + ", residual " +
                              sci(j["steady_residual"].get<double>()) + ")");
    r.note("L1 in S " + sci(j["l1_S"].get<double>()) + ", L-inf in rho " + sci(j["linf_rho"].get<double>()));
}

// 7. Closed-form first integral against adaptive quadrature.
void closed_form(Report& r) {
    const auto law = VelocityLaw::rational(2, 2);
    double worst_I = 0.0, worst_f = 0.0;
    for (double alpha : {0.0, 0.5, 1.0, 10.0}) {
        for (double S0 : {0.2, 0.5, 1.0, 2.0}) {
            const double rho0 = 0.6 * S0;
            const double C0 = rho0 * mt::mobility_weight(law, alpha, S0);
            for (int k = 1; k <= 40; ++k) {
                const double S = S0 * (1.0 + 4.0 * k / 40.0);
                const double I_cf = mt::inverse_mobility_integral(law, alpha, S0, S);
                double err = 0.0;
                const double I_q = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
                    [&](double s) { return 1.0 / (alpha * std::pow(1.0 / (1.0 + 2.0 * s * s), 2) + 1.0 / (1.0 + 2.0 * s * s)); },
                    S0, S, 20, 1e-14, &err);
                worst_I = std::max(worst_I, std::abs(I_cf - I_q) / I_q);
                const double f_cf = mt::eval_f(law, alpha, S0, rho0, S);
                const double f_q = S * S - S0 * S0 - 2.0 * C0 * I_q;
                worst_f = std::max(worst_f, std::abs(f_cf - f_q) / (S * S + S0 * S0 + 2.0 * C0 * I_q));
            }
        }
    }
    r.check(worst_I <= 1e-9, "integral of 1/(alpha v^2 + v), alpha in {0, .5, 1, 10}, S in [S0, 5 S0]: max rel. diff " +
                                 sci(worst_I));
    r.check(worst_f <= 1e-9, "f(S) relative to the size of its terms: max rel. diff " + sci(worst_f));
}

struct PatternRun {
    mt::Trajectory traj;
    std::vector<double> t, entropy;
};

PatternRun pattern_run(const std::string& preset) {
    const auto spec = preset_spec(preset, mt::ExperimentKind::simulate);
    PatternRun p{mt::run(mt::with_cadence(spec)), {}, {}};
    for (const auto& d : p.traj.diagnostics) {
        p.t.push_back(d.t);
        p.entropy.push_back(d.entropy);
    }
    return p;
}

std::string peak_history(const mt::Trajectory& tr) {
    std::ostringstream os;
    std::size_t last = static_cast<std::size_t>(-1);
    for (const auto& s : tr.snapshots) {
        const auto n = mt::count_peaks(s.rho);
        if (n != last) {
            os << (last == static_cast<std::size_t>(-1) ? "" : " -> ") << n << "@t=" << fmt("%.2f", s.t);
            last = n;
        }
    }
    return os.str();
}

// 8. Qualitative regimes of the figures.
void regimes(Report& r) {
    double previous = 0.0;
    for (const std::string p : {"fig2a", "fig2b", "fig2c"}) {
        const auto run = pattern_run(p);
        const Field& rho = run.traj.final().rho;
        const auto peaks = mt::count_peaks(rho);
        r.check(peaks == 1 && rho.max() > previous,
                "(a) " + p + ": terminal peaks " + std::to_string(peaks) + ", peak height " + fmt("%.3f", rho.max()) +
                    " at t=" + fmt("%.0f", run.traj.final().t));
        r.note("    peak count history " + peak_history(run.traj));
        previous = rho.max();
    }

    {
        const auto run = pattern_run("fig4");
        const auto plateaus = mt::find_plateaus(run.t, run.entropy, 1.0);
        bool abrupt = plateaus.size() >= 2;
        std::ostringstream os;
        for (std::size_t k = 0; k < plateaus.size(); ++k) {
            const auto& q = plateaus[k];
            os << (k ? ", " : "") << "[" << fmt("%.2f", q.t_begin) << ", " << fmt("%.2f", q.t_end) << "] E=" << sci(q.level);
            if (k) {
                const double gap = q.t_begin - plateaus[k - 1].t_end;
                const double shorter = std::min(q.t_end - q.t_begin, plateaus[k - 1].t_end - plateaus[k - 1].t_begin);
                if (gap > 0.25 * shorter) abrupt = false;
            }
        }
        r.check(plateaus.size() >= 2 && abrupt, "(b) fig4: " + std::to_string(plateaus.size()) +
                                                    " entropy plateaus with abrupt transitions: " + os.str());
        r.note("    peak count history " + peak_history(run.traj));
    }

    {
        const auto run = pattern_run("fig5");
        // the pattern grows during t < 1 and must then stay put until t = 100
        std::vector<double> t, e;
        for (std::size_t k = 0; k < run.t.size(); ++k)
            if (run.t[k] >= 1.0) {
                t.push_back(run.t[k]);
                e.push_back(run.entropy[k]);
            }
        const double spread = *std::max_element(e.begin(), e.end()) - *std::min_element(e.begin(), e.end());
        const double level = e.back();
        std::set<std::size_t> counts;
        for (const auto& s : run.traj.snapshots)
            if (s.t >= 1.0) counts.insert(mt::count_peaks(s.rho));
        const bool periodic = counts.size() == 1 && *counts.begin() >= 1;
        r.check(periodic && spread <= 0.05 * level && run.traj.final().t >= 100.0 - 1e-9,
                "(c) fig5: peak counts for t >= 1 " + std::to_string(counts.size() == 1 ? *counts.begin() : 0) +
                    (counts.size() == 1 ? " throughout" : " (changes)") + ", entropy spread " +
                    fmt("%.2f%%", 100.0 * spread / level) + " of its level up to t=" +
                    fmt("%.0f", run.traj.final().t));
        r.note("    peak count history " + peak_history(run.traj) + ", terminal amplitude " +
               fmt("%.4f", run.traj.final().rho.max() - 1.0));
    }
}

// 9. Particle model converges to the macroscopic limit as eps -> 0.
void kinetic_limit(Report& r) {
    mt::Settings s{{"grid.cells", "200"},           {"mobility.alpha", "1"},         {"signal.frozen", "cosine"},
                   {"signal.frozen_mean", "1"},     {"signal.frozen_amplitude", "0.5"}, {"initial.kind", "cosine"},
                   {"initial.amplitude", "0.5"},    {"initial.mode", "1"},          {"kinetic.particles", "1000000"},
                   {"kinetic.eps", "0.2, 0.1, 0.05"}, {"kinetic.times", "0.05, 0.1, 0.2"}, {"kinetic.hist_cells", "50"}};
    const auto spec = mt::build_spec(mt::resolve_settings(s), mt::ExperimentKind::kinetic);
    const auto j = mt::kinetic_experiment(spec, scratch_dir("kinetic"));
    r.note("calibrated D_eff " + fmt("%.5f", j["calibration"]["D_eff"].get<double>()) + ", sampling noise ~" +
           sci(j["noise_floor_estimate"].get<double>()));
    std::map<double, std::vector<std::pair<double, double>>> by_time;  // t -> (eps, error)
    for (const auto& row : j["rows"]) by_time[row["t"].get<double>()].emplace_back(row["eps"], row["l1_error"]);
    for (auto& [t, rows] : by_time) {
        std::sort(rows.begin(), rows.end(), [](auto a, auto b) { return a.first > b.first; });
        bool monotone = true;
        std::ostringstream os;
        for (std::size_t k = 0; k < rows.size(); ++k) {
            os << (k ? " > " : "") << sci(rows[k].second) << " (eps " << fmt("%g", rows[k].first) << ")";
            if (k && !(rows[k].second < rows[k - 1].second)) monotone = false;
        }
        r.check(monotone, "t=" + fmt("%g", t) + ": L1 " + os.str());
    }
}

// 10. Dirac concentration classifier.
void classifier(Report& r) {
    const auto rat = mt::concentration_check(VelocityLaw::rational(2, 2), 1.0, 0.1);
    r.check(rat.concentrating, "rational p=2: concentrating (" + rat.reason + ")");
    const auto sig = mt::concentration_check(VelocityLaw::sigmoid(0.02, 0.01), 0.0, 0.1);
    r.check(!sig.concentrating, "sigmoid: not concentrating (" + sig.reason + ")");
    const auto above = mt::concentration_check(VelocityLaw::rational(1, 2), 1.0, 0.6);
    const auto below = mt::concentration_check(VelocityLaw::rational(1, 2), 1.0, 0.4);
    r.check(above.concentrating && !below.concentrating && above.reason.find("C0*q > 1") != std::string::npos,
            "rational p=1, q=2: C0=0.6 concentrating, C0=0.4 not (" + below.reason + ")");
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<void(Report&)>>> criteria{
        {"critical wavelengths", critical_wavelengths},
        {"dispersion sharpness", dispersion},
        {"structural invariants", invariants},
        {"free-energy structure", free_energy},
        {"exponential convergence", exponential_convergence},
        {"steady-state cross-validation", steady_state},
        {"closed-form first integral", closed_form},
        {"qualitative regimes", regimes},
        {"kinetic limit", kinetic_limit},
        {"concentration classifier", classifier},
    };
    std::set<std::size_t> selected;
    for (int i = 1; i < argc; ++i) selected.insert(static_cast<std::size_t>(std::atoi(argv[i])));

    int failures = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        const std::size_t id = k + 1;
        if (!selected.empty() && !selected.count(id)) continue;
        Report rep;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            criteria[k].second(rep);
        } catch (const std::exception& e) {
            rep.check(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        for (const auto& line : rep.lines()) std::cout << "    " << line << "\n";
        std::cout << (rep.passed() ? "PASS" : "FAIL") << "  criterion " << id << ": " << criteria[k].first << " ("
                  << fmt("%.1f", secs) << " s)\n"
                  << std::flush;
        if (!rep.passed()) ++failures;
    }
    std::cout << (failures ? "FAILED: " + std::to_string(failures) + " criteria" : std::string("ALL CRITERIA PASSED"))
              << "\n";
    return failures ? 1 : 0;
}
