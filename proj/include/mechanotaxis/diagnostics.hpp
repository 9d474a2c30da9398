#pragma once

#include "mechanotaxis/errors.hpp"
#include "mechanotaxis/grid.hpp"
#include "mechanotaxis/velocity_law.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

namespace mechanotaxis {

inline double mass(const Field& rho) { return integrate(rho); }

/// (1/L) ∫ rho ln rho dx
inline double entropy(const Field& rho) {
    rho.require_positive("entropy: density");
    double acc = 0.0;
    for (std::size_t i = 0; i < rho.size(); ++i) acc += rho[i] * std::log(rho[i]);
    return acc * rho.grid().dx() / rho.grid().length();
}

/// ∫ rho (ln rho + psi) dx
inline double free_energy(const Field& rho, const Field& psi) {
    rho.require_positive("free_energy: density");
    double acc = 0.0;
    for (std::size_t i = 0; i < rho.size(); ++i) acc += rho[i] * (std::log(rho[i]) + psi[i]);
    return acc * rho.grid().dx();
}

/// psi(x) = ln(alpha v(S(x))^2 + v(S(x))) for a frozen signal.
inline Field log_mobility_field(const VelocityLaw& law, double alpha, const Field& S) {
    Field psi(S.grid());
    for (std::size_t i = 0; i < S.size(); ++i) psi[i] = log_mobility(law, alpha, S[i]);
    return psi;
}

/// Minimizer of the free energy at fixed mass: rho_inf = (M/Z) exp(-psi).
struct StationaryReference {
    Field psi;
    double Z;
    double M;
    Field rho_inf;

    StationaryReference(Field psi_in, double total_mass)
        : psi(std::move(psi_in)), Z(0.0), M(total_mass), rho_inf(psi.grid()) {
        if (!(total_mass > 0.0)) throw DomainError("stationary reference needs positive mass");
        Field w(psi.grid());
        for (std::size_t i = 0; i < psi.size(); ++i) w[i] = std::exp(-psi[i]);
        Z = integrate(w);
        for (std::size_t i = 0; i < psi.size(); ++i) rho_inf[i] = M / Z * w[i];
    }

    static StationaryReference from_signal(const VelocityLaw& law, double alpha, const Field& S, double total_mass) {
        return StationaryReference(log_mobility_field(law, alpha, S), total_mass);
    }

    /// The lower bound M ln(M/Z) of the free energy.
    double minimum_free_energy() const { return M * std::log(M / Z); }
};

/// D(nu|pi) with nu = rho/M and pi = rho_inf/M.
inline double relative_entropy(const Field& rho, const Field& rho_inf) {
    rho.require_positive("relative_entropy: density");
    rho_inf.require_positive("relative_entropy: reference");
    const double M = integrate(rho);
    const double Minf = integrate(rho_inf);
    double acc = 0.0;
    for (std::size_t i = 0; i < rho.size(); ++i) {
        const double nu = rho[i] / M, pi = rho_inf[i] / Minf;
        acc += nu * std::log(nu / pi);
    }
    return acc * rho.grid().dx();
}

/// ||rho/rho_inf - 1||^2 in L^2(rho_inf dx).
inline double weighted_l2_deviation(const Field& rho, const StationaryReference& ref) {
    double acc = 0.0;
    for (std::size_t i = 0; i < rho.size(); ++i) {
        const double u = rho[i] / ref.rho_inf[i] - 1.0;
        acc += u * u * ref.rho_inf[i];
    }
    return acc * rho.grid().dx();
}

inline double l1_distance(const Field& a, const Field& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
    return acc * a.grid().dx();
}

/// Periodic Poincaré constant (L / 2π)^2 for zero-mean functions.
inline double periodic_poincare_constant(double L) {
    const double r = L / (2.0 * std::numbers::pi);
    return r * r;
}

/// Guaranteed exponential decay rate of ||rho/rho_inf - 1||^2 for a frozen
/// signal with v_min <= v <= v_max.
struct DecayBound {
    double v_min;
    double v_max;
    double alpha;
    double D;
    double poincare_C;
    double rate;

    static DecayBound make(double v_min, double v_max, double alpha, double D, double poincare_C) {
        if (!(v_min > 0.0) || v_max < v_min) throw DomainError("decay bound needs 0 < v_min <= v_max");
        const double wmin = alpha * v_min * v_min + v_min;
        const double wmax = alpha * v_max * v_max + v_max;
        const double rate = 2.0 * D * v_min * v_min * wmin * wmin / (wmax * wmax * poincare_C);
        return DecayBound{v_min, v_max, alpha, D, poincare_C, rate};
    }
};

inline DecayBound decay_bound(const VelocityLaw& law, double alpha, double D, const Field& S, double poincare_C) {
    double vmin = velocity(law, S[0]), vmax = vmin;
    for (std::size_t i = 1; i < S.size(); ++i) {
        const double v = velocity(law, S[i]);
        vmin = std::min(vmin, v);
        vmax = std::max(vmax, v);
    }
    return DecayBound::make(vmin, vmax, alpha, D, poincare_C);
}

/// Least-squares decay rate: -slope of ln(value) against t.
inline double fit_rate(std::span<const double> t, std::span<const double> value) {
    if (t.size() != value.size()) throw DomainError("fit_rate: series lengths differ");
    if (t.size() < 10) throw InsufficientSamples("fit_rate needs at least 10 samples");
    const double n = static_cast<double>(t.size());
    double st = 0, sy = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!(value[i] > 0.0)) throw DomainError("fit_rate: values must be positive");
        st += t[i];
        sy += std::log(value[i]);
    }
    const double tm = st / n, ym = sy / n;
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double dt = t[i] - tm;
        sxy += dt * (std::log(value[i]) - ym);
        sxx += dt * dt;
    }
    if (sxx == 0.0) throw InsufficientSamples("fit_rate: all samples at the same time");
    return -sxy / sxx;
}

/// Periodic local maxima of f rising above mean + threshold * (max - mean).
inline std::size_t count_peaks(const Field& f, double threshold = 0.2) {
    const double mean = integrate(f) / f.grid().length();
    const double level = mean + threshold * (f.max() - mean);
    if (f.max() - mean <= 1e-12 * std::max(1.0, std::abs(mean))) return 0;
    // walk from the global minimum so plateaus and wrap-around are handled
    const auto n = static_cast<std::ptrdiff_t>(f.size());
    const auto start = static_cast<std::ptrdiff_t>(f.argmin());
    std::size_t peaks = 0;
    bool above = false;
    for (std::ptrdiff_t k = 0; k <= n; ++k) {
        const double v = f.at(start + k);
        if (!above && v > level) {
            above = true;
            ++peaks;
        } else if (above && v < mean) {
            above = false;
        }
    }
    return peaks;
}

/// A stretch of a time series that stays inside a narrow band.
struct Plateau {
    double t_begin;
    double t_end;
    double level;  // mean of the samples inside
};

/// Maximal windows of at least min_duration whose spread stays within
/// band * (max - min of the whole series). Neighbouring windows whose levels
/// lie within the band of each other are merged, so a short excursion that
/// returns to the same level does not count as a new plateau.
inline std::vector<Plateau> find_plateaus(std::span<const double> t, std::span<const double> value, double min_duration,
                                          double band = 0.05) {
    if (t.size() != value.size()) throw DomainError("find_plateaus: time and value sizes differ");
    if (!(min_duration > 0.0) || !(band > 0.0)) throw DomainError("find_plateaus: duration and band must be > 0");
    std::vector<Plateau> out;
    if (t.empty()) return out;
    const auto [lo_it, hi_it] = std::minmax_element(value.begin(), value.end());
    const double width = band * (*hi_it - *lo_it);

    std::size_t i = 0;
    while (i < t.size()) {
        double lo = value[i], hi = value[i], sum = value[i];
        std::size_t j = i + 1;
        for (; j < t.size(); ++j) {
            const double v = value[j];
            if (std::max(hi, v) - std::min(lo, v) > width) break;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
            sum += v;
        }
        if (t[j - 1] - t[i] >= min_duration) {
            const Plateau p{t[i], t[j - 1], sum / static_cast<double>(j - i)};
            if (!out.empty() && std::abs(out.back().level - p.level) <= width) {
                auto& q = out.back();
                const double wq = q.t_end - q.t_begin, wp = p.t_end - p.t_begin;
                q.level = (q.level * wq + p.level * wp) / std::max(wq + wp, 1e-300);
                q.t_end = p.t_end;
            } else {
                out.push_back(p);
            }
            i = j;
        } else {
            ++i;
        }
    }
    return out;
}

inline double fit_rate(const std::vector<std::pair<double, double>>& series) {
    std::vector<double> t, v;
    t.reserve(series.size());
    v.reserve(series.size());
    for (const auto& [a, b] : series) {
        t.push_back(a);
        v.push_back(b);
    }
    return fit_rate(t, v);
}

}  // namespace mechanotaxis
