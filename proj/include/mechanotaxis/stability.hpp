#pragma once

#include "mechanotaxis/signal.hpp"
#include "mechanotaxis/velocity_law.hpp"

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <utility>
#include <vector>

namespace mechanotaxis {

/// gamma_alpha = S* v'(S*) (2 alpha v(S*) + 1) / (v(S*) (alpha v(S*) + 1)) at
/// the uniform state rho = S = S*. The leading S* is rho* from linearizing
/// rho d_x ln(rho w(S)); it is 1 at the unit state used in the figures.
inline double gamma_alpha(const VelocityLaw& law, double alpha, double S_star = 1.0) {
    if (!(S_star > 0.0)) throw DomainError("gamma_alpha needs a positive reference state");
    const double v = velocity(law, S_star);
    const double dv = velocity_derivative(law, S_star);
    return S_star * dv * (2.0 * alpha * v + 1.0) / (v * (alpha * v + 1.0));
}

/// Linear growth rate around (rho, S) = (S*, S*) with the elliptic kernel:
/// -D v^2 k^2 (1 + gamma + Ds k^2) / (1 + Ds k^2).
inline double sigma(double k, const VelocityLaw& law, double alpha, double D, double Ds, double S_star = 1.0) {
    const double v = velocity(law, S_star);
    const double g = gamma_alpha(law, alpha, S_star);
    const double k2 = k * k;
    return -D * v * v * k2 * (1.0 + g + Ds * k2) / (1.0 + Ds * k2);
}

/// Growth rate for an arbitrary kernel symbol K(k): -D v^2 k^2 (1 + gamma K(k)).
inline double sigma_kernel(double k, const VelocityLaw& law, double alpha, double D,
                           const std::function<double(double)>& kernel_symbol, double S_star = 1.0) {
    const double v = velocity(law, S_star);
    return -D * v * v * k * k * (1.0 + gamma_alpha(law, alpha, S_star) * kernel_symbol(k));
}

/// Upper edge of the unstable band 0 < k < k_c; none when gamma >= -1.
inline std::optional<double> critical_wavenumber(const VelocityLaw& law, double alpha, double Ds, double S_star = 1.0) {
    if (!(Ds > 0.0)) throw DomainError("critical_wavenumber needs Ds > 0");
    const double g = gamma_alpha(law, alpha, S_star);
    if (g >= -1.0) return std::nullopt;
    return std::sqrt(-(g + 1.0) / Ds);
}

struct StabilityReport {
    double gamma_alpha;
    bool unstable;
    std::optional<double> k_c;
    std::optional<double> critical_wavelength;
    std::vector<std::pair<double, double>> sigma_samples;  // (k, sigma(k))
};

/// Samples sigma on (0, k_max]; k_max defaults to 3 k_c (or 100 when stable).
inline StabilityReport analyze_stability(const VelocityLaw& law, double alpha, double D, double Ds,
                                         double S_star = 1.0, std::size_t samples = 200, double k_max = 0.0) {
    StabilityReport r{};
    r.gamma_alpha = gamma_alpha(law, alpha, S_star);
    r.k_c = critical_wavenumber(law, alpha, Ds, S_star);
    r.unstable = r.k_c.has_value();
    if (r.k_c) r.critical_wavelength = 2.0 * std::numbers::pi / *r.k_c;
    if (k_max <= 0.0) k_max = r.k_c ? 3.0 * *r.k_c : 100.0;
    const SignalParams sp{Ds};
    r.sigma_samples.reserve(samples);
    for (std::size_t i = 1; i <= samples; ++i) {
        const double k = k_max * static_cast<double>(i) / static_cast<double>(samples);
        const double s = sigma_kernel(k, law, alpha, D, [&](double kk) { return fourier_symbol(sp, kk); }, S_star);
        r.sigma_samples.emplace_back(k, s);
    }
    return r;
}

}  // namespace mechanotaxis
