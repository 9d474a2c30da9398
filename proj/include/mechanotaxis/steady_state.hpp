#pragma once

#include "mechanotaxis/errors.hpp"
#include "mechanotaxis/grid.hpp"
#include "mechanotaxis/velocity_law.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

namespace mechanotaxis {

/// First integral of the 1D steady problem, D_s (S_x)^2 = f(S), anchored at a
/// minimum of the signal (S0, rho0):
///   f(S) = S^2 - S0^2 - 2 C0 ∫_{S0}^{S} ds / (alpha v^2 + v),  C0 = rho0 (alpha v(S0)^2 + v(S0)).
class FirstIntegral {
public:
    FirstIntegral(VelocityLaw law, double alpha, double S0, double rho0)
        : law_(std::move(law)), alpha_(alpha), S0_(S0), rho0_(rho0) {
        if (!(S0 >= 0.0)) throw DomainError("first integral needs S0 >= 0");
        if (!(rho0 > 0.0)) throw DomainError("first integral needs rho0 > 0");
        C0_ = rho0 * mobility_weight(law_, alpha, S0);
    }

    double operator()(double S) const {
        if (S < S0_) throw DomainError("f(S) is defined for S >= S0");
        return S * S - S0_ * S0_ - 2.0 * C0_ * inverse_mobility_integral(law_, alpha_, S0_, S);
    }

    /// f(b) from a known value f(a), integrating only over [a, b].
    double advance(double a, double fa, double b) const {
        return fa + (b - a) * (b + a) - 2.0 * C0_ * inverse_mobility_integral(law_, alpha_, a, b);
    }

    /// f'(S) = 2S - 2 C0 / (v (alpha v + 1))
    double d1(double S) const { return 2.0 * S - 2.0 * C0_ / mobility_weight(law_, alpha_, S); }

    /// f''(S) = 2 + 2 C0 w'(S) / w(S)^2 with w' = (2 alpha v + 1) v'
    double d2(double S) const {
        const double v = velocity(law_, S);
        const double w = alpha_ * v * v + v;
        const double dw = (2.0 * alpha_ * v + 1.0) * velocity_derivative(law_, S);
        return 2.0 + 2.0 * C0_ * dw / (w * w);
    }

    double C0() const noexcept { return C0_; }
    double S0() const noexcept { return S0_; }
    double rho0() const noexcept { return rho0_; }
    double alpha() const noexcept { return alpha_; }
    const VelocityLaw& law() const noexcept { return law_; }

private:
    VelocityLaw law_;
    double alpha_;
    double S0_;
    double rho0_;
    double C0_ = 0.0;
};

inline double eval_f(const VelocityLaw& law, double alpha, double S0, double rho0, double S) {
    return FirstIntegral(law, alpha, S0, rho0)(S);
}

struct RootSearch {
    double cap_factor = 1e6;       // S_cap = cap_factor * max(1, S0)
    std::size_t scan_points = 256;  // sign scan inside every geometric bracket
};

/// Smallest root S_L > S0 of f. Brackets geometrically (S0 * 2^m), scanning
/// each bracket on a sub-grid so interior dips of f are not skipped, then
/// bisects to |f| <= 1e-12 S_L^2. Returns none when S_cap is reached.
inline std::optional<double> find_SL(const FirstIntegral& f, const RootSearch& opts = {}) {
    const double S0 = f.S0();
    if (!(S0 > f.rho0())) throw DomainError("find_SL needs S0 > rho0 (signal minimum)");
    const double cap = opts.cap_factor * std::max(1.0, S0);

    double lo = S0, flo = 0.0;
    double hi = 0.0, fhi = 0.0;
    bool bracketed = false;
    for (double top = 2.0 * S0; !bracketed; top *= 2.0) {
        const double end = std::min(top, cap);
        const double start = lo;
        for (std::size_t k = 1; k <= opts.scan_points; ++k) {
            const double s = start + (end - start) * static_cast<double>(k) / static_cast<double>(opts.scan_points);
            const double fs = f.advance(lo, flo, s);
            if (fs < 0.0) {
                hi = s;
                fhi = fs;
                bracketed = true;
                break;
            }
            lo = s;
            flo = fs;
        }
        if (!bracketed && end >= cap) return std::nullopt;
    }

    // bisection keeps f(lo) >= 0 > f(hi)
    double mid = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        mid = 0.5 * (lo + hi);
        const double fm = f.advance(lo, flo, mid);
        if (std::abs(fm) <= 1e-12 * mid * mid || hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi) break;
        if (fm >= 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
            fhi = fm;
        }
    }
    (void)fhi;
    return mid;
}

inline std::optional<double> find_SL(const VelocityLaw& law, double alpha, double S0, double rho0) {
    return find_SL(FirstIntegral(law, alpha, S0, rho0));
}

/// Half period [0, L_half] of a periodic steady state: S rises monotonically
/// from its minimum S0 at x = 0 to its maximum S_L at x = L_half.
struct SteadyProfile {
    double S0;
    double rho0;
    double C0;
    double S_L;
    double dS;
    std::vector<double> S;
    std::vector<double> x;
    std::vector<double> rho;
    double L_half;
    double M;  // ∫_0^{L_half} S dx (= ∫ rho dx over the half period)

    /// Linear interpolation of S and rho at position x in [0, L_half].
    std::pair<double, double> at(double xq) const {
        if (xq <= x.front()) return {S.front(), rho.front()};
        if (xq >= x.back()) return {S.back(), rho.back()};
        const auto it = std::upper_bound(x.begin(), x.end(), xq);
        const auto j = static_cast<std::size_t>(it - x.begin());
        const double t = (xq - x[j - 1]) / (x[j] - x[j - 1]);
        return {S[j - 1] + t * (S[j] - S[j - 1]), rho[j - 1] + t * (rho[j] - rho[j - 1])};
    }
};

/// Builds the profile on S_j = S0 + j dS. The 1/sqrt(f) singularities at both
/// ends are removed by integrating by parts over the first and last panels:
///   ∫ dS/√f = [2√f/f'] + ∫ 2 f'' √f / f'^2 dS,
/// with the remaining smooth integral taken by the trapezoidal rule.
/// dS <= 0 selects (S_L - S0)/2000.
inline SteadyProfile profile(const VelocityLaw& law, double alpha, double S0, double rho0, double Ds, double dS = 0.0) {
    if (!(Ds > 0.0)) throw DomainError("profile needs Ds > 0");
    const FirstIntegral f(law, alpha, S0, rho0);
    const auto root = find_SL(f);
    if (!root)
        throw NoFinitePeriod("no finite second root of f for S0=" + format_real(S0) + ", rho0=" + format_real(rho0));
    const double SL = *root;
    if (dS <= 0.0) dS = (SL - S0) / 2000.0;
    if (dS > (SL - S0) / 100.0) throw DomainError("profile needs at least 100 signal steps");

    SteadyProfile p{};
    p.S0 = S0;
    p.rho0 = rho0;
    p.C0 = f.C0();
    p.S_L = SL;
    p.dS = dS;
    const double sq = std::sqrt(Ds);

    // nodes strictly below S_L with f > 0
    std::vector<double> fs{0.0};
    p.S.push_back(S0);
    for (std::size_t j = 1;; ++j) {
        const double s = S0 + static_cast<double>(j) * dS;
        if (s >= SL) break;
        const double fv = f.advance(p.S.back(), fs.back(), s);
        if (!(fv > 0.0)) break;
        p.S.push_back(s);
        fs.push_back(fv);
    }
    const std::size_t J = p.S.size() - 1;
    if (J < 1) throw DomainError("profile: step too coarse for the root bracket");

    p.x.assign(J + 1, 0.0);
    std::vector<double> m(J + 1, 0.0);  // cumulative ∫ S dx
    {
        const double s1 = p.S[1], r1 = std::sqrt(fs[1]);
        const double d1 = f.d1(s1), d2 = f.d2(s1);
        p.x[1] = sq * (2.0 * r1 / d1 + d2 * r1 / (d1 * d1) * dS);
        m[1] = sq * (2.0 * s1 * r1 / d1 + dS * r1 * (s1 * d2 / (d1 * d1) - 1.0 / d1));
    }
    for (std::size_t j = 2; j <= J; ++j) {
        const double a = 1.0 / std::sqrt(fs[j]), b = 1.0 / std::sqrt(fs[j - 1]);
        p.x[j] = p.x[j - 1] + sq * 0.5 * dS * (a + b);
        m[j] = m[j - 1] + sq * 0.5 * dS * (p.S[j] * a + p.S[j - 1] * b);
    }

    // closing panel [S_J, S_L]
    double xL = p.x[J], mL = m[J];
    {
        const double a = p.S[J], ra = std::sqrt(fs[J]);
        const double d1 = f.d1(a), d2 = f.d2(a);
        const double h = SL - a;
        if (d1 < 0.0) {
            xL += sq * (-2.0 * ra / d1 + h * ra * d2 / (d1 * d1));
            mL += sq * (-2.0 * a * ra / d1 - h * ra * (1.0 / d1 - a * d2 / (d1 * d1)));
        }
    }
    p.S.push_back(SL);
    p.x.push_back(xL);
    p.L_half = xL;
    p.M = mL;

    p.rho.resize(p.S.size());
    for (std::size_t j = 0; j < p.S.size(); ++j) p.rho[j] = p.C0 / mobility_weight(law, alpha, p.S[j]);
    return p;
}

struct ConcentrationVerdict {
    bool concentrating;
    std::string reason;
};

/// Sign of lim_{S->inf} S - C0 / (v(S) (alpha v(S) + 1)); a negative limit
/// lets the second root escape to infinity as C0 -> 0 (Dirac concentration).
inline ConcentrationVerdict concentration_check(const VelocityLaw& law, double alpha, double C0) {
    return std::visit(
        [&](const auto& l) -> ConcentrationVerdict {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, Rational>) {
                if (l.p > 1.0)
                    return {true, "rational law with p = " + format_real(l.p) +
                                      " > 1: S - C0 q S^p + O(1) -> -inf for every C0 > 0"};
                // p == 1: S - C0 (q S + 1 - alpha) + o(1)
                const double slope = 1.0 - C0 * l.q;
                const bool conc = slope < 0.0 || (slope == 0.0 && alpha < 1.0);
                return {conc, "rational law with p = 1 (borderline): limit of (1 - C0*q) S - C0 (1 - alpha); "
                              "concentration requires C0*q > 1 (C0*q = " +
                                  format_real(C0 * l.q) + ")"};
            } else if constexpr (std::is_same_v<T, Sigmoid>) {
                const double vinf = 1.0 - l.chi * std::numbers::pi / 2.0;
                return {false, "sigmoid law: v(inf) = 1 - chi*pi/2 = " + format_real(vinf) +
                                   " > 0, so S - C0/(v(alpha v + 1)) -> +inf"};
            } else {
                const double probes[] = {1e3, 1e4, 1e5};
                double g[3];
                for (int i = 0; i < 3; ++i) g[i] = probes[i] - C0 / mobility_weight(law, alpha, probes[i]);
                if (g[0] > g[1] && g[1] > g[2] && g[2] < 0.0)
                    return {true, "custom law: probe of S - C0/(v(alpha v + 1)) decreasing and negative at S=1e5"};
                if (g[0] < g[1] && g[1] < g[2] && g[2] > 0.0)
                    return {false, "custom law: probe of S - C0/(v(alpha v + 1)) increasing and positive at S=1e5"};
                throw Inconclusive("custom law: concentration probe at S in {1e3,1e4,1e5} has no monotone trend");
            }
        },
        law.variant());
}

/// Result of comparing a finite-volume steady state with the semi-analytic
/// profile rebuilt from its signal minimum.
struct SteadyComparison {
    bool applicable = false;  // false for a uniform (non-patterned) state
    double S0 = 0.0;
    double rho0 = 0.0;
    std::optional<SteadyProfile> profile;
    double linf_S = 0.0;  // relative to max |S_fv|
    double l1_S = 0.0;
    double linf_rho = 0.0;
    double l1_rho = 0.0;
    Field S_semi;
    Field rho_semi;

    explicit SteadyComparison(const Grid& g) : S_semi(g), rho_semi(g) {}
};

/// Reads (S0, rho0) at the minimum of S, rebuilds the profile, aligns its
/// peak with the (parabolically refined) FV peak and reports differences.
inline SteadyComparison verify_against_fv(const VelocityLaw& law, double alpha, double Ds, const Field& rho,
                                          const Field& S, double steady_residual, double dS = 0.0,
                                          double steady_threshold = 1e-9) {
    if (!(steady_residual < steady_threshold))
        throw NotSteady("finite-volume state not steady: residual " + format_real(steady_residual));
    const Grid& g = S.grid();
    SteadyComparison out(g);
    const std::size_t imin = S.argmin();
    out.S0 = S[imin];
    out.rho0 = rho[imin];
    if (S.max() - S.min() <= 1e-10 * S.max() || !(out.S0 > out.rho0)) return out;
    out.applicable = true;
    out.profile = profile(law, alpha, out.S0, out.rho0, Ds, dS);
    const SteadyProfile& p = *out.profile;

    const auto ip = static_cast<std::ptrdiff_t>(S.argmax());
    const double sm = S.at(ip - 1), sc = S.at(ip), spl = S.at(ip + 1);
    const double curv = sm - 2.0 * sc + spl;
    const double offset = curv < 0.0 ? 0.5 * (sm - spl) / curv : 0.0;
    const double x_peak = g.center(static_cast<std::size_t>(ip)) + offset * g.dx();

    const double L = g.length();
    const double period = 2.0 * p.L_half;
    double smax = 0, ssum = 0, rmax = 0, rsum = 0, ds_max = 0, ds_sum = 0, dr_max = 0, dr_sum = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        double d = std::fmod(std::abs(g.center(i) - x_peak), L);
        d = std::min(d, L - d);             // periodic distance to the peak
        d = std::fmod(d, period);
        const double xq = d <= p.L_half ? p.L_half - d : d - p.L_half;
        const auto [s_sa, r_sa] = p.at(xq);
        out.S_semi[i] = s_sa;
        out.rho_semi[i] = r_sa;
        smax = std::max(smax, std::abs(S[i]));
        ssum += std::abs(S[i]);
        rmax = std::max(rmax, std::abs(rho[i]));
        rsum += std::abs(rho[i]);
        ds_max = std::max(ds_max, std::abs(S[i] - s_sa));
        ds_sum += std::abs(S[i] - s_sa);
        dr_max = std::max(dr_max, std::abs(rho[i] - r_sa));
        dr_sum += std::abs(rho[i] - r_sa);
    }
    out.linf_S = ds_max / smax;
    out.l1_S = ds_sum / ssum;
    out.linf_rho = dr_max / rmax;
    out.l1_rho = dr_sum / rsum;
    return out;
}

struct HalfPeriodSample {
    double S0;
    double rho0;
    double L_half;
    double M;
};

/// Brute scan over (S0, rho0) pairs for the inverse problem (given L, M).
/// Pairs without a finite period are skipped.
inline std::vector<HalfPeriodSample> scan_half_periods(const VelocityLaw& law, double alpha, double Ds,
                                                       double S0_min, double S0_max, double rho_frac_min,
                                                       double rho_frac_max, std::size_t n) {
    std::vector<HalfPeriodSample> out;
    for (std::size_t a = 0; a < n; ++a) {
        const double S0 = S0_min + (S0_max - S0_min) * static_cast<double>(a) / static_cast<double>(std::max<std::size_t>(n - 1, 1));
        for (std::size_t b = 0; b < n; ++b) {
            const double frac = rho_frac_min + (rho_frac_max - rho_frac_min) * static_cast<double>(b) /
                                                   static_cast<double>(std::max<std::size_t>(n - 1, 1));
            const double rho0 = frac * S0;
            try {
                const auto p = profile(law, alpha, S0, rho0, Ds);
                out.push_back({S0, rho0, p.L_half, p.M});
            } catch (const NoFinitePeriod&) {
            }
        }
    }
    return out;
}

}  // namespace mechanotaxis
