#pragma once

#include "mechanotaxis/errors.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>

namespace mechanotaxis {

/// v(S) = 1 / (1 + q S^p)
struct Rational {
    double p;
    double q;
};

/// v(S) = 1 - chi * atan((S - 1) / delta)
struct Sigmoid {
    double chi;
    double delta;
};

/// User-supplied law. The derivative must be given explicitly.
struct Custom {
    std::function<double(double)> v;
    std::function<double(double)> dv;
    std::string name = "custom";
};

/// Equilibrium velocity as a function of the signal. Constructors validate
/// the parameters so that v > 0 for every admissible S >= 0.
class VelocityLaw {
public:
    using Variant = std::variant<Rational, Sigmoid, Custom>;

    static VelocityLaw rational(double p, double q) {
        // p = 1 is admitted so the concentration classifier can report its
        // borderline case; the figures use p > 1.
        if (!(p >= 1.0) || !std::isfinite(p)) throw DomainError("rational law needs p >= 1");
        if (!(q > 0.0) || !std::isfinite(q)) throw DomainError("rational law needs q > 0");
        return VelocityLaw(Rational{p, q});
    }

    static VelocityLaw sigmoid(double chi, double delta) {
        if (!(chi > 0.0)) throw DomainError("sigmoid law needs chi > 0");
        if (!(delta > 0.0)) throw DomainError("sigmoid law needs delta > 0");
        if (chi * std::numbers::pi / 2.0 >= 1.0)
            throw DomainError("sigmoid law needs chi*pi/2 < 1 so that v stays positive");
        return VelocityLaw(Sigmoid{chi, delta});
    }

    static VelocityLaw custom(std::function<double(double)> v, std::function<double(double)> dv,
                              std::string name = "custom") {
        if (!v || !dv) throw DomainError("custom law needs both v and dv");
        return VelocityLaw(Custom{std::move(v), std::move(dv), std::move(name)});
    }

    /// v ≡ c, handy for pure-diffusion checks.
    static VelocityLaw constant(double c) {
        if (!(c > 0.0)) throw DomainError("constant law needs c > 0");
        return custom([c](double) { return c; }, [](double) { return 0.0; }, "constant");
    }

    const Variant& variant() const noexcept { return law_; }

    std::string name() const {
        return std::visit(
            [](const auto& l) -> std::string {
                using T = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<T, Rational>) return "rational";
                else if constexpr (std::is_same_v<T, Sigmoid>) return "sigmoid";
                else return l.name;
            },
            law_);
    }

private:
    explicit VelocityLaw(Variant v) : law_(std::move(v)) {}
    Variant law_;
};

/// alpha = m*lambda (0: strong friction, large: fast tumbling); D is the
/// macroscopic diffusion constant.
struct MobilityParams {
    double alpha = 1.0;
    double D = 1.0;

    void validate() const {
        if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw DomainError("alpha must be >= 0");
        if (!(D > 0.0) || !std::isfinite(D)) throw DomainError("D must be > 0");
    }
};

namespace detail {
inline void check_signal(double S) {
    if (!(S >= 0.0)) throw DomainError("velocity law evaluated at negative signal S=" + std::to_string(S));
}

inline double pow_fast(double S, double p) {
    if (p == 2.0) return S * S;
    if (p == 1.0) return S;
    return std::pow(S, p);
}
}  // namespace detail

inline double velocity(const VelocityLaw& law, double S) {
    detail::check_signal(S);
    return std::visit(
        [S](const auto& l) -> double {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, Rational>) return 1.0 / (1.0 + l.q * detail::pow_fast(S, l.p));
            else if constexpr (std::is_same_v<T, Sigmoid>) return 1.0 - l.chi * std::atan((S - 1.0) / l.delta);
            else return l.v(S);
        },
        law.variant());
}

inline double velocity_derivative(const VelocityLaw& law, double S) {
    detail::check_signal(S);
    return std::visit(
        [S](const auto& l) -> double {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, Rational>) {
                const double den = 1.0 + l.q * detail::pow_fast(S, l.p);
                const double sp1 = l.p == 1.0 ? 1.0 : detail::pow_fast(S, l.p - 1.0);
                return -l.p * l.q * sp1 / (den * den);
            } else if constexpr (std::is_same_v<T, Sigmoid>) {
                const double z = (S - 1.0) / l.delta;
                return -l.chi / (l.delta * (1.0 + z * z));
            } else {
                return l.dv(S);
            }
        },
        law.variant());
}

/// Mobility weight alpha*v^2 + v.
inline double mobility_weight(const VelocityLaw& law, double alpha, double S) {
    const double v = velocity(law, S);
    return alpha * v * v + v;
}

/// psi = ln(alpha*v(S)^2 + v(S)).
inline double log_mobility(const VelocityLaw& law, double alpha, double S) {
    return std::log(mobility_weight(law, alpha, S));
}

/// Integral of 1 / (alpha v(s)^2 + v(s)) over [S0, S1]. Closed form for the
/// rational law with p = 2, adaptive Gauss-Kronrod otherwise.
inline double inverse_mobility_integral(const VelocityLaw& law, double alpha, double S0, double S1) {
    detail::check_signal(S0);
    if (S0 > S1) throw DomainError("inverse_mobility_integral needs S0 <= S1");
    if (S0 == S1) return 0.0;

    if (const auto* r = std::get_if<Rational>(&law.variant()); r && r->p == 2.0) {
        const double q = r->q;
        const double dS = S1 - S0;
        const double cubes = dS * (S1 * S1 + S1 * S0 + S0 * S0);
        double result = (1.0 - alpha) * dS + q / 3.0 * cubes;
        if (alpha != 0.0) {
            const double k = std::sqrt(q / (1.0 + alpha));
            const double a = k * S1, b = k * S0;
            // atan(a) - atan(b) without cancellation (a, b >= 0)
            const double datan = std::atan((a - b) / (1.0 + a * b));
            result += alpha * alpha / q * k * datan;
        }
        return result;
    }

    auto integrand = [&](double s) { return 1.0 / mobility_weight(law, alpha, s); };
    double err = 0.0;
    return boost::math::quadrature::gauss_kronrod<double, 21>::integrate(integrand, S0, S1, 15, 1e-10, &err);
}

}  // namespace mechanotaxis
